use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cell counts along x, y and z.
pub type Dims = [usize; 3];

/// Dense 3D grid of concentrations, row-major with z varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    dims: Dims,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn filled(dims: Dims, value: T) -> Result<Self> {
        let len = cell_count(dims)?;
        Ok(Self {
            dims,
            values: vec![value; len],
        })
    }

    pub fn from_values(dims: Dims, values: Vec<T>) -> Result<Self> {
        let len = cell_count(dims)?;
        if values.len() != len {
            return Err(Error::config(format!(
                "field of dims {dims:?} needs {len} values, got {}",
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Grid spacing; fixed at one.
    pub fn cell_size(&self) -> T {
        T::one()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.values[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.values[i] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (T, T) {
        self.values.iter().fold(
            (T::infinity(), T::neg_infinity()),
            |(lo, hi), &v| (lo.min(v), hi.max(v)),
        )
    }

    /// Cyclic shift by `offset` cells along each axis.
    pub fn shifted(&self, offset: [isize; 3]) -> Self {
        let [nx, ny, nz] = self.dims;
        let wrap = |i: usize, d: isize, n: usize| (i as isize + d).rem_euclid(n as isize) as usize;
        let mut out = self.clone();
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let v = self.get(x, y, z);
                    out.set(
                        wrap(x, offset[0], nx),
                        wrap(y, offset[1], ny),
                        wrap(z, offset[2], nz),
                        v,
                    );
                }
            }
        }
        out
    }

    /// Little-endian bytes of the raw values, in storage order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * T::BYTES);
        for &v in &self.values {
            v.write_le(&mut out);
        }
        out
    }

    /// Snapshot layout: three little-endian `u64` (nx, ny, nz) followed by
    /// the values as little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in self.dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &self.values {
            let x = v.to_f64().unwrap_or(f64::NAN);
            out.write_all(&x.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            input
                .read_exact(&mut word)
                .map_err(|e| Error::Parse(format!("snapshot header: {e}")))?;
            *d = u64::from_le_bytes(word) as usize;
        }
        let len = cell_count(dims)?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            input
                .read_exact(&mut word)
                .map_err(|e| Error::Parse(format!("snapshot body: {e}")))?;
            let x = f64::from_le_bytes(word);
            values.push(T::from_f64(x).ok_or_else(|| Error::Parse(format!("value {x}")))?);
        }
        Self::from_values(dims, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_snapshot(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_snapshot(std::io::BufReader::new(file))
    }
}

fn cell_count(dims: Dims) -> Result<usize> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::config(format!("field dims must be positive, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::config(format!("field dims {dims:?} overflow")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_matches_dims() {
        let f = ScalarField::<f64>::filled([3, 4, 5], 0.5).unwrap();
        assert_eq!(f.len(), 60);
        assert!(ScalarField::<f64>::from_values([2, 2, 2], vec![0.0; 7]).is_err());
        assert!(ScalarField::<f32>::filled([0, 2, 2], 0.0).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let values: Vec<f64> = (0..24).map(|i| i as f64 * 0.25 - 1.0).collect();
        let f = ScalarField::from_values([2, 3, 4], values).unwrap();
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        assert_eq!(buf.len(), 3 * 8 + 24 * 8);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        let back = ScalarField::<f64>::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn shift_wraps_around() {
        let mut f = ScalarField::<f64>::filled([4, 4, 4], 0.0).unwrap();
        f.set(3, 0, 1, 1.0);
        let g = f.shifted([1, -1, 2]);
        assert_eq!(g.get(0, 3, 3), 1.0);
        assert_eq!(g.values().iter().filter(|&&v| v == 1.0).count(), 1);
    }
}
