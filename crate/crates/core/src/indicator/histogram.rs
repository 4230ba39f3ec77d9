use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simkernel::ScalarField;

/// Fixed-width histogram over `[lo, hi]`. Values outside the range are
/// clamped into the edge bins so counts always sum to the number of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    pub lo: T,
    pub hi: T,
    pub counts: Vec<u64>,
}

impl<T: Real> Histogram<T> {
    pub fn new(lo: T, hi: T, bin_count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(format!("histogram range needs lo < hi, got [{lo}, {hi}]")));
        }
        if bin_count < 2 {
            return Err(Error::config("histogram needs at least 2 bins"));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bin_count],
        })
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> T {
        (self.hi - self.lo) / T::lit(self.bin_count() as f64)
    }

    /// Bin for `x`, clamped; NaN lands in the lowest bin.
    pub fn bin_of(&self, x: T) -> usize {
        let last = self.bin_count() - 1;
        let pos = ((x - self.lo) / self.width()).floor();
        match pos.to_f64() {
            Some(p) if p >= last as f64 => last,
            Some(p) if p > 0.0 => p as usize,
            _ => 0,
        }
    }

    pub fn add(&mut self, x: T) {
        let b = self.bin_of(x);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, bin: usize) -> T {
        self.lo + self.width() * (T::lit(bin as f64) + T::lit(0.5))
    }
}

pub fn build_histogram<T: Real>(field: &ScalarField<T>, lo: T, hi: T, bin_count: usize) -> Result<Histogram<T>> {
    if field.is_empty() {
        return Err(Error::Empty("field"));
    }
    let mut h = Histogram::new(lo, hi, bin_count)?;
    for &x in field.values() {
        h.add(x);
    }
    Ok(h)
}

/// Histogram-peak check over a payload of little-endian `f64` values, as a
/// checker that only sees staged bytes would run it. Trailing bytes that do
/// not form a whole value are ignored.
pub fn check_le_bytes(
    bytes: &[u8],
    step_index: u64,
    threshold: f64,
    direction: Direction,
) -> Result<IndicatorResult<f64>> {
    let start = Instant::now();
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!("threshold {threshold} outside [0, 1]")));
    }
    if bytes.len() < 8 {
        return Err(Error::Empty("payload values"));
    }
    let mut h = Histogram::new(0.0, 1.0, 100)?;
    for chunk in bytes.chunks_exact(8) {
        h.add(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
    }
    let peak = peak_position(&h);
    Ok(IndicatorResult {
        step_index,
        peak_position: peak,
        qualified: direction.accepts(peak, threshold),
        check_cost: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Centre of the most populated bin; ties go to the lowest bin.
pub fn peak_position<T: Real>(h: &Histogram<T>) -> T {
    let mut best = 0;
    for (i, &c) in h.counts.iter().enumerate() {
        if c > h.counts[best] {
            best = i;
        }
    }
    h.bin_center(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

impl Direction {
    pub fn accepts<T: Real>(self, peak: T, threshold: T) -> bool {
        match self {
            Direction::AtLeast => peak >= threshold,
            Direction::AtMost => peak <= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorResult<T> {
    pub step_index: u64,
    pub peak_position: T,
    pub qualified: bool,
    /// Wall time spent deciding, milliseconds.
    pub check_cost: f64,
}

/// Histogram-peak check with the default binning: 100 bins over `[0, 1]`.
pub fn check<T: Real>(
    field: &ScalarField<T>,
    step_index: u64,
    threshold: T,
    direction: Direction,
) -> Result<IndicatorResult<T>> {
    check_with(field, step_index, T::zero(), T::one(), 100, threshold, direction)
}

pub fn check_with<T: Real>(
    field: &ScalarField<T>,
    step_index: u64,
    lo: T,
    hi: T,
    bin_count: usize,
    threshold: T,
    direction: Direction,
) -> Result<IndicatorResult<T>> {
    let start = Instant::now();
    if !(threshold >= lo && threshold <= hi) {
        return Err(Error::config(format!("threshold {threshold} outside [{lo}, {hi}]")));
    }
    let h = build_histogram(field, lo, hi, bin_count)?;
    let peak = peak_position(&h);
    Ok(IndicatorResult {
        step_index,
        peak_position: peak,
        qualified: direction.accepts(peak, threshold),
        check_cost: start.elapsed().as_secs_f64() * 1e3,
    })
}
