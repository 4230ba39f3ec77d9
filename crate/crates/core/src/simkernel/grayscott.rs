//! Two-species Gray-Scott reaction-diffusion on a periodic 3D grid.
//!
//! Explicit Euler in time, 7-point stencil in space. The Laplacian is the
//! neighbour mean minus the centre value, so the explicit scheme is stable
//! while `dt * max(Du, Dv) < 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field::{Dims, ScalarField};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrayScottParams<T> {
    pub du: T,
    pub dv: T,
    pub feed: T,
    pub kill: T,
    pub dt: T,
    pub noise_amplitude: T,
}

impl<T: Real> Default for GrayScottParams<T> {
    fn default() -> Self {
        Self {
            du: T::lit(0.2),
            dv: T::lit(0.1),
            feed: T::lit(0.02),
            kill: T::lit(0.048),
            dt: T::lit(2.0),
            noise_amplitude: T::lit(1e-7),
        }
    }
}

impl<T: Real> GrayScottParams<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let all = [self.du, self.dv, self.feed, self.kill, self.dt, self.noise_amplitude];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("Gray-Scott parameters must be finite"));
        }
        if self.dt <= zero {
            return Err(Error::config("dt must be positive"));
        }
        if self.du < zero || self.dv < zero || self.feed < zero || self.kill < zero {
            return Err(Error::config("diffusion, feed and kill rates must be non-negative"));
        }
        if self.noise_amplitude < zero {
            return Err(Error::config("noise amplitude must be non-negative"));
        }
        if self.dt * self.du.max(self.dv) >= T::one() {
            return Err(Error::config(format!(
                "unstable time step: dt * max(Du, Dv) = {} must be < 1",
                self.dt * self.du.max(self.dv)
            )));
        }
        Ok(())
    }
}

/// Half-open box of cells `[lo, hi)` that receives the initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl SeedBox {
    pub fn empty() -> Self {
        Self {
            lo: [0; 3],
            hi: [0; 3],
        }
    }

    /// Cube of edge `edge` centred in `dims`.
    pub fn centered(dims: Dims, edge: usize) -> Self {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            let e = edge.min(dims[a]);
            lo[a] = (dims[a] - e) / 2;
            hi[a] = lo[a] + e;
        }
        Self { lo, hi }
    }

    /// Default seed: a centred cube with edge one tenth of the smallest
    /// dimension, at least two cells.
    pub fn default_for(dims: Dims) -> Self {
        let edge = (dims.iter().copied().min().unwrap_or(0) / 10).max(2);
        Self::centered(dims, edge)
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn offset(&self, by: [usize; 3]) -> Self {
        let mut out = *self;
        for a in 0..3 {
            out.lo[a] += by[a];
            out.hi[a] += by[a];
        }
        out
    }

    fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let p = [x, y, z];
        (0..3).all(|a| self.lo[a] <= p[a] && p[a] < self.hi[a])
    }
}

/// Initial state: `u = 1`, `v = 0`, except `u = 0.25`, `v = 0.5` inside the seed box.
pub fn gs_init<T: Real>(
    dims: Dims,
    params: &GrayScottParams<T>,
    seed_box: SeedBox,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    params.validate()?;
    if !seed_box.is_empty() && (0..3).any(|a| seed_box.hi[a] > dims[a]) {
        return Err(Error::config(format!(
            "seed box {seed_box:?} lies outside grid {dims:?}"
        )));
    }
    let mut u = ScalarField::filled(dims, T::one())?;
    let mut v = ScalarField::filled(dims, T::zero())?;
    if !seed_box.is_empty() {
        for x in seed_box.lo[0]..seed_box.hi[0] {
            for y in seed_box.lo[1]..seed_box.hi[1] {
                for z in seed_box.lo[2]..seed_box.hi[2] {
                    debug_assert!(seed_box.contains(x, y, z));
                    u.set(x, y, z, T::lit(0.25));
                    v.set(x, y, z, T::lit(0.5));
                }
            }
        }
    }
    Ok((u, v))
}

/// One noiseless explicit-Euler step.
pub fn gs_step<T: Real>(
    u: &ScalarField<T>,
    v: &ScalarField<T>,
    params: &GrayScottParams<T>,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    let mut out_u = u.clone();
    let mut out_v = v.clone();
    step_into(u, v, &mut out_u, &mut out_v, params)?;
    if !(out_u.all_finite() && out_v.all_finite()) {
        return Err(Error::Divergence {
            step: 1,
            field: if out_u.all_finite() { "v" } else { "u" },
        });
    }
    Ok((out_u, out_v))
}

fn step_into<T: Real>(
    u: &ScalarField<T>,
    v: &ScalarField<T>,
    out_u: &mut ScalarField<T>,
    out_v: &mut ScalarField<T>,
    p: &GrayScottParams<T>,
) -> Result<()> {
    if u.dims() != v.dims() || out_u.dims() != u.dims() || out_v.dims() != u.dims() {
        return Err(Error::config("u and v must share dimensions"));
    }
    p.validate()?;
    let [nx, ny, nz] = u.dims();
    let sixth = T::one() / T::lit(6.0);
    let fk = p.feed + p.kill;
    let (us, vs) = (u.values(), v.values());
    let ou = out_u.values_mut();
    let ov = out_v.values_mut();
    let idx = |x: usize, y: usize, z: usize| (x * ny + y) * nz + z;
    for x in 0..nx {
        let (xm, xp) = ((x + nx - 1) % nx, (x + 1) % nx);
        for y in 0..ny {
            let (ym, yp) = ((y + ny - 1) % ny, (y + 1) % ny);
            for z in 0..nz {
                let (zm, zp) = ((z + nz - 1) % nz, (z + 1) % nz);
                let c = idx(x, y, z);
                let n = [
                    idx(xm, y, z),
                    idx(xp, y, z),
                    idx(x, ym, z),
                    idx(x, yp, z),
                    idx(x, y, zm),
                    idx(x, y, zp),
                ];
                let uc = us[c];
                let vc = vs[c];
                let lap_u = n.iter().fold(T::zero(), |acc, &i| acc + us[i]) * sixth - uc;
                let lap_v = n.iter().fold(T::zero(), |acc, &i| acc + vs[i]) * sixth - vc;
                let uvv = uc * vc * vc;
                let du = p.du * lap_u - uvv + p.feed * (T::one() - uc);
                let dv = p.dv * lap_v + uvv - fk * vc;
                ou[c] = uc + du * p.dt;
                ov[c] = vc + dv * p.dt;
            }
        }
    }
    Ok(())
}

/// Stateful stepper: owns both species, double buffers, and the noise source.
#[derive(Debug, Clone)]
pub struct GrayScott<T> {
    params: GrayScottParams<T>,
    u: ScalarField<T>,
    v: ScalarField<T>,
    scratch_u: ScalarField<T>,
    scratch_v: ScalarField<T>,
    rng: ChaCha8Rng,
    step: u64,
}

impl<T: Real> GrayScott<T> {
    pub fn new(dims: Dims, params: GrayScottParams<T>, seed_box: SeedBox, seed: u64) -> Result<Self> {
        let (u, v) = gs_init(dims, &params, seed_box)?;
        Ok(Self {
            params,
            scratch_u: u.clone(),
            scratch_v: v.clone(),
            u,
            v,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn u(&self) -> &ScalarField<T> {
        &self.u
    }

    pub fn v(&self) -> &ScalarField<T> {
        &self.v
    }

    pub fn params(&self) -> &GrayScottParams<T> {
        &self.params
    }

    /// Advances one step; uniform noise in `[-a, a]` is added to `u`.
    pub fn advance(&mut self) -> Result<()> {
        step_into(
            &self.u,
            &self.v,
            &mut self.scratch_u,
            &mut self.scratch_v,
            &self.params,
        )?;
        std::mem::swap(&mut self.u, &mut self.scratch_u);
        std::mem::swap(&mut self.v, &mut self.scratch_v);
        self.step += 1;
        let amp = self.params.noise_amplitude;
        if amp > T::zero() {
            let a = amp.to_f64().unwrap_or(0.0);
            for x in self.u.values_mut() {
                *x = *x + T::lit(self.rng.gen_range(-a..=a));
            }
        }
        if !self.u.all_finite() {
            return Err(Error::Divergence { step: self.step, field: "u" });
        }
        if !self.v.all_finite() {
            return Err(Error::Divergence { step: self.step, field: "v" });
        }
        Ok(())
    }

    pub fn advance_by(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.advance()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quiet(du: f64, dv: f64, feed: f64, kill: f64, dt: f64) -> GrayScottParams<f64> {
        GrayScottParams {
            du,
            dv,
            feed,
            kill,
            dt,
            noise_amplitude: 0.0,
        }
    }

    #[test]
    fn init_without_seed_is_uniform() {
        let (u, v) = gs_init([4, 4, 4], &GrayScottParams::<f64>::default(), SeedBox::empty()).unwrap();
        assert!(u.values().iter().all(|&x| x == 1.0));
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_counts_seeded_cells() {
        let dims = [8, 8, 8];
        let (u, v) = gs_init(dims, &quiet(0.2, 0.1, 0.02, 0.048, 1.0), SeedBox::centered(dims, 2)).unwrap();
        assert_eq!(v.values().iter().filter(|&&x| x == 0.5).count(), 8);
        assert_eq!(v.values().iter().filter(|&&x| x == 0.0).count(), 504);
        assert_eq!(u.values().iter().filter(|&&x| x == 0.25).count(), 8);
    }

    #[test]
    fn init_rejects_out_of_bounds_seed() {
        let seed = SeedBox { lo: [6, 6, 6], hi: [9, 9, 9] };
        let err = gs_init([8, 8, 8], &GrayScottParams::<f64>::default(), seed).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn stability_guard() {
        assert!(quiet(0.6, 0.1, 0.0, 0.0, 2.0).validate().is_err());
        assert!(quiet(0.2, 0.1, 0.0, 0.0, 0.0).validate().is_err());
        assert!(quiet(-0.1, 0.1, 0.0, 0.0, 1.0).validate().is_err());
        assert!(GrayScottParams::<f64>::default().validate().is_ok());
        assert!(GrayScottParams::<f32>::default().validate().is_ok());
    }

    #[test]
    fn all_rates_zero_is_identity_without_reaction() {
        let dims = [6, 5, 4];
        let p = quiet(0.0, 0.0, 0.0, 0.0, 1.0);
        let u = ScalarField::from_values(dims, (0..120).map(|i| (i as f64 * 0.37).sin().abs()).collect()).unwrap();
        let v = ScalarField::filled(dims, 0.0).unwrap();
        let (u2, v2) = gs_step(&u, &v, &p).unwrap();
        assert_eq!(u, u2);
        assert_eq!(v, v2);
    }

    #[test]
    fn all_rates_zero_conserves_u_plus_v() {
        // the reaction term moves mass from u to v but never creates it
        let dims = [6, 5, 4];
        let p = quiet(0.0, 0.0, 0.0, 0.0, 1.0);
        let (u, v) = gs_init(dims, &p, SeedBox::centered(dims, 2)).unwrap();
        let (u2, v2) = gs_step(&u, &v, &p).unwrap();
        for i in 0..u.len() {
            let before = u.values()[i] + v.values()[i];
            let after = u2.values()[i] + v2.values()[i];
            assert!((before - after).abs() < 1e-15);
        }
    }

    #[test]
    fn feed_only_growth() {
        let u = ScalarField::filled([3, 3, 3], 0.5).unwrap();
        let v = ScalarField::filled([3, 3, 3], 0.0).unwrap();
        let (u2, _) = gs_step(&u, &v, &quiet(0.0, 0.1, 0.04, 0.0, 1.0)).unwrap();
        for &x in u2.values() {
            assert!((x - 0.52).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_v_stays_zero() {
        let mut sim = GrayScott::new([6, 6, 6], quiet(0.2, 0.1, 0.02, 0.048, 1.0), SeedBox::empty(), 1).unwrap();
        sim.advance_by(50).unwrap();
        assert!(sim.v().values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_names_step() {
        let u = ScalarField::filled([2, 2, 2], f64::MAX).unwrap();
        let v = ScalarField::filled([2, 2, 2], f64::MAX).unwrap();
        let err = gs_step(&u, &v, &quiet(0.0, 0.0, 0.1, 0.1, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn f32_runs() {
        let mut sim = GrayScott::<f32>::new([8, 8, 8], GrayScottParams::default(), SeedBox::default_for([8, 8, 8]), 3).unwrap();
        sim.advance_by(20).unwrap();
        assert!(sim.u().all_finite());
    }

    #[test]
    fn default_preset_stays_bounded_for_2000_steps() {
        let dims = [20, 20, 20];
        let mut sim = GrayScott::<f64>::new(dims, GrayScottParams::default(), SeedBox::default_for(dims), 9).unwrap();
        for _ in 0..2000 {
            sim.advance().unwrap();
            let (ulo, uhi) = sim.u().min_max();
            let (vlo, vhi) = sim.v().min_max();
            assert!(ulo >= -0.1 && uhi <= 1.5 && vlo >= -0.1 && vhi <= 1.5, "step {}", sim.step_count());
        }
    }

    proptest! {
        #[test]
        fn reaction_free_decay_matches_closed_form(
            u0 in prop::collection::vec(0.0f64..1.0, 27),
            feed in 0.0f64..0.1,
            dt in 0.1f64..2.0,
            n in 1u32..200,
        ) {
            let dims = [3, 3, 3];
            let p = quiet(0.0, 0.0, feed, 0.06, dt);
            let mut u = ScalarField::from_values(dims, u0.clone()).unwrap();
            let mut v = ScalarField::filled(dims, 0.0).unwrap();
            for _ in 0..n {
                (u, v) = gs_step(&u, &v, &p).unwrap();
            }
            let decay = (1.0 - feed * dt).powi(n as i32);
            for (got, start) in u.values().iter().zip(&u0) {
                let want = 1.0 - (1.0 - start) * decay;
                prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300), "{got} vs {want}");
            }
        }

        #[test]
        fn stepping_commutes_with_periodic_shift(
            dx in 0usize..7, dy in 0usize..6, dz in 0usize..5, steps in 1usize..6,
        ) {
            let dims = [7, 6, 5];
            let p = quiet(0.2, 0.1, 0.03, 0.05, 1.0);
            let seed = SeedBox { lo: [1, 1, 1], hi: [3, 4, 3] };
            let (mut u, mut v) = gs_init(dims, &p, seed).unwrap();
            let off = [dx as isize, dy as isize, dz as isize];
            let (mut su, mut sv) = (u.shifted(off), v.shifted(off));
            for _ in 0..steps {
                (u, v) = gs_step(&u, &v, &p).unwrap();
                (su, sv) = gs_step(&su, &sv, &p).unwrap();
            }
            prop_assert_eq!(u.shifted(off), su);
            prop_assert_eq!(v.shifted(off), sv);
        }
    }
}
