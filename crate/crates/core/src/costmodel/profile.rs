use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::StageCosts;

const MIB: f64 = 1024.0 * 1024.0;

/// `fixed_ms + ms_per_mib * size_in_MiB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineCost {
    pub fixed_ms: f64,
    pub ms_per_mib: f64,
}

impl AffineCost {
    pub const fn new(fixed_ms: f64, ms_per_mib: f64) -> Self {
        Self { fixed_ms, ms_per_mib }
    }

    pub fn at(&self, size_bytes: u64) -> f64 {
        self.fixed_ms + self.ms_per_mib * size_bytes as f64 / MIB
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = self.fixed_ms.is_finite() && self.ms_per_mib.is_finite() && self.fixed_ms >= 0.0 && self.ms_per_mib >= 0.0;
        if !ok {
            return Err(Error::config(format!(
                "{what} cost must have finite non-negative coefficients, got {self:?}"
            )));
        }
        Ok(())
    }
}

// Staging, trigger and pool parameters belong to the platform, so both
// presets share them.
const STAGING_IO: AffineCost = AffineCost::new(20.5, 1.26);
const TRIGGER_LATENCY_MS: f64 = 43.1;
const POOL_SIZE: usize = 3;
const SLOWDOWN_FACTOR: f64 = 1.064;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    /// Generation is the bottleneck.
    A,
    /// Generation is cheap relative to staging and analysis.
    B,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::A, Preset::B];

    pub fn profile(self) -> CostProfile {
        match self {
            Preset::A => CostProfile {
                gen: AffineCost::new(400.0, 0.6),
                check: AffineCost::new(2.07, 0.72),
                io: STAGING_IO,
                analysis: AffineCost::new(128.7, 0.106),
                trigger_latency_ms: TRIGGER_LATENCY_MS,
                pool_size: POOL_SIZE,
                slowdown_factor: SLOWDOWN_FACTOR,
            },
            Preset::B => CostProfile {
                gen: AffineCost::new(17.9, 0.91),
                check: AffineCost::new(29.5, 0.666),
                io: STAGING_IO,
                analysis: AffineCost::new(129.2, 0.55),
                trigger_latency_ms: TRIGGER_LATENCY_MS,
                pool_size: POOL_SIZE,
                slowdown_factor: SLOWDOWN_FACTOR,
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::A => "A",
            Preset::B => "B",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Preset::A),
            "B" | "b" => Ok(Preset::B),
            other => Err(Error::Parse(format!("unknown preset {other:?}"))),
        }
    }
}

/// Stage costs as functions of payload size, plus the trigger and pool
/// parameters of the middleware pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostProfile {
    pub gen: AffineCost,
    pub check: AffineCost,
    pub io: AffineCost,
    pub analysis: AffineCost,
    pub trigger_latency_ms: f64,
    pub pool_size: usize,
    /// Per-excess-task compute penalty used in slowdown mode.
    pub slowdown_factor: f64,
}

impl CostProfile {
    pub fn at(&self, size_bytes: u64) -> StageCosts {
        StageCosts {
            gen_ms: self.gen.at(size_bytes),
            check_ms: self.check.at(size_bytes),
            io_ms: self.io.at(size_bytes),
            analysis_ms: self.analysis.at(size_bytes),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate("generation")?;
        self.check.validate("check")?;
        self.io.validate("io")?;
        self.analysis.validate("analysis")?;
        if !(self.trigger_latency_ms.is_finite() && self.trigger_latency_ms >= 0.0) {
            return Err(Error::config("trigger latency must be finite and non-negative"));
        }
        if self.pool_size == 0 {
            return Err(Error::config("pool size must be at least 1"));
        }
        if !(self.slowdown_factor.is_finite() && self.slowdown_factor >= 1.0) {
            return Err(Error::config("slowdown factor must be at least 1"));
        }
        Ok(())
    }

    /// Whether generation dominates staging plus analysis at `size_bytes`.
    pub fn generation_bound(&self, size_bytes: u64) -> bool {
        let c = self.at(size_bytes);
        c.gen_ms > c.io_ms + c.analysis_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID_MIB: [u64; 5] = [8, 16, 32, 64, 128];

    #[test]
    fn affine_evaluation() {
        let c = AffineCost::new(2.0, 0.5);
        assert_eq!(c.at(0), 2.0);
        assert_eq!(c.at(32 << 20), 18.0);
    }

    #[test]
    fn preset_orderings_hold_over_grid() {
        for mib in GRID_MIB {
            assert!(Preset::A.profile().generation_bound(mib << 20), "A at {mib} MiB");
            assert!(!Preset::B.profile().generation_bound(mib << 20), "B at {mib} MiB");
        }
    }

    #[test]
    fn presets_validate_and_parse() {
        for p in Preset::ALL {
            p.profile().validate().unwrap();
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
        }
        assert!("x".parse::<Preset>().is_err());
    }

    #[test]
    fn negative_coefficients_rejected() {
        let mut p = Preset::A.profile();
        p.io = AffineCost::new(-1.0, 0.0);
        assert!(p.validate().is_err());
    }
}
