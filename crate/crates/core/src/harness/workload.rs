use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costmodel::{CostProfile, Preset};
use crate::error::{Error, Result};
use crate::indicator::{QualifiedSchedule, ScheduleMode};
use crate::orchestrator::{DataSource, Oversubscription, RunPlan, TriggerPattern};

pub const MIB: u64 = 1 << 20;

/// Environment variable that caps every worker pool.
pub const THREADS_ENV: &str = "TRIGGERBENCH_THREADS";

/// How qualified steps are placed along the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Distribution {
    Even,
    Block { first: u64, last: u64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Even
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Even => f.write_str("even"),
            Distribution::Block { first, last } => write!(f, "block:{first}-{last}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    /// `even` or `block:<first>-<last>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "even" {
            return Ok(Distribution::Even);
        }
        let bad = || Error::Parse(format!("distribution {s:?} is neither `even` nor `block:<a>-<b>`"));
        let range = s.strip_prefix("block:").ok_or_else(bad)?;
        let (a, b) = range.split_once('-').ok_or_else(bad)?;
        Ok(Distribution::Block {
            first: a.trim().parse().map_err(|_| bad())?,
            last: b.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Oversubscription behaviour of the middleware pattern's worker pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    Queueing,
    /// Proportional slowdown using the profile's slowdown factor.
    Slowdown,
}

impl Default for PoolMode {
    fn default() -> Self {
        PoolMode::Queueing
    }
}

fn default_patterns() -> Vec<TriggerPattern> {
    TriggerPattern::ALL.to_vec()
}

fn default_steps() -> u64 {
    10
}

fn default_size() -> u64 {
    32 * MIB
}

fn default_one() -> u32 {
    1
}

fn default_reps() -> u32 {
    3
}

fn default_capacity() -> usize {
    4
}

fn default_seed() -> u64 {
    1
}

/// Full configuration of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default = "default_patterns")]
    pub patterns: Vec<TriggerPattern>,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_size")]
    pub size_bytes: u64,
    /// Percentage of qualified steps, 0 to 100.
    #[serde(default)]
    pub qualified_pct: f64,
    #[serde(default)]
    pub distribution: Distribution,
    #[serde(default = "default_one")]
    pub instances: u32,
    /// Worker pool size; the profile's size when absent.
    #[serde(default)]
    pub pool: Option<usize>,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    /// Replaces the preset's cost profile when present.
    #[serde(default)]
    pub profile: Option<CostProfile>,
    #[serde(default)]
    pub source: DataSource,
    #[serde(default)]
    pub pool_mode: PoolMode,
    #[serde(default = "default_capacity")]
    pub staging_capacity: usize,
    #[serde(default = "default_reps")]
    pub reps: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_preset() -> Preset {
    Preset::A
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            patterns: default_patterns(),
            steps: default_steps(),
            size_bytes: default_size(),
            qualified_pct: 0.0,
            distribution: Distribution::Even,
            instances: 1,
            pool: None,
            preset: Preset::A,
            profile: None,
            source: DataSource::Synthetic,
            pool_mode: PoolMode::Queueing,
            staging_capacity: default_capacity(),
            reps: default_reps(),
            seed: default_seed(),
        }
    }
}

impl WorkloadSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.reps == 0 {
            return Err(Error::config("reps must be at least 1"));
        }
        if !(0.0..=100.0).contains(&self.qualified_pct) {
            return Err(Error::config(format!(
                "qualified_pct {} outside [0, 100]",
                self.qualified_pct
            )));
        }
        if self.patterns.is_empty() {
            return Err(Error::config("at least one pattern is required"));
        }
        if self.pool == Some(0) {
            return Err(Error::config("pool must be at least 1"));
        }
        self.cost_profile().validate()?;
        self.schedule()?;
        Ok(())
    }

    pub fn cost_profile(&self) -> CostProfile {
        self.profile.unwrap_or_else(|| self.preset.profile())
    }

    pub fn schedule(&self) -> Result<QualifiedSchedule> {
        let mode = match self.distribution {
            Distribution::Even => ScheduleMode::Even {
                fraction: self.qualified_pct / 100.0,
            },
            Distribution::Block { first, last } => ScheduleMode::Block { first, last },
        };
        QualifiedSchedule::new(self.steps, mode)
    }

    /// Pool size after the global thread cap.
    pub fn pool_size(&self) -> usize {
        let wanted = self.pool.unwrap_or(self.cost_profile().pool_size);
        match thread_cap() {
            Some(cap) => wanted.min(cap),
            None => wanted,
        }
    }

    pub fn plan(&self) -> Result<RunPlan> {
        self.validate()?;
        let profile = self.cost_profile();
        let plan = RunPlan {
            steps: self.steps,
            payload_bytes: self.size_bytes,
            schedule: self.schedule()?,
            instances: self.instances,
            pool_size: self.pool_size(),
            staging_capacity: self.staging_capacity,
            trigger_latency_ms: profile.trigger_latency_ms,
            oversubscription: match self.pool_mode {
                PoolMode::Queueing => Oversubscription::Queueing,
                PoolMode::Slowdown => Oversubscription::Slowdown {
                    factor: profile.slowdown_factor,
                },
            },
            costs: profile.at(self.size_bytes),
            seed: self.seed,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// `TRIGGERBENCH_THREADS`, when set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}
