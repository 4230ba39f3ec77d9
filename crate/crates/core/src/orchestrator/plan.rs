use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicator::QualifiedSchedule;

/// Where the data checking service runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TriggerPattern {
    /// Producer-responsible: the producer checks in line and ships only
    /// qualified steps.
    P,
    /// Consumer-responsible: every step ships; a persistent consumer checks.
    C,
    /// Middleware-responsible: every step ships; a middleware checker
    /// publishes qualified steps and fresh analysis tasks are triggered.
    M,
}

impl TriggerPattern {
    pub const ALL: [TriggerPattern; 3] = [TriggerPattern::P, TriggerPattern::C, TriggerPattern::M];

    pub fn as_str(self) -> &'static str {
        match self {
            TriggerPattern::P => "P",
            TriggerPattern::C => "C",
            TriggerPattern::M => "M",
        }
    }
}

impl fmt::Display for TriggerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriggerPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "P" | "p" => Ok(TriggerPattern::P),
            "C" | "c" => Ok(TriggerPattern::C),
            "M" | "m" => Ok(TriggerPattern::M),
            other => Err(Error::Parse(format!("unknown pattern {other:?}"))),
        }
    }
}

/// What happens when more triggered tasks are runnable than pool workers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Oversubscription {
    /// Excess tasks wait in FIFO order for a free worker.
    Queueing,
    /// Every task runs at once; with `R > W` runnable tasks each compute
    /// interval is stretched by `(R / W) * factor^(R - W)`.
    Slowdown { factor: f64 },
}

impl Default for Oversubscription {
    fn default() -> Self {
        Oversubscription::Queueing
    }
}

impl Oversubscription {
    /// Stretch applied to compute when `runnable` tasks share `workers`.
    pub fn stretch(&self, runnable: usize, workers: usize) -> f64 {
        match *self {
            Oversubscription::Slowdown { factor } if runnable > workers => {
                let excess = (runnable - workers) as i32;
                runnable as f64 / workers as f64 * factor.powi(excess)
            }
            _ => 1.0,
        }
    }
}

/// Per-step stage durations in milliseconds for one payload size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCosts {
    pub gen_ms: f64,
    pub check_ms: f64,
    /// One staging traversal (put, or a triggered task's fetch).
    pub io_ms: f64,
    pub analysis_ms: f64,
}

impl StageCosts {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gen_ms, self.check_ms, self.io_ms, self.analysis_ms];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::config(format!("stage costs must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Fully resolved description of one run, shared by the live runner and the
/// event simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub steps: u64,
    pub payload_bytes: u64,
    pub schedule: QualifiedSchedule,
    /// Analytics kinds triggered per qualified step.
    pub instances: u32,
    pub pool_size: usize,
    pub staging_capacity: usize,
    pub trigger_latency_ms: f64,
    pub oversubscription: Oversubscription,
    pub costs: StageCosts,
    pub seed: u64,
}

impl RunPlan {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.schedule.total_steps != self.steps {
            return Err(Error::config(format!(
                "schedule covers {} steps but the run has {}",
                self.schedule.total_steps, self.steps
            )));
        }
        if self.payload_bytes == 0 {
            return Err(Error::config("payload size must be positive"));
        }
        if self.instances == 0 {
            return Err(Error::config("at least one analytics instance is required"));
        }
        if self.pool_size == 0 {
            return Err(Error::config("worker pool has no workers for analytics"));
        }
        if self.staging_capacity == 0 {
            return Err(Error::config("staging capacity must be at least 1"));
        }
        if !(self.trigger_latency_ms.is_finite() && self.trigger_latency_ms >= 0.0) {
            return Err(Error::config("trigger latency must be finite and non-negative"));
        }
        if let Oversubscription::Slowdown { factor } = self.oversubscription {
            if !(factor.is_finite() && factor >= 1.0) {
                return Err(Error::config("slowdown factor must be at least 1"));
            }
        }
        self.costs.validate()
    }

    pub fn is_qualified(&self, step: u64) -> bool {
        self.schedule.is_qualified(step)
    }

    pub fn qualified_steps(&self) -> u64 {
        self.schedule.qualified_count()
    }

    pub fn analysis_kind(j: u32) -> String {
        format!("analysis-{j}")
    }
}
