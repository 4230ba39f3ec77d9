use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::workload::{Distribution, PoolMode, WorkloadSpec, MIB};
use crate::costmodel::{predict, rank, PatternLabel, Recommendation, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::orchestrator::{run_pattern, TriggerPattern};

/// Live runs, DES predictions, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Live,
    Predict,
    Both,
}

impl Mode {
    pub fn includes(self, other: Mode) -> bool {
        self == other || self == Mode::Both
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Mode::Live),
            "predict" => Ok(Mode::Predict),
            "both" => Ok(Mode::Both),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Predict => "predict",
            Mode::Both => "both",
        })
    }
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub preset: String,
    pub pattern: TriggerPattern,
    pub qualified_pct: f64,
    pub size_bytes: u64,
    pub steps: u64,
    pub instances: u32,
    pub pool: usize,
    pub rep: u32,
    pub makespan_ms: f64,
    pub bytes_transferred: u64,
    pub analyses_completed: u64,
}

fn preset_name(spec: &WorkloadSpec) -> String {
    if spec.profile.is_some() {
        "custom".into()
    } else {
        spec.preset.to_string()
    }
}

fn record(spec: &WorkloadSpec, pattern: TriggerPattern, rep: u32, makespan_ms: f64, bytes: u64, analyses: u64) -> RunRecord {
    RunRecord {
        preset: preset_name(spec),
        pattern,
        qualified_pct: spec.qualified_pct,
        size_bytes: spec.size_bytes,
        steps: spec.steps,
        instances: spec.instances,
        pool: spec.pool_size(),
        rep,
        makespan_ms,
        bytes_transferred: bytes,
        analyses_completed: analyses,
    }
}

/// Runs every requested pattern `reps` times live (one record per run).
pub fn run_live(spec: &WorkloadSpec) -> Result<Vec<RunRecord>> {
    let plan = spec.plan()?;
    let mut out = Vec::new();
    for rep in 0..spec.reps {
        for &pattern in &spec.patterns {
            let id = format!("{}-{}-q{}-s{}-r{rep}", preset_name(spec), pattern, spec.qualified_pct, spec.size_bytes);
            let r = run_pattern(pattern, &plan, &spec.source, &id)?;
            out.push(record(spec, pattern, rep, r.makespan_ms, r.bytes_transferred, r.analyses_completed));
        }
    }
    Ok(out)
}

/// One predicted record per requested pattern (the model is deterministic).
pub fn run_predicted(spec: &WorkloadSpec) -> Result<Vec<RunRecord>> {
    let plan = spec.plan()?;
    spec.patterns
        .iter()
        .map(|&pattern| {
            let r = predict(&plan, pattern)?;
            Ok(record(spec, pattern, 0, r.makespan_ms, r.bytes_transferred, r.analyses_completed))
        })
        .collect()
}

pub fn run_mode(spec: &WorkloadSpec, mode: Mode) -> Result<Vec<RunRecord>> {
    match mode {
        Mode::Live => run_live(spec),
        Mode::Predict => run_predicted(spec),
        Mode::Both => Err(Error::config("run each mode separately")),
    }
}

/// Mean makespan per pattern, in `TriggerPattern` order.
pub fn pattern_means(records: &[RunRecord]) -> Vec<(TriggerPattern, f64)> {
    TriggerPattern::ALL
        .iter()
        .filter_map(|&p| {
            let v: Vec<f64> = records.iter().filter(|r| r.pattern == p).map(|r| r.makespan_ms).collect();
            (!v.is_empty()).then(|| (p, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect()
}

/// Predicted makespans of all three patterns, ranked.
pub fn recommend(spec: &WorkloadSpec, epsilon: f64) -> Result<Recommendation> {
    let plan = spec.plan()?;
    let scores = TriggerPattern::ALL
        .iter()
        .map(|&p| Ok((p, predict(&plan, p)?.makespan_ms)))
        .collect::<Result<Vec<_>>>()?;
    rank(&scores, epsilon)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Linear min-max map onto `[0, 1]`; all-equal inputs map to 0.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub qualified_pct: f64,
    pub size_bytes: u64,
    pub std_ms: f64,
    pub gray: f64,
    pub label: PatternLabel,
    pub mean_p_ms: Option<f64>,
    pub mean_c_ms: Option<f64>,
    pub mean_m_ms: Option<f64>,
}

impl GridCell {
    pub fn means(&self) -> Vec<(TriggerPattern, f64)> {
        [
            (TriggerPattern::P, self.mean_p_ms),
            (TriggerPattern::C, self.mean_c_ms),
            (TriggerPattern::M, self.mean_m_ms),
        ]
        .into_iter()
        .filter_map(|(p, m)| m.map(|m| (p, m)))
        .collect()
    }
}

/// Qualified-percentage × data-size grid of cross-pattern statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub cells: Vec<GridCell>,
}

impl SweepGrid {
    /// Builds cells from per-cell pattern means: population std dev across
    /// patterns, min-max gray over the grid, epsilon labels.
    pub fn from_means(cells: &[(f64, u64, Vec<(TriggerPattern, f64)>)], epsilon: f64) -> Result<Self> {
        let stds: Vec<f64> = cells
            .iter()
            .map(|c| population_std(&c.2.iter().map(|m| m.1).collect::<Vec<_>>()))
            .collect();
        let grays = min_max_normalize(&stds);
        let mut out = Vec::with_capacity(cells.len());
        for (i, (q, s, means)) in cells.iter().enumerate() {
            let get = |p| means.iter().find(|m| m.0 == p).map(|m| m.1);
            out.push(GridCell {
                qualified_pct: *q,
                size_bytes: *s,
                std_ms: stds[i],
                gray: grays[i],
                label: PatternLabel::for_cell(means, epsilon)?,
                mean_p_ms: get(TriggerPattern::P),
                mean_c_ms: get(TriggerPattern::C),
                mean_m_ms: get(TriggerPattern::M),
            });
        }
        Ok(Self { cells: out })
    }

    pub fn cell(&self, qualified_pct: f64, size_bytes: u64) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.qualified_pct == qualified_pct && c.size_bytes == size_bytes)
    }

    pub fn qualified_axis(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !v.contains(&c.qualified_pct) {
                v.push(c.qualified_pct);
            }
        }
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn size_axis(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.cells.iter().map(|c| c.size_bytes).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Axes and base workload of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: WorkloadSpec,
    pub qualified_pcts: Vec<f64>,
    pub sizes_bytes: Vec<u64>,
    pub epsilon: f64,
}

impl SweepSpec {
    /// Desk-scale default: q in {0, 20, ..., 100} %, S in {8, ..., 128} MiB.
    pub fn default_grid(base: WorkloadSpec) -> Self {
        Self {
            base,
            qualified_pcts: vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
            sizes_bytes: [8, 16, 32, 64, 128].iter().map(|m| m * MIB).collect(),
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn cell_spec(&self, qualified_pct: f64, size_bytes: u64) -> WorkloadSpec {
        WorkloadSpec {
            qualified_pct,
            size_bytes,
            ..self.base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub qualified_pct: f64,
    pub size_bytes: u64,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    pub grid: SweepGrid,
    pub failures: Vec<CellFailure>,
}

/// Runs every cell in order; a failing cell is recorded and skipped.
pub fn run_sweep(sweep: &SweepSpec, mode: Mode) -> Result<SweepResult> {
    run_sweep_with(sweep, mode, |_, _| {})
}

/// As [`run_sweep`], calling `progress(done, total)` after each cell.
pub fn run_sweep_with(sweep: &SweepSpec, mode: Mode, mut progress: impl FnMut(usize, usize)) -> Result<SweepResult> {
    sweep.base.validate()?;
    if sweep.qualified_pcts.is_empty() || sweep.sizes_bytes.is_empty() {
        return Err(Error::Empty("sweep axes"));
    }
    let total = sweep.qualified_pcts.len() * sweep.sizes_bytes.len();
    let mut records = Vec::new();
    let mut means = Vec::new();
    let mut failures = Vec::new();
    for &q in &sweep.qualified_pcts {
        for &s in &sweep.sizes_bytes {
            match run_mode(&sweep.cell_spec(q, s), mode) {
                Ok(rs) => {
                    means.push((q, s, pattern_means(&rs)));
                    records.extend(rs);
                }
                Err(e) => failures.push(CellFailure {
                    qualified_pct: q,
                    size_bytes: s,
                    diagnostic: e.to_string(),
                }),
            }
            progress(means.len() + failures.len(), total);
        }
    }
    Ok(SweepResult {
        records,
        grid: SweepGrid::from_means(&means, sweep.epsilon)?,
        failures,
    })
}

/// One bar of an experiment series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: String,
    pub pattern: TriggerPattern,
    pub mean_ms: f64,
}

fn series_of(x: &str, records: &[RunRecord]) -> Vec<SeriesPoint> {
    pattern_means(records)
        .into_iter()
        .map(|(pattern, mean_ms)| SeriesPoint {
            x: x.to_string(),
            pattern,
            mean_ms,
        })
        .collect()
}

/// Makespan per pattern as the number of analytics kinds per qualified
/// step grows. The base normally uses slowdown mode.
pub fn run_analytics_count_experiment(base: &WorkloadSpec, k_values: &[u32], mode: Mode) -> Result<Vec<SeriesPoint>> {
    let mut out = Vec::new();
    for &k in k_values {
        let spec = WorkloadSpec {
            instances: k,
            ..base.clone()
        };
        out.extend(series_of(&k.to_string(), &run_mode(&spec, mode)?));
    }
    Ok(out)
}

/// Makespan per pattern with the qualified steps packed into each block.
pub fn run_distribution_experiment(base: &WorkloadSpec, blocks: &[(u64, u64)], mode: Mode) -> Result<Vec<SeriesPoint>> {
    let mut out = Vec::new();
    for &(first, last) in blocks {
        let spec = WorkloadSpec {
            distribution: Distribution::Block { first, last },
            ..base.clone()
        };
        out.extend(series_of(&format!("{first}-{last}"), &run_mode(&spec, mode)?));
    }
    Ok(out)
}

/// The five consecutive blocks of a 25-step run.
pub fn default_blocks() -> Vec<(u64, u64)> {
    (0..5).map(|i| (5 * i + 1, 5 * i + 5)).collect()
}

/// Base workload for the analytics-count experiment: preset B, all steps
/// qualified, smallest size, slowdown mode.
pub fn analytics_count_base() -> WorkloadSpec {
    WorkloadSpec {
        preset: crate::costmodel::Preset::B,
        steps: 13,
        size_bytes: 8 * MIB,
        qualified_pct: 100.0,
        pool_mode: PoolMode::Slowdown,
        ..WorkloadSpec::default()
    }
}

/// Base workload for the distribution experiment: preset B, 25 steps, 20 %
/// qualified at the desk analog of 128 MB.
pub fn distribution_base() -> WorkloadSpec {
    WorkloadSpec {
        preset: crate::costmodel::Preset::B,
        steps: 25,
        size_bytes: 32 * MIB,
        qualified_pct: 20.0,
        ..WorkloadSpec::default()
    }
}
