use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::histogram::IndicatorResult;
use crate::clock;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleMode {
    /// `round(fraction * total_steps)` qualified steps spread evenly, the
    /// last one on the final step.
    Even { fraction: f64 },
    /// Steps `first..=last` (1-based) are qualified.
    Block { first: u64, last: u64 },
}

/// Deterministic set of qualified steps, used in place of a real indicator
/// so the qualified-percentage axis of an experiment is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct QualifiedSchedule {
    pub total_steps: u64,
    pub mode: ScheduleMode,
    resolved: BTreeSet<u64>,
}

impl QualifiedSchedule {
    pub fn new(total_steps: u64, mode: ScheduleMode) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::Schedule("total_steps must be at least 1".into()));
        }
        let resolved = match mode {
            ScheduleMode::Even { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::Schedule(format!("fraction {fraction} outside [0, 1]")));
                }
                let m = (fraction * total_steps as f64).round() as u64;
                // j-th of m qualified steps sits at ceil(j * N / m)
                (1..=m).map(|j| (j * total_steps).div_ceil(m)).collect()
            }
            ScheduleMode::Block { first, last } => {
                if first == 0 || first > last || last > total_steps {
                    return Err(Error::Schedule(format!(
                        "block {first}..={last} not within 1..={total_steps}"
                    )));
                }
                (first..=last).collect()
            }
        };
        Ok(Self {
            total_steps,
            mode,
            resolved,
        })
    }

    pub fn even(total_steps: u64, fraction: f64) -> Result<Self> {
        Self::new(total_steps, ScheduleMode::Even { fraction })
    }

    pub fn block(total_steps: u64, first: u64, last: u64) -> Result<Self> {
        Self::new(total_steps, ScheduleMode::Block { first, last })
    }

    pub fn resolved(&self) -> &BTreeSet<u64> {
        &self.resolved
    }

    pub fn is_qualified(&self, step_index: u64) -> bool {
        self.resolved.contains(&step_index)
    }

    pub fn qualified_count(&self) -> u64 {
        self.resolved.len() as u64
    }
}

/// Scripted indicator: qualification comes from the schedule and the call
/// spends `emulated_cost_ms` to stand in for the histogram work. The
/// reported peak is 0 for qualified steps and 1 otherwise, i.e. what an
/// at-most check against a threshold in between would have seen.
pub fn scripted_check(
    schedule: &QualifiedSchedule,
    step_index: u64,
    emulated_cost_ms: f64,
) -> Result<IndicatorResult<f64>> {
    if step_index == 0 || step_index > schedule.total_steps {
        return Err(Error::Schedule(format!(
            "step {step_index} outside 1..={}",
            schedule.total_steps
        )));
    }
    let start = Instant::now();
    let qualified = schedule.is_qualified(step_index);
    clock::emulate_compute_since(start, emulated_cost_ms);
    Ok(IndicatorResult {
        step_index,
        peak_position: if qualified { 0.0 } else { 1.0 },
        qualified,
        check_cost: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(s: &QualifiedSchedule) -> Vec<u64> {
        s.resolved().iter().copied().collect()
    }

    #[test]
    fn twenty_percent_of_25_is_every_fifth() {
        assert_eq!(set(&QualifiedSchedule::even(25, 0.2).unwrap()), vec![5, 10, 15, 20, 25]);
    }

    #[test]
    fn uneven_spacing() {
        assert_eq!(set(&QualifiedSchedule::even(10, 0.6).unwrap()), vec![2, 4, 5, 7, 9, 10]);
        assert_eq!(set(&QualifiedSchedule::even(10, 0.2).unwrap()), vec![5, 10]);
    }

    #[test]
    fn boundaries() {
        assert!(QualifiedSchedule::even(25, 0.0).unwrap().resolved().is_empty());
        assert_eq!(set(&QualifiedSchedule::even(25, 1.0).unwrap()), (1..=25).collect::<Vec<_>>());
        assert!(QualifiedSchedule::even(25, 1.5).is_err());
        assert!(QualifiedSchedule::even(0, 0.5).is_err());
    }

    #[test]
    fn block_schedule() {
        let s = QualifiedSchedule::block(25, 21, 25).unwrap();
        assert_eq!(set(&s), vec![21, 22, 23, 24, 25]);
        for step in 1..=20 {
            assert!(!scripted_check(&s, step, 0.0).unwrap().qualified);
        }
        assert!(scripted_check(&s, 21, 0.0).unwrap().qualified);
        assert!(QualifiedSchedule::block(25, 0, 5).is_err());
        assert!(QualifiedSchedule::block(25, 6, 5).is_err());
        assert!(QualifiedSchedule::block(25, 21, 26).is_err());
    }

    #[test]
    fn scripted_step_out_of_range() {
        let s = QualifiedSchedule::even(5, 0.4).unwrap();
        assert!(scripted_check(&s, 0, 0.0).is_err());
        assert!(scripted_check(&s, 6, 0.0).is_err());
    }

    #[test]
    fn scripted_cost_spent() {
        let s = QualifiedSchedule::even(5, 0.4).unwrap();
        let r = scripted_check(&s, 5, 15.0).unwrap();
        assert!(r.qualified);
        assert!(r.check_cost >= 15.0);
    }

    #[test]
    fn grid_percentages_give_exact_counts() {
        for (i, p) in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0].into_iter().enumerate() {
            let s = QualifiedSchedule::even(25, p).unwrap();
            assert_eq!(s.qualified_count(), 5 * i as u64);
            let hits = (1..=25).filter(|&k| scripted_check(&s, k, 0.0).unwrap().qualified).count();
            assert_eq!(hits, 5 * i);
        }
    }

    proptest! {
        #[test]
        fn even_schedule_count_and_range(n in 1u64..500, p in 0.0f64..=1.0) {
            let s = QualifiedSchedule::even(n, p).unwrap();
            prop_assert_eq!(s.qualified_count(), (p * n as f64).round() as u64);
            prop_assert!(s.resolved().iter().all(|&k| (1..=n).contains(&k)));
            if s.qualified_count() > 0 {
                prop_assert!(s.is_qualified(n));
            }
        }

        #[test]
        fn even_schedule_gaps_differ_by_at_most_one(n in 1u64..300, p in 0.01f64..=1.0) {
            let s = set(&QualifiedSchedule::even(n, p).unwrap());
            let gaps: Vec<u64> = std::iter::once(0).chain(s.iter().copied()).collect::<Vec<_>>()
                .windows(2).map(|w| w[1] - w[0]).collect();
            if let (Some(lo), Some(hi)) = (gaps.iter().min(), gaps.iter().max()) {
                prop_assert!(hi - lo <= 1);
            }
        }
    }
}
