use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::plan::TriggerPattern;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gen,
    Check,
    IoPut,
    IoGet,
    Trigger,
    Analysis,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Gen,
        Stage::Check,
        Stage::IoPut,
        Stage::IoGet,
        Stage::Trigger,
        Stage::Analysis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Check => "check",
            Stage::IoPut => "io_put",
            Stage::IoGet => "io_get",
            Stage::Trigger => "trigger",
            Stage::Analysis => "analysis",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown stage {s:?}")))
    }
}

/// What an event records. Check events carry the indicator verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Compute,
    Transfer,
    Dispatch,
    Qualified,
    Rejected,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Compute => "compute",
            EventType::Transfer => "transfer",
            EventType::Dispatch => "dispatch",
            EventType::Qualified => "qualified",
            EventType::Rejected => "rejected",
        }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::Gen | Stage::Analysis | Stage::Check => EventType::Compute,
            Stage::IoPut | Stage::IoGet => EventType::Transfer,
            Stage::Trigger => EventType::Dispatch,
        }
    }

    pub fn verdict(qualified: bool) -> Self {
        if qualified {
            EventType::Qualified
        } else {
            EventType::Rejected
        }
    }
}

impl FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            EventType::Compute,
            EventType::Transfer,
            EventType::Dispatch,
            EventType::Qualified,
            EventType::Rejected,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
        .ok_or_else(|| Error::Parse(format!("unknown event type {s:?}")))
    }
}

/// One timed span of work, in milliseconds since the run origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub event_type: EventType,
    pub stage: Stage,
    pub step: u64,
    pub task_kind: String,
    pub bytes: u64,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
}

impl Event {
    pub fn new(stage: Stage, step: u64, task_kind: impl Into<String>, bytes: u64, t_start_ms: f64, t_end_ms: f64) -> Self {
        Self {
            event_type: EventType::for_stage(stage),
            stage,
            step,
            task_kind: task_kind.into(),
            bytes,
            t_start_ms,
            t_end_ms,
        }
    }

    pub fn with_type(mut self, event_type: EventType) -> Self {
        self.event_type = event_type;
        self
    }

    pub fn duration_ms(&self) -> f64 {
        self.t_end_ms - self.t_start_ms
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    run_id: String,
    pattern: String,
    event_type: String,
    stage: String,
    step: u64,
    task_kind: String,
    bytes: u64,
    t_start_ms: f64,
    t_end_ms: f64,
}

/// Events of one run, ordered by start time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub run_id: String,
    pub pattern: TriggerPattern,
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn new(run_id: impl Into<String>, pattern: TriggerPattern, mut events: Vec<Event>) -> Self {
        events.sort_by(|a, b| {
            a.t_start_ms
                .total_cmp(&b.t_start_ms)
                .then(a.t_end_ms.total_cmp(&b.t_end_ms))
                .then(a.step.cmp(&b.step))
        });
        Self {
            run_id: run_id.into(),
            pattern,
            events,
        }
    }

    /// Span from the first generation start to the last event end.
    pub fn makespan_ms(&self) -> Result<f64> {
        let start = self
            .events
            .iter()
            .filter(|e| e.stage == Stage::Gen)
            .map(|e| e.t_start_ms)
            .min_by(f64::total_cmp)
            .ok_or(Error::Empty("event log"))?;
        let end = self.events.iter().map(|e| e.t_end_ms).max_by(f64::total_cmp).unwrap_or(start);
        Ok(end - start)
    }

    pub fn write_csv<W: Write>(logs: &[&EventLog], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for log in logs {
            for e in &log.events {
                w.serialize(EventRow {
                    run_id: log.run_id.clone(),
                    pattern: log.pattern.to_string(),
                    event_type: e.event_type.as_str().into(),
                    stage: e.stage.as_str().into(),
                    step: e.step,
                    task_kind: e.task_kind.clone(),
                    bytes: e.bytes,
                    t_start_ms: e.t_start_ms,
                    t_end_ms: e.t_end_ms,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io("<event log>", e))?;
        Ok(())
    }

    /// Parses a CSV written by [`EventLog::write_csv`]; one log per run id,
    /// in order of first appearance.
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<EventLog>> {
        // a run is keyed by id and pattern, so logs sharing an id stay apart
        let mut order: Vec<(String, TriggerPattern)> = Vec::new();
        let mut by_run: BTreeMap<(String, TriggerPattern), Vec<Event>> = BTreeMap::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let row: EventRow = row?;
            let pattern: TriggerPattern = row.pattern.parse()?;
            let event = Event {
                event_type: row.event_type.parse()?,
                stage: row.stage.parse()?,
                step: row.step,
                task_kind: row.task_kind,
                bytes: row.bytes,
                t_start_ms: row.t_start_ms,
                t_end_ms: row.t_end_ms,
            };
            let key = (row.run_id, pattern);
            if !by_run.contains_key(&key) {
                order.push(key.clone());
            }
            by_run.entry(key).or_default().push(event);
        }
        Ok(order
            .into_iter()
            .map(|key| {
                let events = by_run.remove(&key).expect("run recorded");
                let (id, pattern) = key;
                EventLog::new(id, pattern, events)
            })
            .collect())
    }
}

/// Mean duration per stage; stages that never occurred are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    pub means_ms: BTreeMap<Stage, f64>,
    pub counts: BTreeMap<Stage, u64>,
}

impl StageProfile {
    pub fn mean(&self, stage: Stage) -> Option<f64> {
        self.means_ms.get(&stage).copied()
    }

    /// Mean staging time per traversal, puts and gets together.
    pub fn io_mean(&self) -> Option<f64> {
        let n = self.count(Stage::IoPut) + self.count(Stage::IoGet);
        if n == 0 {
            return None;
        }
        let total = self.mean(Stage::IoPut).unwrap_or(0.0) * self.count(Stage::IoPut) as f64
            + self.mean(Stage::IoGet).unwrap_or(0.0) * self.count(Stage::IoGet) as f64;
        Some(total / n as f64)
    }

    pub fn count(&self, stage: Stage) -> u64 {
        self.counts.get(&stage).copied().unwrap_or(0)
    }
}

pub fn measure_stage_times(events: &[Event]) -> Result<StageProfile> {
    if events.is_empty() {
        return Err(Error::Empty("event log"));
    }
    let mut sums: BTreeMap<Stage, (f64, u64)> = BTreeMap::new();
    for e in events {
        let s = sums.entry(e.stage).or_insert((0.0, 0));
        s.0 += e.duration_ms();
        s.1 += 1;
    }
    Ok(StageProfile {
        means_ms: sums.iter().map(|(k, (t, n))| (*k, t / *n as f64)).collect(),
        counts: sums.iter().map(|(k, (_, n))| (*k, *n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(stage: Stage, step: u64, t0: f64, t1: f64) -> Event {
        Event::new(stage, step, "producer", 0, t0, t1)
    }

    #[test]
    fn constant_generation_mean() {
        let events: Vec<_> = (0..5).map(|i| ev(Stage::Gen, i + 1, i as f64 * 7.0, i as f64 * 7.0 + 7.0)).collect();
        let p = measure_stage_times(&events).unwrap();
        assert_eq!(p.mean(Stage::Gen), Some(7.0));
        assert_eq!(p.mean(Stage::Analysis), None);
        assert_eq!(p.io_mean(), None);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(measure_stage_times(&[]), Err(Error::Empty(_))));
        let log = EventLog::new("r", TriggerPattern::P, vec![]);
        assert!(log.makespan_ms().is_err());
    }

    #[test]
    fn io_mean_pools_puts_and_gets() {
        let events = vec![ev(Stage::IoPut, 1, 0.0, 2.0), ev(Stage::IoGet, 1, 2.0, 6.0), ev(Stage::IoGet, 2, 6.0, 12.0)];
        let p = measure_stage_times(&events).unwrap();
        assert_eq!(p.io_mean(), Some(4.0));
    }

    #[test]
    fn makespan_from_first_gen() {
        let log = EventLog::new(
            "r",
            TriggerPattern::C,
            vec![ev(Stage::Analysis, 1, 30.0, 45.5), ev(Stage::Gen, 1, 10.0, 20.0)],
        );
        assert_eq!(log.makespan_ms().unwrap(), 35.5);
        assert_eq!(log.events[0].stage, Stage::Gen);
    }

    #[test]
    fn csv_round_trip() {
        let a = EventLog::new(
            "run-1",
            TriggerPattern::M,
            vec![
                ev(Stage::Gen, 1, 0.0, 1.25),
                ev(Stage::Check, 1, 1.25, 2.0).with_type(EventType::Qualified),
                Event::new(Stage::Analysis, 1, "analysis-0", 64, 2.0, 3.0),
            ],
        );
        let b = EventLog::new("pred-run-2", TriggerPattern::P, vec![ev(Stage::Trigger, 3, 0.1, 0.30000000000000004)]);
        let mut buf = Vec::new();
        EventLog::write_csv(&[&a, &b], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run_id,pattern,event_type,stage,step,task_kind,bytes,t_start_ms,t_end_ms\n"));
        let back = EventLog::read_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn shared_run_id_keeps_patterns_apart() {
        let a = EventLog::new("rt", TriggerPattern::P, vec![ev(Stage::Gen, 1, 0.0, 1.0)]);
        let b = EventLog::new("rt", TriggerPattern::C, vec![ev(Stage::Gen, 1, 0.0, 2.0)]);
        let mut buf = Vec::new();
        EventLog::write_csv(&[&a, &b], &mut buf).unwrap();
        assert_eq!(EventLog::read_csv(&buf[..]).unwrap(), vec![a, b]);
    }
}
