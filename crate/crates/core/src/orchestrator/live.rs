//! Live execution of the three patterns with real threads, staging and an
//! emulated-cost worker pool.

use std::collections::HashMap;
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::events::{measure_stage_times, Event, EventLog, EventType, Stage, StageProfile};
use super::plan::{RunPlan, TriggerPattern};
use super::pool::WorkerPool;
use crate::clock::{self, RunClock};
use crate::error::{Error, Result};
use crate::indicator::{check_le_bytes, scripted_check, Direction};
use crate::simkernel::{Dims, GrayScott, GrayScottParams, SeedBox, SyntheticProducer, SyntheticProducerSpec};
use crate::staging::{
    PayloadBytes, StagingConfig, StagingService, StepPayload, TaskTemplate, TopicSubscription, TransferModel,
    TriggerRegistry,
};

const VARIABLE: &str = "u";

/// Where step data and qualification verdicts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic payloads with the plan's emulated generation and check
    /// costs; the plan's schedule decides which steps qualify.
    Synthetic,
    /// A real Gray-Scott run; each output step is checked with the
    /// histogram-peak indicator on `u`.
    GrayScott {
        dims: Dims,
        params: GrayScottParams<f64>,
        /// Solver steps between two output steps.
        steps_per_output: u64,
        threshold: f64,
        direction: Direction,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic
    }
}

/// Outcome of one live run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_id: String,
    pub pattern: TriggerPattern,
    pub makespan_ms: f64,
    pub stages: StageProfile,
    pub bytes_transferred: u64,
    pub analyses_completed: u64,
    pub qualified_steps: u64,
    pub log: EventLog,
}

impl RunReport {
    /// `(step, analysis kind)` pairs that ran, sorted.
    pub fn executed_analyses(&self) -> Vec<(u64, String)> {
        let mut v: Vec<_> = self
            .log
            .events
            .iter()
            .filter(|e| e.stage == Stage::Analysis)
            .map(|e| (e.step, e.task_kind.clone()))
            .collect();
        v.sort();
        v
    }
}

pub fn run_pattern_p(plan: &RunPlan, run_id: &str) -> Result<RunReport> {
    run_pattern(TriggerPattern::P, plan, &DataSource::Synthetic, run_id)
}

pub fn run_pattern_c(plan: &RunPlan, run_id: &str) -> Result<RunReport> {
    run_pattern(TriggerPattern::C, plan, &DataSource::Synthetic, run_id)
}

pub fn run_pattern_m(plan: &RunPlan, run_id: &str) -> Result<RunReport> {
    run_pattern(TriggerPattern::M, plan, &DataSource::Synthetic, run_id)
}

/// Runs one pattern to completion and reports makespan from the first
/// generation start to the last event end.
pub fn run_pattern(pattern: TriggerPattern, plan: &RunPlan, source: &DataSource, run_id: &str) -> Result<RunReport> {
    plan.validate()?;
    let io = TransferModel::affine(plan.costs.io_ms, 0.0);
    let staging = StagingService::new(StagingConfig {
        capacity: plan.staging_capacity,
        put: io,
        // persistent consumers read the staged buffer in place; triggered
        // tasks pull their own copy
        get: if pattern == TriggerPattern::M { io } else { TransferModel::Shared },
    })?;
    let producer = Producer::new(plan, source)?;
    let checker = Checker::new(plan, source)?;
    let pool = WorkerPool::new(plan.pool_size, plan.oversubscription)?;
    let rec = Recorder::new();
    let ctx = Ctx {
        plan,
        pattern,
        staging: &staging,
        checker: &checker,
        pool: &pool,
        rec: &rec,
    };
    let outcome: Vec<Result<()>> = match pattern {
        TriggerPattern::P | TriggerPattern::C => thread::scope(|s| {
            let consumer = s.spawn(|| ctx.consume());
            let produced = ctx.produce(producer);
            vec![produced, join(consumer)]
        }),
        TriggerPattern::M => {
            let (registry, triggers) = TriggerRegistry::new();
            for j in 0..plan.instances {
                registry.subscribe(TopicSubscription {
                    topic_pattern: topic(),
                    action: TaskTemplate {
                        kind: RunPlan::analysis_kind(j),
                        workers: 1,
                    },
                })?;
            }
            let pending = Mutex::new(HashMap::new());
            thread::scope(|s| {
                let check = s.spawn(|| ctx.middleware_check(&registry, &pending));
                let launch = s.spawn(|| ctx.launch(triggers, &pending));
                let produced = ctx.produce(producer);
                vec![produced, join(check), join(launch)]
            })
        }
    };
    for r in outcome {
        r?;
    }
    let stats = staging.stats();
    let bytes_transferred = match pattern {
        TriggerPattern::M => stats.bytes_put + stats.bytes_got,
        _ => stats.bytes_put,
    };
    let events = rec.events.into_inner().unwrap();
    let qualified_steps = events
        .iter()
        .filter(|e| e.stage == Stage::Check && e.event_type == EventType::Qualified)
        .count() as u64;
    let analyses_completed = events.iter().filter(|e| e.stage == Stage::Analysis).count() as u64;
    let stages = measure_stage_times(&events)?;
    let log = EventLog::new(run_id, pattern, events);
    Ok(RunReport {
        run_id: run_id.to_string(),
        pattern,
        makespan_ms: log.makespan_ms()?,
        stages,
        bytes_transferred,
        analyses_completed,
        qualified_steps,
        log,
    })
}

fn join(h: thread::ScopedJoinHandle<'_, Result<()>>) -> Result<()> {
    h.join().unwrap_or_else(|_| Err(Error::config("worker thread panicked")))
}

fn topic() -> String {
    format!("qualified/{VARIABLE}")
}

struct Recorder {
    clock: RunClock,
    events: Mutex<Vec<Event>>,
}

impl Recorder {
    fn new() -> Self {
        Self {
            clock: RunClock::start(),
            events: Mutex::new(Vec::new()),
        }
    }

    fn span(&self, stage: Stage, step: u64, kind: &str, bytes: u64, start: Instant) -> Event {
        let end = Instant::now();
        Event::new(stage, step, kind, bytes, self.clock.at_ms(start), self.clock.at_ms(end))
    }

    fn push(&self, event: Event) {
        self.events.lock().unwrap().push(event);
    }
}

enum Producer {
    Synthetic { inner: SyntheticProducer, gen_ms: f64 },
    GrayScott { sim: Box<GrayScott<f64>>, steps_per_output: u64 },
}

impl Producer {
    fn new(plan: &RunPlan, source: &DataSource) -> Result<Self> {
        Ok(match source {
            DataSource::Synthetic => {
                let spec = SyntheticProducerSpec {
                    payload_bytes: plan.payload_bytes,
                    gen_cost_ms: plan.costs.gen_ms,
                    steps: plan.steps,
                };
                let inner = SyntheticProducer::new(spec, plan.seed, VARIABLE)?;
                inner.prewarm(plan.staging_capacity + 2);
                Producer::Synthetic {
                    inner,
                    gen_ms: plan.costs.gen_ms,
                }
            }
            DataSource::GrayScott {
                dims,
                params,
                steps_per_output,
                ..
            } => {
                if *steps_per_output == 0 {
                    return Err(Error::config("steps_per_output must be at least 1"));
                }
                let sim = GrayScott::new(*dims, *params, SeedBox::default_for(*dims), plan.seed)?;
                Producer::GrayScott {
                    sim: Box::new(sim),
                    steps_per_output: *steps_per_output,
                }
            }
        })
    }

    fn produce(&mut self, step: u64) -> Result<StepPayload> {
        match self {
            Producer::Synthetic { inner, gen_ms } => inner.produce_with_cost(step, *gen_ms),
            Producer::GrayScott { sim, steps_per_output } => {
                sim.advance_by(*steps_per_output)?;
                let bytes = PayloadBytes::from_vec(sim.u().to_le_bytes());
                Ok(StepPayload::new(VARIABLE, step, bytes))
            }
        }
    }
}

enum Checker {
    Scripted { check_ms: f64 },
    Histogram { threshold: f64, direction: Direction },
}

impl Checker {
    fn new(plan: &RunPlan, source: &DataSource) -> Result<Self> {
        Ok(match source {
            DataSource::Synthetic => Checker::Scripted {
                check_ms: plan.costs.check_ms,
            },
            DataSource::GrayScott {
                threshold, direction, ..
            } => {
                if !(0.0..=1.0).contains(threshold) {
                    return Err(Error::config(format!("threshold {threshold} outside [0, 1]")));
                }
                Checker::Histogram {
                    threshold: *threshold,
                    direction: *direction,
                }
            }
        })
    }

    fn qualified(&self, plan: &RunPlan, payload: &StepPayload) -> Result<bool> {
        Ok(match self {
            Checker::Scripted { check_ms } => scripted_check(&plan.schedule, payload.step_index, *check_ms)?.qualified,
            Checker::Histogram { threshold, direction } => {
                check_le_bytes(&payload.bytes, payload.step_index, *threshold, *direction)?.qualified
            }
        })
    }
}

struct Ctx<'a> {
    plan: &'a RunPlan,
    pattern: TriggerPattern,
    staging: &'a StagingService,
    checker: &'a Checker,
    pool: &'a WorkerPool,
    rec: &'a Recorder,
}

impl Ctx<'_> {
    fn check(&self, payload: &StepPayload, actor: &str) -> Result<bool> {
        let t = Instant::now();
        let qualified = self.checker.qualified(self.plan, payload)?;
        let event = self.rec.span(Stage::Check, payload.step_index, actor, 0, t);
        self.rec.push(event.with_type(EventType::verdict(qualified)));
        Ok(qualified)
    }

    /// Single producer pipeline; always ends the stream so readers finish.
    fn produce(&self, mut producer: Producer) -> Result<()> {
        let result = (|| {
            for step in 1..=self.plan.steps {
                let t = Instant::now();
                let payload = producer.produce(step)?;
                self.rec.push(self.rec.span(Stage::Gen, step, "producer", 0, t));
                let mut payload = payload;
                if self.pattern == TriggerPattern::P {
                    if !self.check(&payload, "producer")? {
                        continue;
                    }
                    payload = payload.with_hint(true);
                }
                let size = payload.size();
                let started = self.staging.put(payload)?;
                self.rec.push(self.rec.span(Stage::IoPut, step, "producer", size, started));
            }
            Ok(())
        })();
        self.staging.mark_end_of_stream(VARIABLE);
        result
    }

    /// Persistent consumer of P and C: analyses run serially.
    fn consume(&self) -> Result<()> {
        let only_qualified = self.pattern == TriggerPattern::P;
        let mut after = 0;
        let mut failure = None;
        while let Some(payload) = self.staging.get_next(VARIABLE, after, only_qualified)? {
            let step = payload.step_index;
            after = step;
            self.staging.release(VARIABLE, step);
            if failure.is_some() {
                continue;
            }
            let qualified = match self.pattern {
                TriggerPattern::C => match self.check(&payload, "consumer") {
                    Ok(q) => q,
                    Err(e) => {
                        // keep draining so the producer is never blocked
                        failure = Some(e);
                        continue;
                    }
                },
                _ => true,
            };
            drop(payload);
            if qualified {
                for j in 0..self.plan.instances {
                    let t = Instant::now();
                    clock::emulate_compute(self.plan.costs.analysis_ms);
                    let kind = RunPlan::analysis_kind(j);
                    self.rec.push(self.rec.span(Stage::Analysis, step, &kind, 0, t));
                }
            }
        }
        failure.map_or(Ok(()), Err)
    }

    /// Middleware checker: inspects steps in place, publishes qualified ones.
    fn middleware_check(&self, registry: &TriggerRegistry, pending: &Mutex<HashMap<u64, u32>>) -> Result<()> {
        let result = (|| {
            let mut after = 0;
            while let Some(payload) = self.staging.inspect_next(VARIABLE, after)? {
                let step = payload.step_index;
                after = step;
                let qualified = self.check(&payload, "checker");
                drop(payload);
                if qualified? {
                    pending.lock().unwrap().insert(step, self.plan.instances);
                    registry.publish(&topic(), step);
                } else {
                    self.staging.release(VARIABLE, step);
                }
            }
            Ok(())
        })();
        registry.close();
        if result.is_err() {
            // unblock the producer
            while let Ok(Some(p)) = self.staging.inspect_next(VARIABLE, 0) {
                self.staging.release(VARIABLE, p.step_index);
            }
        }
        result
    }

    /// Serial launcher: pays the trigger latency per instance, then starts a
    /// fresh task.
    fn launch(&self, triggers: std::sync::mpsc::Receiver<crate::staging::Trigger>, pending: &Mutex<HashMap<u64, u32>>) -> Result<()> {
        thread::scope(|s| {
            let mut tasks = Vec::new();
            for trig in triggers {
                let t = Instant::now();
                clock::emulate_compute(self.plan.trigger_latency_ms);
                self.rec.push(self.rec.span(Stage::Trigger, trig.step, &trig.action.kind, 0, t));
                tasks.push(s.spawn(move || self.launch_task(&trig.action.kind, trig.step, pending)));
            }
            tasks.into_iter().map(join).collect::<Result<Vec<()>>>().map(|_| ())
        })
    }

    /// One triggered analysis: takes a worker, pulls its step from staging,
    /// frees the staged step after its last pull, then computes.
    fn launch_task(&self, kind: &str, step: u64, pending: &Mutex<HashMap<u64, u32>>) -> Result<()> {
        let lease = self.pool.acquire();
        let t = Instant::now();
        let fetched = self.staging.get(VARIABLE, step);
        let last_pull = {
            let mut p = pending.lock().unwrap();
            let left = p.get_mut(&step).expect("pending count set before publish");
            *left -= 1;
            *left == 0
        };
        if last_pull {
            self.staging.release(VARIABLE, step);
        }
        let size = fetched?.size();
        self.rec.push(self.rec.span(Stage::IoGet, step, kind, size, t));
        let t = Instant::now();
        self.pool.compute(&lease, self.plan.costs.analysis_ms);
        self.rec.push(self.rec.span(Stage::Analysis, step, kind, 0, t));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::predict;
    use crate::indicator::QualifiedSchedule;
    use crate::orchestrator::{Oversubscription, StageCosts};
    use TriggerPattern::*;

    const KIB: u64 = 1024;

    fn plan(steps: u64, bytes: u64, schedule: QualifiedSchedule, costs: StageCosts) -> RunPlan {
        RunPlan {
            steps,
            payload_bytes: bytes,
            schedule,
            instances: 1,
            pool_size: 2,
            staging_capacity: 4,
            trigger_latency_ms: 3.0,
            oversubscription: Oversubscription::Queueing,
            costs,
            seed: 9,
        }
    }

    fn costs(gen_ms: f64, check_ms: f64, io_ms: f64, analysis_ms: f64) -> StageCosts {
        StageCosts {
            gen_ms,
            check_ms,
            io_ms,
            analysis_ms,
        }
    }

    fn cheap(steps: u64, fraction: f64) -> RunPlan {
        plan(steps, 64 * KIB, QualifiedSchedule::even(steps, fraction).unwrap(), costs(1.0, 0.5, 0.5, 1.0))
    }

    // Timer slack for sleeps on a loaded machine.
    fn assert_close(live: f64, expected: f64) {
        assert!(live >= expected - 0.5, "live {live} below chain {expected}");
        assert!(live <= expected * 1.15 + 8.0, "live {live} far above chain {expected}");
    }

    #[test]
    fn single_step_chains() {
        let p = plan(1, 4 * KIB, QualifiedSchedule::even(1, 1.0).unwrap(), costs(20.0, 5.0, 7.0, 30.0));
        let chain_pc = 20.0 + 5.0 + 7.0 + 30.0;
        assert_close(run_pattern_p(&p, "p").unwrap().makespan_ms, chain_pc);
        assert_close(run_pattern_c(&p, "c").unwrap().makespan_ms, chain_pc);
        assert_close(run_pattern_m(&p, "m").unwrap().makespan_ms, chain_pc + 3.0 + 7.0);
    }

    #[test]
    fn byte_counts_follow_pattern() {
        let s = 64 * KIB;
        let mut p = cheap(10, 0.2);
        assert_eq!(run_pattern_p(&p, "p").unwrap().bytes_transferred, 2 * s);
        assert_eq!(run_pattern_c(&p, "c").unwrap().bytes_transferred, 10 * s);
        assert_eq!(run_pattern_m(&p, "m").unwrap().bytes_transferred, 12 * s);
        p.instances = 3;
        assert_eq!(run_pattern_m(&p, "m").unwrap().bytes_transferred, 10 * s + 6 * s);
        for pattern in TriggerPattern::ALL {
            assert_eq!(
                run_pattern(pattern, &p, &DataSource::Synthetic, "x").unwrap().bytes_transferred,
                predict(&p, pattern).unwrap().bytes_transferred
            );
        }
    }

    #[test]
    fn all_patterns_run_the_same_analyses() {
        let mut p = cheap(12, 0.4);
        p.instances = 2;
        let want: Vec<(u64, String)> = p
            .schedule
            .resolved()
            .iter()
            .flat_map(|&s| (0..2).map(move |j| (s, RunPlan::analysis_kind(j))))
            .collect();
        for pattern in TriggerPattern::ALL {
            let r = run_pattern(pattern, &p, &DataSource::Synthetic, "f").unwrap();
            assert_eq!(r.executed_analyses(), want, "{pattern}");
            assert_eq!(r.qualified_steps, 5);
            assert_eq!(r.analyses_completed, 10);
        }
    }

    #[test]
    fn extreme_fractions_terminate() {
        for fraction in [0.0, 1.0] {
            let p = cheap(6, fraction);
            for pattern in TriggerPattern::ALL {
                let r = run_pattern(pattern, &p, &DataSource::Synthetic, "t").unwrap();
                assert_eq!(r.analyses_completed, (6.0 * fraction) as u64, "{pattern} at {fraction}");
                let gens = r.log.events.iter().filter(|e| e.stage == Stage::Gen).count();
                assert_eq!(gens, 6);
            }
        }
    }

    #[test]
    fn pool_of_one_still_completes() {
        let mut p = cheap(5, 1.0);
        p.pool_size = 1;
        p.instances = 3;
        assert_eq!(run_pattern_m(&p, "w1").unwrap().analyses_completed, 15);
        p.oversubscription = Oversubscription::Slowdown { factor: 1.5 };
        assert_eq!(run_pattern_m(&p, "w1s").unwrap().analyses_completed, 15);
    }

    #[test]
    fn events_are_well_formed() {
        let p = cheap(6, 0.5);
        for pattern in TriggerPattern::ALL {
            let r = run_pattern(pattern, &p, &DataSource::Synthetic, "ev").unwrap();
            assert!(r.log.events.iter().all(|e| e.t_end_ms >= e.t_start_ms && e.t_start_ms >= 0.0));
            assert!(r.log.events.windows(2).all(|w| w[0].t_start_ms <= w[1].t_start_ms));
            assert_eq!(r.makespan_ms, r.log.makespan_ms().unwrap());
            assert!(r.stages.mean(Stage::Gen).unwrap() >= 1.0);
            let triggers = r.log.events.iter().filter(|e| e.stage == Stage::Trigger).count();
            assert_eq!(triggers, if pattern == M { 3 } else { 0 });
        }
    }

    #[test]
    fn live_tracks_prediction() {
        let p = plan(8, 256 * KIB, QualifiedSchedule::even(8, 0.5).unwrap(), costs(12.0, 4.0, 3.0, 15.0));
        for pattern in TriggerPattern::ALL {
            let live = run_pattern(pattern, &p, &DataSource::Synthetic, "acc").unwrap().makespan_ms;
            let model = predict(&p, pattern).unwrap().makespan_ms;
            assert!((live - model).abs() / live < 0.15, "{pattern}: live {live} model {model}");
        }
    }

    #[test]
    fn gray_scott_source_checks_real_fields() {
        let source = DataSource::GrayScott {
            dims: [12, 12, 12],
            params: GrayScottParams::default(),
            steps_per_output: 1,
            threshold: 0.9,
            direction: Direction::AtLeast,
        };
        // early u fields sit near 1 everywhere, so every step qualifies
        let p = cheap(3, 0.0);
        for pattern in TriggerPattern::ALL {
            let r = run_pattern(pattern, &p, &source, "gs").unwrap();
            assert_eq!(r.qualified_steps, 3, "{pattern}");
            assert_eq!(r.analyses_completed, 3);
        }
        let r = run_pattern_c(&p, "gs").unwrap();
        assert_eq!(r.analyses_completed, 0);
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut p = cheap(4, 0.5);
        p.pool_size = 0;
        assert!(run_pattern_m(&p, "bad").is_err());
        let mut p = cheap(4, 0.5);
        p.steps = 5;
        assert!(run_pattern_p(&p, "bad").is_err());
        let source = DataSource::GrayScott {
            dims: [4, 4, 4],
            params: GrayScottParams::default(),
            steps_per_output: 1,
            threshold: 2.0,
            direction: Direction::AtLeast,
        };
        assert!(run_pattern(C, &cheap(2, 0.5), &source, "bad").is_err());
    }
}
