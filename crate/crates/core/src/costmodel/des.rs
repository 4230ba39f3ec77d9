//! Event-driven simulation of the three trigger patterns.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::orchestrator::{Event, EventLog, EventType, Oversubscription, RunPlan, Stage, TriggerPattern};

/// Simulated run: makespan, byte counters and the full event schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedReport {
    pub pattern: TriggerPattern,
    pub makespan_ms: f64,
    pub bytes_transferred: u64,
    pub analyses_completed: u64,
    /// Ordered by start time.
    pub events: Vec<Event>,
}

impl PredictedReport {
    /// Event log in the live-run format; the run id is prefixed `pred-`.
    pub fn to_log(&self, run_id: &str) -> EventLog {
        EventLog::new(format!("pred-{run_id}"), self.pattern, self.events.clone())
    }
}

/// Staged bytes for a pattern: P ships qualified steps only, C ships every
/// step, M ships every step and each triggered analysis pulls its step again.
pub fn bytes_predicted(plan: &RunPlan, pattern: TriggerPattern) -> u64 {
    let s = plan.payload_bytes;
    let q = plan.qualified_steps();
    match pattern {
        TriggerPattern::P => q * s,
        TriggerPattern::C => plan.steps * s,
        TriggerPattern::M => plan.steps * s + u64::from(plan.instances) * q * s,
    }
}

pub fn predict(plan: &RunPlan, pattern: TriggerPattern) -> Result<PredictedReport> {
    plan.validate()?;
    let mut sim = Sim::new(plan, pattern);
    sim.start_gen(1);
    while let Some(Reverse(p)) = sim.queue.pop() {
        debug_assert!(p.time >= sim.now);
        sim.now = p.time;
        sim.handle(p.what);
    }
    sim.finish()
}

#[derive(Debug, Clone, Copy)]
enum What {
    GenDone(u64),
    ProducerCheckDone(u64),
    PutDone(u64),
    ConsumerDone,
    CheckerDone(u64),
    LaunchDone(usize),
    FetchDone(usize),
    TaskDone(usize),
    SharingTick(u64),
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    seq: u64,
    what: What,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // equal times resolve in scheduling order
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Item {
    Step(u64),
    End,
}

#[derive(Debug)]
struct Task {
    step: u64,
    kind: u32,
    analysis_start: f64,
}

#[derive(Debug, Default)]
struct Sharing {
    /// `(task, remaining work)`
    jobs: Vec<(usize, f64)>,
    last: f64,
    generation: u64,
}

struct Sim<'a> {
    plan: &'a RunPlan,
    pattern: TriggerPattern,
    now: f64,
    queue: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    events: Vec<Event>,
    bytes: u64,
    analyses: u64,
    slots_free: usize,
    producer_waiting: Option<u64>,
    producer_done: bool,
    store: VecDeque<Item>,
    reader_idle: bool,
    reader_done: bool,
    launches: VecDeque<Item>,
    launcher_idle: bool,
    tasks: Vec<Task>,
    fetches_left: Vec<u32>,
    pool_free: usize,
    pool_waiters: VecDeque<usize>,
    sharing: Sharing,
}

impl<'a> Sim<'a> {
    fn new(plan: &'a RunPlan, pattern: TriggerPattern) -> Self {
        Self {
            plan,
            pattern,
            now: 0.0,
            queue: BinaryHeap::new(),
            seq: 0,
            events: Vec::new(),
            bytes: 0,
            analyses: 0,
            slots_free: plan.staging_capacity,
            producer_waiting: None,
            producer_done: false,
            store: VecDeque::new(),
            reader_idle: true,
            reader_done: false,
            launches: VecDeque::new(),
            launcher_idle: true,
            tasks: Vec::new(),
            fetches_left: vec![0; plan.steps as usize + 1],
            pool_free: plan.pool_size,
            pool_waiters: VecDeque::new(),
            sharing: Sharing::default(),
        }
    }

    fn at(&mut self, delay: f64, what: What) {
        self.seq += 1;
        self.queue.push(Reverse(Pending {
            time: self.now + delay,
            seq: self.seq,
            what,
        }));
    }

    fn log(&mut self, event: Event) {
        self.events.push(event);
    }

    fn handle(&mut self, what: What) {
        match what {
            What::GenDone(i) => self.on_gen_done(i),
            What::ProducerCheckDone(i) => {
                if self.plan.is_qualified(i) {
                    self.request_slot(i);
                } else {
                    self.producer_next(i);
                }
            }
            What::PutDone(i) => {
                self.store.push_back(Item::Step(i));
                self.wake_reader();
                self.producer_next(i);
            }
            What::ConsumerDone => {
                self.reader_idle = true;
                self.wake_reader();
            }
            What::CheckerDone(i) => self.on_checker_done(i),
            What::LaunchDone(task) => {
                self.start_task(task);
                self.launcher_idle = true;
                self.wake_launcher();
            }
            What::FetchDone(task) => self.on_fetch_done(task),
            What::TaskDone(task) => {
                self.complete_analysis(task);
                match self.pool_waiters.pop_front() {
                    Some(next) => self.begin_fetch(next),
                    None => self.pool_free += 1,
                }
            }
            What::SharingTick(generation) => self.on_sharing_tick(generation),
        }
    }

    // producer

    fn start_gen(&mut self, i: u64) {
        let g = self.plan.costs.gen_ms;
        self.log(Event::new(Stage::Gen, i, "producer", 0, self.now, self.now + g));
        self.at(g, What::GenDone(i));
    }

    fn on_gen_done(&mut self, i: u64) {
        if self.pattern == TriggerPattern::P {
            let c = self.plan.costs.check_ms;
            let verdict = EventType::verdict(self.plan.is_qualified(i));
            self.log(Event::new(Stage::Check, i, "producer", 0, self.now, self.now + c).with_type(verdict));
            self.at(c, What::ProducerCheckDone(i));
        } else {
            self.request_slot(i);
        }
    }

    fn request_slot(&mut self, i: u64) {
        if self.slots_free > 0 {
            self.slots_free -= 1;
            self.begin_put(i);
        } else {
            self.producer_waiting = Some(i);
        }
    }

    fn begin_put(&mut self, i: u64) {
        let x = self.plan.costs.io_ms;
        let s = self.plan.payload_bytes;
        self.bytes += s;
        self.log(Event::new(Stage::IoPut, i, "producer", s, self.now, self.now + x));
        self.at(x, What::PutDone(i));
    }

    fn release_slot(&mut self) {
        match self.producer_waiting.take() {
            Some(i) => self.begin_put(i),
            None => self.slots_free += 1,
        }
    }

    fn producer_next(&mut self, i: u64) {
        if i < self.plan.steps {
            self.start_gen(i + 1);
        } else {
            self.producer_done = true;
            self.store.push_back(Item::End);
            self.wake_reader();
        }
    }

    // consumer (P, C) or middleware checker (M)

    fn wake_reader(&mut self) {
        if !self.reader_idle {
            return;
        }
        let Some(item) = self.store.pop_front() else {
            return;
        };
        match item {
            Item::End => {
                self.reader_done = true;
                self.reader_idle = false;
                if self.pattern == TriggerPattern::M {
                    self.launches.push_back(Item::End);
                    self.wake_launcher();
                }
            }
            Item::Step(i) => {
                self.reader_idle = false;
                if self.pattern == TriggerPattern::M {
                    let c = self.plan.costs.check_ms;
                    let verdict = EventType::verdict(self.plan.is_qualified(i));
                    self.log(Event::new(Stage::Check, i, "checker", 0, self.now, self.now + c).with_type(verdict));
                    self.at(c, What::CheckerDone(i));
                } else {
                    self.consume(i);
                }
            }
        }
    }

    /// Persistent consumer: reads the staged buffer in place, frees the
    /// slot, then (C) checks and runs the analyses serially.
    fn consume(&mut self, i: u64) {
        self.release_slot();
        let costs = self.plan.costs;
        let mut t = self.now;
        let qualified = self.plan.is_qualified(i);
        if self.pattern == TriggerPattern::C {
            let verdict = EventType::verdict(qualified);
            self.log(Event::new(Stage::Check, i, "consumer", 0, t, t + costs.check_ms).with_type(verdict));
            t += costs.check_ms;
        }
        if qualified {
            for j in 0..self.plan.instances {
                self.log(Event::new(Stage::Analysis, i, RunPlan::analysis_kind(j), 0, t, t + costs.analysis_ms));
                t += costs.analysis_ms;
                self.analyses += 1;
            }
        }
        let delay = t - self.now;
        self.at(delay, What::ConsumerDone);
    }

    fn on_checker_done(&mut self, i: u64) {
        if self.plan.is_qualified(i) {
            self.fetches_left[i as usize] = self.plan.instances;
            for _ in 0..self.plan.instances {
                self.launches.push_back(Item::Step(i));
            }
            self.wake_launcher();
        } else {
            self.release_slot();
        }
        self.reader_idle = true;
        self.wake_reader();
    }

    // launcher and triggered tasks (M)

    fn wake_launcher(&mut self) {
        if !self.launcher_idle {
            return;
        }
        match self.launches.pop_front() {
            None => {}
            Some(Item::End) => self.launcher_idle = false,
            Some(Item::Step(i)) => {
                self.launcher_idle = false;
                let kind = self.tasks.iter().filter(|t| t.step == i).count() as u32;
                let id = self.tasks.len();
                self.tasks.push(Task {
                    step: i,
                    kind,
                    analysis_start: f64::NAN,
                });
                let sigma = self.plan.trigger_latency_ms;
                self.log(Event::new(Stage::Trigger, i, RunPlan::analysis_kind(kind), 0, self.now, self.now + sigma));
                self.at(sigma, What::LaunchDone(id));
            }
        }
    }

    fn start_task(&mut self, task: usize) {
        match self.plan.oversubscription {
            Oversubscription::Queueing => {
                if self.pool_free > 0 {
                    self.pool_free -= 1;
                    self.begin_fetch(task);
                } else {
                    self.pool_waiters.push_back(task);
                }
            }
            Oversubscription::Slowdown { .. } => self.begin_fetch(task),
        }
    }

    fn begin_fetch(&mut self, task: usize) {
        let x = self.plan.costs.io_ms;
        let s = self.plan.payload_bytes;
        let (step, kind) = (self.tasks[task].step, self.tasks[task].kind);
        self.bytes += s;
        self.log(Event::new(Stage::IoGet, step, RunPlan::analysis_kind(kind), s, self.now, self.now + x));
        self.at(x, What::FetchDone(task));
    }

    fn on_fetch_done(&mut self, task: usize) {
        let step = self.tasks[task].step as usize;
        self.fetches_left[step] -= 1;
        if self.fetches_left[step] == 0 {
            self.release_slot();
        }
        self.tasks[task].analysis_start = self.now;
        let a = self.plan.costs.analysis_ms;
        match self.plan.oversubscription {
            Oversubscription::Queueing => self.at(a, What::TaskDone(task)),
            Oversubscription::Slowdown { .. } => {
                self.advance_sharing();
                self.sharing.jobs.push((task, a));
                self.reschedule_sharing();
            }
        }
    }

    fn complete_analysis(&mut self, task: usize) {
        let t = &self.tasks[task];
        let event = Event::new(Stage::Analysis, t.step, RunPlan::analysis_kind(t.kind), 0, t.analysis_start, self.now);
        self.log(event);
        self.analyses += 1;
    }

    // processor sharing for the slowdown mode

    fn stretch(&self) -> f64 {
        self.plan
            .oversubscription
            .stretch(self.sharing.jobs.len(), self.plan.pool_size)
    }

    fn advance_sharing(&mut self) {
        if !self.sharing.jobs.is_empty() {
            let done = (self.now - self.sharing.last) / self.stretch();
            for job in &mut self.sharing.jobs {
                job.1 -= done;
            }
        }
        self.sharing.last = self.now;
    }

    fn reschedule_sharing(&mut self) {
        self.sharing.generation += 1;
        let next = self.sharing.jobs.iter().map(|j| j.1).min_by(f64::total_cmp);
        if let Some(rem) = next {
            let delay = rem.max(0.0) * self.stretch();
            self.at(delay, What::SharingTick(self.sharing.generation));
        }
    }

    fn on_sharing_tick(&mut self, generation: u64) {
        if generation != self.sharing.generation {
            return;
        }
        self.advance_sharing();
        // the job this tick was scheduled for is done even if rounding left
        // a sliver of work
        let tol = 1e-9 * self.plan.costs.analysis_ms.max(1.0);
        let min = self.sharing.jobs.iter().map(|j| j.1).min_by(f64::total_cmp).unwrap_or(0.0);
        let (done, left): (Vec<_>, Vec<_>) = self
            .sharing
            .jobs
            .drain(..)
            .partition(|j| j.1 <= min.max(0.0) + tol);
        self.sharing.jobs = left;
        for (task, _) in done {
            self.complete_analysis(task);
        }
        self.reschedule_sharing();
    }

    fn finish(mut self) -> Result<PredictedReport> {
        let expected = self.plan.qualified_steps() * u64::from(self.plan.instances);
        let stalled = !self.producer_done
            || !self.reader_done
            || self.analyses != expected
            || (self.pattern == TriggerPattern::M && self.launcher_idle)
            || !self.sharing.jobs.is_empty();
        if stalled {
            return Err(Error::Schedule(format!(
                "simulation of pattern {} stalled after {} of {expected} analyses",
                self.pattern, self.analyses
            )));
        }
        debug_assert_eq!(self.bytes, bytes_predicted(self.plan, self.pattern));
        let log = EventLog::new("", self.pattern, std::mem::take(&mut self.events));
        let makespan_ms = log.makespan_ms()?;
        Ok(PredictedReport {
            pattern: self.pattern,
            makespan_ms,
            bytes_transferred: self.bytes,
            analyses_completed: self.analyses,
            events: log.events,
        })
    }
}
