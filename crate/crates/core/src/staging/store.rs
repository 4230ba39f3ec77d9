//! Step-addressed staging store with bounded capacity and blocking
//! backpressure.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::payload::{PayloadBytes, StepPayload};
use crate::clock;
use crate::error::{Error, Result};

const MIB: f64 = 1024.0 * 1024.0;

/// Cost of moving a payload across one side of the store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransferModel {
    /// Real memory copy into a fresh buffer.
    Copy,
    /// Hand over the shared buffer; no cost.
    Shared,
    /// Hand over the shared buffer and hold the caller for
    /// `fixed_ms + bytes / bandwidth`.
    Emulated {
        fixed_ms: f64,
        bandwidth_bytes_per_s: f64,
    },
}

impl Default for TransferModel {
    fn default() -> Self {
        TransferModel::Copy
    }
}

impl TransferModel {
    /// Emulated link from an affine cost in milliseconds per MiB.
    pub fn affine(fixed_ms: f64, ms_per_mib: f64) -> Self {
        if fixed_ms <= 0.0 && ms_per_mib <= 0.0 {
            return TransferModel::Shared;
        }
        let bandwidth_bytes_per_s = if ms_per_mib > 0.0 {
            MIB * 1e3 / ms_per_mib
        } else {
            f64::INFINITY
        };
        TransferModel::Emulated {
            fixed_ms: fixed_ms.max(0.0),
            bandwidth_bytes_per_s,
        }
    }

    /// Emulated latency for `bytes`; zero for copy and shared transfers.
    pub fn cost_ms(&self, bytes: u64) -> f64 {
        match *self {
            TransferModel::Emulated {
                fixed_ms,
                bandwidth_bytes_per_s,
            } => fixed_ms + bytes as f64 / bandwidth_bytes_per_s * 1e3,
            _ => 0.0,
        }
    }

    fn apply(&self, bytes: &PayloadBytes) -> PayloadBytes {
        match self {
            TransferModel::Copy => PayloadBytes::from_vec(bytes.to_vec()),
            TransferModel::Shared => bytes.clone(),
            TransferModel::Emulated { .. } => {
                let start = Instant::now();
                clock::emulate_compute_since(start, self.cost_ms(bytes.len() as u64));
                bytes.clone()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagingConfig {
    /// Steps held per variable before `put` blocks.
    pub capacity: usize,
    pub put: TransferModel,
    pub get: TransferModel,
}

impl Default for StagingConfig {
    fn default() -> Self {
        Self {
            capacity: 4,
            put: TransferModel::Copy,
            get: TransferModel::Shared,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StagingStats {
    pub bytes_put: u64,
    pub bytes_got: u64,
    pub put_count: u64,
    pub get_count: u64,
    /// `(step, latency_ms)` per completed put.
    pub put_latency_ms: Vec<(u64, f64)>,
    pub get_latency_ms: Vec<(u64, f64)>,
}

#[derive(Debug, Default)]
struct VarState {
    entries: BTreeMap<u64, StepPayload>,
    seen: HashSet<u64>,
    in_flight: usize,
    eos: bool,
}

#[derive(Debug, Default)]
struct Inner {
    vars: HashMap<String, VarState>,
    stats: StagingStats,
}

/// In-process staging service shared by producer, consumer and middleware
/// workers.
///
/// Entries occupy capacity until [`StagingService::release`] is called for
/// them; readers decide when a step is no longer needed.
#[derive(Debug)]
pub struct StagingService {
    config: StagingConfig,
    inner: Mutex<Inner>,
    changed: Condvar,
}

impl StagingService {
    pub fn new(config: StagingConfig) -> Result<Self> {
        if config.capacity == 0 {
            return Err(Error::config("staging capacity must be at least 1"));
        }
        Ok(Self {
            config,
            inner: Mutex::new(Inner::default()),
            changed: Condvar::new(),
        })
    }

    pub fn config(&self) -> &StagingConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap()
    }

    /// Stages a payload. Blocks while the variable is at capacity; the put
    /// transfer cost is paid by the caller outside the lock. Returns the
    /// moment the transfer began, i.e. after any backpressure wait.
    pub fn put(&self, payload: StepPayload) -> Result<Instant> {
        if payload.step_index == 0 {
            return Err(Error::config("step index must be at least 1"));
        }
        if payload.bytes.is_empty() {
            return Err(Error::Empty("payload bytes"));
        }
        let started = Instant::now();
        let step = payload.step_index;
        let variable = payload.variable.clone();
        {
            let mut inner = self.lock();
            let var = inner.vars.entry(variable.clone()).or_default();
            if !var.seen.insert(step) {
                return Err(Error::DuplicatePayload { variable, step });
            }
            loop {
                let var = inner.vars.get_mut(&variable).expect("variable registered above");
                if var.entries.len() + var.in_flight < self.config.capacity {
                    var.in_flight += 1;
                    break;
                }
                inner = self.changed.wait(inner).unwrap();
            }
        }
        let transfer_started = Instant::now();
        let bytes = self.config.put.apply(&payload.bytes);
        let size = bytes.len() as u64;
        let stored = StepPayload { bytes, ..payload };
        let mut inner = self.lock();
        let var = inner.vars.get_mut(&variable).expect("variable registered above");
        var.in_flight -= 1;
        var.entries.insert(step, stored);
        inner.stats.bytes_put += size;
        inner.stats.put_count += 1;
        inner
            .stats
            .put_latency_ms
            .push((step, started.elapsed().as_secs_f64() * 1e3));
        drop(inner);
        self.changed.notify_all();
        Ok(transfer_started)
    }

    /// Blocks until a staged step after `after_step` exists (qualified only,
    /// if requested) and returns the lowest such step, or `None` once the
    /// stream has ended with nothing left to deliver.
    pub fn get_next(
        &self,
        variable: &str,
        after_step: u64,
        only_qualified: bool,
    ) -> Result<Option<StepPayload>> {
        match self.wait_next(variable, after_step, only_qualified)? {
            Some(found) => Ok(Some(self.deliver(found))),
            None => Ok(None),
        }
    }

    /// As [`StagingService::get_next`], but without transfer cost or byte
    /// accounting. Used by services co-located with the store.
    pub fn inspect_next(&self, variable: &str, after_step: u64) -> Result<Option<StepPayload>> {
        self.wait_next(variable, after_step, false)
    }

    /// Random access to a staged step; fails if the step is not held.
    pub fn get(&self, variable: &str, step: u64) -> Result<StepPayload> {
        let found = {
            let inner = self.lock();
            inner
                .vars
                .get(variable)
                .and_then(|v| v.entries.get(&step))
                .cloned()
                .ok_or_else(|| Error::MissingPayload {
                    variable: variable.to_string(),
                    step,
                })?
        };
        Ok(self.deliver(found))
    }

    fn wait_next(
        &self,
        variable: &str,
        after_step: u64,
        only_qualified: bool,
    ) -> Result<Option<StepPayload>> {
        let mut inner = self.lock();
        loop {
            let var = inner.vars.entry(variable.to_string()).or_default();
            let hit = var
                .entries
                .range(after_step + 1..)
                .map(|(_, p)| p)
                .find(|p| !only_qualified || p.qualified_hint == Some(true));
            if let Some(p) = hit {
                return Ok(Some(p.clone()));
            }
            if var.eos && var.in_flight == 0 {
                return Ok(None);
            }
            inner = self.changed.wait(inner).unwrap();
        }
    }

    fn deliver(&self, found: StepPayload) -> StepPayload {
        let started = Instant::now();
        let bytes = self.config.get.apply(&found.bytes);
        let size = bytes.len() as u64;
        let step = found.step_index;
        let mut inner = self.lock();
        inner.stats.bytes_got += size;
        inner.stats.get_count += 1;
        inner
            .stats
            .get_latency_ms
            .push((step, started.elapsed().as_secs_f64() * 1e3));
        StepPayload { bytes, ..found }
    }

    /// Frees the capacity held by a step. Releasing an absent step is a no-op.
    pub fn release(&self, variable: &str, step: u64) -> bool {
        let removed = {
            let mut inner = self.lock();
            inner
                .vars
                .get_mut(variable)
                .and_then(|v| v.entries.remove(&step))
                .is_some()
        };
        if removed {
            self.changed.notify_all();
        }
        removed
    }

    /// Signals that no further steps will be put for `variable`; wakes all
    /// blocked readers.
    pub fn mark_end_of_stream(&self, variable: &str) {
        self.lock().vars.entry(variable.to_string()).or_default().eos = true;
        self.changed.notify_all();
    }

    pub fn held(&self, variable: &str) -> usize {
        self.lock().vars.get(variable).map_or(0, |v| v.entries.len())
    }

    pub fn stats(&self) -> StagingStats {
        self.lock().stats.clone()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::thread;
    use std::time::Duration;

    use super::*;

    fn payload(step: u64, len: usize) -> StepPayload {
        StepPayload::new("u", step, PayloadBytes::from_vec(vec![step as u8; len]))
    }

    fn store(capacity: usize) -> StagingService {
        StagingService::new(StagingConfig {
            capacity,
            ..StagingConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn put_counts_bytes() {
        let s = store(4);
        s.put(payload(1, 32 << 20)).unwrap();
        assert_eq!(s.stats().bytes_put, 33_554_432);
        assert_eq!(s.stats().put_count, 1);
    }

    #[test]
    fn duplicate_put_is_rejected() {
        let s = store(4);
        s.put(payload(1, 8)).unwrap();
        let err = s.put(payload(1, 8)).unwrap_err();
        assert!(matches!(err, Error::DuplicatePayload { step: 1, .. }));
        // still rejected after the first copy is released
        s.release("u", 1);
        assert!(s.put(payload(1, 8)).is_err());
    }

    #[test]
    fn empty_payload_is_rejected() {
        let s = store(4);
        assert!(matches!(s.put(payload(1, 0)), Err(Error::Empty(_))));
    }

    #[test]
    fn get_next_returns_lowest_after_cursor() {
        let s = store(4);
        for step in 1..=3 {
            s.put(payload(step, 4)).unwrap();
        }
        let p = s.get_next("u", 1, false).unwrap().unwrap();
        assert_eq!(p.step_index, 2);
    }

    #[test]
    fn only_qualified_filter() {
        let s = store(4);
        s.put(payload(1, 4).with_hint(false)).unwrap();
        s.put(payload(2, 4).with_hint(true)).unwrap();
        let p = s.get_next("u", 0, true).unwrap().unwrap();
        assert_eq!(p.step_index, 2);
    }

    #[test]
    fn end_of_stream_after_last_step() {
        let s = store(4);
        s.put(payload(1, 4)).unwrap();
        s.mark_end_of_stream("u");
        assert!(s.get_next("u", 1, false).unwrap().is_none());
        // a reader behind the last step still gets it first
        assert_eq!(s.get_next("u", 0, false).unwrap().unwrap().step_index, 1);
    }

    #[test]
    fn eos_without_waiters_acks() {
        let s = store(1);
        s.mark_end_of_stream("v");
        assert!(s.get_next("v", 0, false).unwrap().is_none());
    }

    #[test]
    fn eos_wakes_all_blocked_readers() {
        let s = Arc::new(store(2));
        let readers: Vec<_> = (0..3)
            .map(|_| {
                let s = Arc::clone(&s);
                thread::spawn(move || s.get_next("u", 5, false).unwrap())
            })
            .collect();
        thread::sleep(Duration::from_millis(30));
        s.mark_end_of_stream("u");
        for r in readers {
            assert!(r.join().unwrap().is_none());
        }
    }

    #[test]
    fn put_blocks_at_capacity_until_release() {
        let s = Arc::new(store(2));
        s.put(payload(1, 4)).unwrap();
        s.put(payload(2, 4)).unwrap();
        let writer = {
            let s = Arc::clone(&s);
            thread::spawn(move || {
                let t = Instant::now();
                s.put(payload(3, 4)).unwrap();
                t.elapsed()
            })
        };
        thread::sleep(Duration::from_millis(40));
        assert_eq!(s.held("u"), 2);
        s.release("u", 1);
        let waited = writer.join().unwrap();
        assert!(waited >= Duration::from_millis(35), "{waited:?}");
        assert_eq!(s.held("u"), 2);
    }

    #[test]
    fn random_access_get_and_missing_step() {
        let s = store(4);
        s.put(payload(4, 16)).unwrap();
        assert_eq!(s.get("u", 4).unwrap().bytes.len(), 16);
        assert!(matches!(s.get("u", 5), Err(Error::MissingPayload { .. })));
        assert_eq!(s.stats().bytes_got, 16);
    }

    #[test]
    fn inspect_is_not_accounted() {
        let s = store(4);
        s.put(payload(1, 16)).unwrap();
        assert!(s.inspect_next("u", 0).unwrap().is_some());
        assert_eq!(s.stats().get_count, 0);
    }

    #[test]
    fn copy_transfer_detaches_buffer() {
        let s = store(4);
        let p = payload(1, 64);
        let original = p.bytes.clone();
        s.put(p).unwrap();
        let got = s.get("u", 1).unwrap();
        assert_eq!(&*got.bytes, &*original);
        assert_ne!(got.bytes.as_ptr(), original.as_ptr());
    }

    #[test]
    fn emulated_link_cost() {
        let link = TransferModel::affine(2.0, 0.5);
        assert!((link.cost_ms(8 << 20) - 6.0).abs() < 1e-9);
        assert_eq!(TransferModel::affine(0.0, 0.0), TransferModel::Shared);
        assert_eq!(TransferModel::Copy.cost_ms(1 << 30), 0.0);
    }
}
