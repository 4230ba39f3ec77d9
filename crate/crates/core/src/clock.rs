//! Monotonic run clock and emulated compute.
//!
//! Emulated work waits on a wall-clock deadline instead of spinning, so that
//! several emulated workers can share one physical core without stretching
//! each other. Contention is modelled explicitly by the worker pool.

use std::time::{Duration, Instant};

/// Milliseconds since the run origin.
#[derive(Debug, Clone, Copy)]
pub struct RunClock {
    origin: Instant,
}

impl RunClock {
    pub fn start() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn now_ms(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1e3
    }

    pub fn at_ms(&self, t: Instant) -> f64 {
        t.saturating_duration_since(self.origin).as_secs_f64() * 1e3
    }

    pub fn instant_at(&self, ms: f64) -> Instant {
        self.origin + ms_to_duration(ms)
    }
}

pub fn ms_to_duration(ms: f64) -> Duration {
    if ms.is_finite() && ms > 0.0 {
        Duration::from_secs_f64(ms / 1e3)
    } else {
        Duration::ZERO
    }
}

/// Blocks until `deadline`.
pub fn wait_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        std::thread::sleep(deadline - now);
    }
}

/// Occupies the calling worker for `ms` of wall time, measured from `start`.
/// Work already done since `start` counts against the budget.
pub fn emulate_compute_since(start: Instant, ms: f64) {
    wait_until(start + ms_to_duration(ms));
}

pub fn emulate_compute(ms: f64) {
    emulate_compute_since(Instant::now(), ms);
}
