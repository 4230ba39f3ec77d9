use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::plan::Oversubscription;
use crate::clock;
use crate::error::{Error, Result};

/// Compute workers shared by triggered analysis tasks.
///
/// In queueing mode a task holds a worker from [`WorkerPool::acquire`] until
/// its lease drops, and excess tasks wait in FIFO order. In slowdown mode
/// every task proceeds at once and compute submitted through
/// [`WorkerPool::compute`] is processor-shared: with `R > W` runnable jobs
/// each advances at `1 / stretch(R)` of real time.
#[derive(Debug)]
pub struct WorkerPool {
    size: usize,
    mode: Oversubscription,
    state: Mutex<PoolState>,
    changed: Condvar,
}

#[derive(Debug, Default)]
struct PoolState {
    busy: usize,
    waiting: VecDeque<u64>,
    next_ticket: u64,
    next_job: u64,
    /// `(job, remaining ms of unstretched work)`
    jobs: Vec<(u64, f64)>,
    last: Option<Instant>,
}

/// A held worker; released on drop.
#[must_use]
#[derive(Debug)]
pub struct Lease<'a> {
    pool: &'a WorkerPool,
    holds_worker: bool,
}

impl Drop for Lease<'_> {
    fn drop(&mut self) {
        if self.holds_worker {
            self.pool.state.lock().unwrap().busy -= 1;
            self.pool.changed.notify_all();
        }
    }
}

impl WorkerPool {
    pub fn new(size: usize, mode: Oversubscription) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("worker pool size must be at least 1"));
        }
        if let Oversubscription::Slowdown { factor } = mode {
            if !(factor.is_finite() && factor >= 1.0) {
                return Err(Error::config("slowdown factor must be at least 1"));
            }
        }
        Ok(Self {
            size,
            mode,
            state: Mutex::new(PoolState::default()),
            changed: Condvar::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mode(&self) -> Oversubscription {
        self.mode
    }

    /// Workers currently leased (queueing mode).
    pub fn busy(&self) -> usize {
        self.state.lock().unwrap().busy
    }

    /// Tasks waiting for a worker (queueing mode).
    pub fn queued(&self) -> usize {
        self.state.lock().unwrap().waiting.len()
    }

    /// Blocks until a worker is free; first come, first served. Returns
    /// immediately in slowdown mode.
    pub fn acquire(&self) -> Lease<'_> {
        if let Oversubscription::Slowdown { .. } = self.mode {
            return Lease {
                pool: self,
                holds_worker: false,
            };
        }
        let mut st = self.state.lock().unwrap();
        let ticket = st.next_ticket;
        st.next_ticket += 1;
        st.waiting.push_back(ticket);
        while !(st.waiting.front() == Some(&ticket) && st.busy < self.size) {
            st = self.changed.wait(st).unwrap();
        }
        st.waiting.pop_front();
        st.busy += 1;
        drop(st);
        // the next ticket may also fit
        self.changed.notify_all();
        Lease {
            pool: self,
            holds_worker: true,
        }
    }

    /// Runs `ms` of emulated compute for the lease holder.
    pub fn compute(&self, _lease: &Lease<'_>, ms: f64) {
        match self.mode {
            Oversubscription::Queueing => clock::emulate_compute(ms),
            Oversubscription::Slowdown { .. } => self.shared_compute(ms),
        }
    }

    fn advance(&self, st: &mut PoolState, now: Instant) {
        if let Some(last) = st.last {
            if !st.jobs.is_empty() {
                let stretch = self.mode.stretch(st.jobs.len(), self.size);
                let done = now.saturating_duration_since(last).as_secs_f64() * 1e3 / stretch;
                for job in &mut st.jobs {
                    job.1 -= done;
                }
            }
        }
        st.last = Some(now);
    }

    fn shared_compute(&self, ms: f64) {
        if !(ms > 0.0) {
            return;
        }
        let mut st = self.state.lock().unwrap();
        self.advance(&mut st, Instant::now());
        let id = st.next_job;
        st.next_job += 1;
        st.jobs.push((id, ms));
        // others now progress more slowly; let them recompute deadlines
        self.changed.notify_all();
        loop {
            self.advance(&mut st, Instant::now());
            let remaining = st.jobs.iter().find(|j| j.0 == id).map(|j| j.1).unwrap_or(0.0);
            if remaining <= 1e-6 {
                st.jobs.retain(|j| j.0 != id);
                drop(st);
                self.changed.notify_all();
                return;
            }
            let stretch = self.mode.stretch(st.jobs.len(), self.size);
            let wait = Duration::from_secs_f64(remaining * stretch / 1e3);
            st = self.changed.wait_timeout(st, wait).unwrap().0;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::thread;

    use super::*;

    fn elapsed_ms(t: Instant) -> f64 {
        t.elapsed().as_secs_f64() * 1e3
    }

    #[test]
    fn free_worker_starts_immediately() {
        let pool = WorkerPool::new(4, Oversubscription::Queueing).unwrap();
        let _a = pool.acquire();
        let _b = pool.acquire();
        let _c = pool.acquire();
        let t = Instant::now();
        let _d = pool.acquire();
        assert!(elapsed_ms(t) < 5.0);
        assert_eq!(pool.busy(), 4);
    }

    #[test]
    fn full_pool_queues_until_release() {
        let pool = Arc::new(WorkerPool::new(2, Oversubscription::Queueing).unwrap());
        let a = pool.acquire();
        let _b = pool.acquire();
        let p2 = Arc::clone(&pool);
        let t = Instant::now();
        let waiter = thread::spawn(move || {
            let _l = p2.acquire();
            elapsed_ms(t)
        });
        thread::sleep(Duration::from_millis(40));
        assert_eq!(pool.queued(), 1);
        drop(a);
        let waited = waiter.join().unwrap();
        assert!(waited >= 40.0, "{waited}");
    }

    #[test]
    fn queue_is_first_come_first_served() {
        let pool = Arc::new(WorkerPool::new(1, Oversubscription::Queueing).unwrap());
        let first = pool.acquire();
        let order = Arc::new(Mutex::new(Vec::new()));
        let mut handles = Vec::new();
        for i in 0..4 {
            let (p, o) = (Arc::clone(&pool), Arc::clone(&order));
            handles.push(thread::spawn(move || {
                let _l = p.acquire();
                o.lock().unwrap().push(i);
            }));
            // make arrival order deterministic
            while pool.queued() < i + 1 {
                thread::yield_now();
            }
        }
        drop(first);
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(*order.lock().unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn slowdown_stretches_oversubscribed_compute() {
        let pool = Arc::new(WorkerPool::new(2, Oversubscription::Slowdown { factor: 1.0 }).unwrap());
        let t = Instant::now();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let p = Arc::clone(&pool);
                thread::spawn(move || {
                    let l = p.acquire();
                    p.compute(&l, 40.0);
                    elapsed_ms(t)
                })
            })
            .collect();
        for h in handles {
            let done = h.join().unwrap();
            // 4 runnable on 2 workers: each 40 ms job takes 80 ms
            assert!((75.0..100.0).contains(&done), "{done}");
        }
    }

    #[test]
    fn slowdown_within_capacity_is_unstretched() {
        let pool = WorkerPool::new(3, Oversubscription::Slowdown { factor: 2.0 }).unwrap();
        let t = Instant::now();
        let l = pool.acquire();
        pool.compute(&l, 30.0);
        let e = elapsed_ms(t);
        assert!((29.0..45.0).contains(&e), "{e}");
    }

    #[test]
    fn bad_configuration() {
        assert!(WorkerPool::new(0, Oversubscription::Queueing).is_err());
        assert!(WorkerPool::new(2, Oversubscription::Slowdown { factor: 0.5 }).is_err());
    }
}
