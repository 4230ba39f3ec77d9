//! Topic registry that turns publications into task instantiations.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to start when a subscription matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub kind: String,
    /// Pool workers the task occupies while running.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSubscription {
    /// Matched against published topics by exact string comparison.
    pub topic_pattern: String,
    pub action: TaskTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubscriptionId(pub u64);

/// A matched publication, handed to the task launcher.
#[derive(Debug, Clone)]
pub struct Trigger {
    pub subscription: SubscriptionId,
    pub action: TaskTemplate,
    pub topic: String,
    pub step: u64,
    pub published_at: Instant,
}

#[derive(Debug)]
pub struct TriggerRegistry {
    subs: Mutex<Vec<(SubscriptionId, TopicSubscription)>>,
    sink: Mutex<Option<Sender<Trigger>>>,
    next_id: AtomicU64,
    publishes: AtomicU64,
    instantiations: AtomicU64,
}

impl TriggerRegistry {
    /// Registry plus the receiving end the launcher drains.
    pub fn new() -> (Self, Receiver<Trigger>) {
        let (tx, rx) = channel();
        let reg = Self {
            subs: Mutex::new(Vec::new()),
            sink: Mutex::new(Some(tx)),
            next_id: AtomicU64::new(0),
            publishes: AtomicU64::new(0),
            instantiations: AtomicU64::new(0),
        };
        (reg, rx)
    }

    pub fn subscribe(&self, sub: TopicSubscription) -> Result<SubscriptionId> {
        if sub.topic_pattern.is_empty() {
            return Err(Error::config("topic pattern must be non-empty"));
        }
        let id = SubscriptionId(self.next_id.fetch_add(1, Ordering::Relaxed));
        self.subs.lock().unwrap().push((id, sub));
        Ok(id)
    }

    /// Delivers one trigger per matching subscription and returns how many
    /// matched. Never blocks on the launcher.
    pub fn publish(&self, topic: &str, step: u64) -> usize {
        self.publishes.fetch_add(1, Ordering::Relaxed);
        let matched: Vec<Trigger> = {
            let now = Instant::now();
            self.subs
                .lock()
                .unwrap()
                .iter()
                .filter(|(_, s)| s.topic_pattern == topic)
                .map(|(id, s)| Trigger {
                    subscription: *id,
                    action: s.action.clone(),
                    topic: topic.to_string(),
                    step,
                    published_at: now,
                })
                .collect()
        };
        let n = matched.len();
        if let Some(tx) = self.sink.lock().unwrap().as_ref() {
            for t in matched {
                // a dropped launcher only loses deliveries, never blocks
                let _ = tx.send(t);
            }
        }
        self.instantiations.fetch_add(n as u64, Ordering::Relaxed);
        n
    }

    /// Closes the delivery channel; the launcher sees end of input once it
    /// has drained what was already sent.
    pub fn close(&self) {
        self.sink.lock().unwrap().take();
    }

    pub fn publish_count(&self) -> u64 {
        self.publishes.load(Ordering::Relaxed)
    }

    pub fn instantiation_count(&self) -> u64 {
        self.instantiations.load(Ordering::Relaxed)
    }
}
