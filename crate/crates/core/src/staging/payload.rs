use std::fmt;
use std::ops::Deref;
use std::sync::{Arc, Mutex, Weak};
use std::time::Instant;

/// Recycles payload buffers so steady-state runs do not page-fault fresh
/// allocations on every step.
#[derive(Debug, Default)]
pub struct BufferPool {
    free: Mutex<Vec<Vec<u8>>>,
    retain: usize,
}

impl BufferPool {
    pub fn new(retain: usize) -> Arc<Self> {
        Arc::new(Self {
            free: Mutex::new(Vec::new()),
            retain,
        })
    }

    /// Buffer of exactly `len` bytes with unspecified contents.
    pub fn take(self: &Arc<Self>, len: usize) -> PayloadBuf {
        let reused = {
            let mut free = self.free.lock().unwrap();
            free.iter()
                .position(|b| b.len() == len)
                .map(|i| free.swap_remove(i))
        };
        PayloadBuf {
            data: reused.unwrap_or_else(|| vec![0u8; len]),
            home: Arc::downgrade(self),
        }
    }

    fn give_back(&self, data: Vec<u8>) {
        let mut free = self.free.lock().unwrap();
        if free.len() < self.retain {
            free.push(data);
        }
    }

    pub fn idle(&self) -> usize {
        self.free.lock().unwrap().len()
    }
}

pub struct PayloadBuf {
    data: Vec<u8>,
    home: Weak<BufferPool>,
}

impl PayloadBuf {
    pub fn unpooled(data: Vec<u8>) -> Self {
        Self {
            data,
            home: Weak::new(),
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }
}

impl Drop for PayloadBuf {
    fn drop(&mut self) {
        if let Some(pool) = self.home.upgrade() {
            pool.give_back(std::mem::take(&mut self.data));
        }
    }
}

/// Shared, immutable payload bytes. Cloning shares the buffer.
#[derive(Clone)]
pub struct PayloadBytes(Arc<PayloadBuf>);

impl PayloadBytes {
    pub fn new(buf: PayloadBuf) -> Self {
        Self(Arc::new(buf))
    }

    pub fn from_vec(data: Vec<u8>) -> Self {
        Self::new(PayloadBuf::unpooled(data))
    }
}

impl Deref for PayloadBytes {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0.data
    }
}

impl fmt::Debug for PayloadBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PayloadBytes({} bytes)", self.len())
    }
}

/// One step of one variable as it flows through staging.
#[derive(Debug, Clone)]
pub struct StepPayload {
    pub step_index: u64,
    pub variable: String,
    pub bytes: PayloadBytes,
    /// Set by a producer that already checked the step.
    pub qualified_hint: Option<bool>,
    pub produced_at: Instant,
}

impl StepPayload {
    pub fn new(variable: impl Into<String>, step_index: u64, bytes: PayloadBytes) -> Self {
        Self {
            step_index,
            variable: variable.into(),
            bytes,
            qualified_hint: None,
            produced_at: Instant::now(),
        }
    }

    pub fn with_hint(mut self, qualified: bool) -> Self {
        self.qualified_hint = Some(qualified);
        self
    }

    pub fn size(&self) -> u64 {
        self.bytes.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffers_return_to_pool() {
        let pool = BufferPool::new(4);
        let a = PayloadBytes::new(pool.take(1024));
        let b = a.clone();
        drop(a);
        assert_eq!(pool.idle(), 0);
        drop(b);
        assert_eq!(pool.idle(), 1);
        let c = pool.take(1024);
        assert_eq!(pool.idle(), 0);
        assert_eq!(c.data.len(), 1024);
        // different size allocates fresh
        let _d = pool.take(10);
        assert_eq!(pool.idle(), 0);
    }

    #[test]
    fn pool_retention_is_bounded() {
        let pool = BufferPool::new(1);
        let a = pool.take(8);
        let b = pool.take(8);
        drop(a);
        drop(b);
        assert_eq!(pool.idle(), 1);
    }
}
