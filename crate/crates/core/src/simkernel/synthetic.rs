//! Synthetic data producer with a controllable per-step cost and payload size.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clock;
use crate::error::{Error, Result};
use crate::staging::{BufferPool, PayloadBuf, PayloadBytes, StepPayload};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProducerSpec {
    pub payload_bytes: u64,
    /// Emulated compute per step, milliseconds.
    pub gen_cost_ms: f64,
    pub steps: u64,
}

impl SyntheticProducerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.payload_bytes == 0 {
            return Err(Error::config("payload_bytes must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if !(self.gen_cost_ms >= 0.0) {
            return Err(Error::config("gen_cost_ms must be non-negative"));
        }
        Ok(())
    }

    fn check_step(&self, step_index: u64) -> Result<()> {
        if step_index == 0 || step_index > self.steps {
            return Err(Error::config(format!(
                "step {step_index} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream: word `j` of step `s` is `mix64(key(seed, s) + j * GOLDEN)`.
pub fn fill_payload(seed: u64, step_index: u64, out: &mut [u8]) {
    let key = mix64(seed ^ mix64(step_index.wrapping_mul(GOLDEN)));
    let mut chunks = out.chunks_exact_mut(8);
    let mut ctr = key;
    for chunk in &mut chunks {
        ctr = ctr.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix64(ctr).to_le_bytes());
    }
    let tail = chunks.into_remainder();
    if !tail.is_empty() {
        ctr = ctr.wrapping_add(GOLDEN);
        let word = mix64(ctr).to_le_bytes();
        tail.copy_from_slice(&word[..tail.len()]);
    }
}

/// Produces one step: fills a fresh buffer, then holds the caller until
/// `gen_cost_ms` has elapsed since entry.
pub fn synth_produce(
    spec: &SyntheticProducerSpec,
    seed: u64,
    variable: &str,
    step_index: u64,
) -> Result<StepPayload> {
    spec.validate()?;
    spec.check_step(step_index)?;
    let start = Instant::now();
    let mut data = vec![0u8; spec.payload_bytes as usize];
    fill_payload(seed, step_index, &mut data);
    clock::emulate_compute_since(start, spec.gen_cost_ms);
    Ok(StepPayload::new(variable, step_index, PayloadBytes::from_vec(data)))
}

/// Pooled producer used by live runs.
#[derive(Debug, Clone)]
pub struct SyntheticProducer {
    spec: SyntheticProducerSpec,
    seed: u64,
    variable: String,
    buffers: Arc<BufferPool>,
}

impl SyntheticProducer {
    pub fn new(spec: SyntheticProducerSpec, seed: u64, variable: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            seed,
            variable: variable.into(),
            buffers: BufferPool::new(8),
        })
    }

    pub fn spec(&self) -> &SyntheticProducerSpec {
        &self.spec
    }

    /// As [`synth_produce`], with `gen_cost_ms` overridden by `cost_ms`.
    pub fn produce_with_cost(&self, step_index: u64, cost_ms: f64) -> Result<StepPayload> {
        self.spec.check_step(step_index)?;
        let start = Instant::now();
        let mut buf: PayloadBuf = self.buffers.take(self.spec.payload_bytes as usize);
        fill_payload(self.seed, step_index, buf.as_mut_slice());
        clock::emulate_compute_since(start, cost_ms);
        let mut payload = StepPayload::new(self.variable.clone(), step_index, PayloadBytes::new(buf));
        payload.produced_at = start;
        Ok(payload)
    }

    /// Faults in `buffers` payload buffers ahead of a timed run so the first
    /// steps do not pay for fresh pages.
    pub fn prewarm(&self, buffers: usize) {
        let held: Vec<PayloadBuf> = (0..buffers)
            .map(|_| {
                let mut b = self.buffers.take(self.spec.payload_bytes as usize);
                b.as_mut_slice().fill(0xA5);
                b
            })
            .collect();
        drop(held);
    }

    pub fn produce(&self, step_index: u64) -> Result<StepPayload> {
        self.produce_with_cost(step_index, self.spec.gen_cost_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(bytes: u64, cost: f64) -> SyntheticProducerSpec {
        SyntheticProducerSpec {
            payload_bytes: bytes,
            gen_cost_ms: cost,
            steps: 4,
        }
    }

    #[test]
    fn payload_has_requested_length() {
        let p = synth_produce(&spec(32 << 20, 0.0), 7, "u", 1).unwrap();
        assert_eq!(p.bytes.len(), 33_554_432);
        let odd = synth_produce(&spec(13, 0.0), 7, "u", 2).unwrap();
        assert_eq!(odd.bytes.len(), 13);
    }

    #[test]
    fn payload_is_deterministic() {
        let a = synth_produce(&spec(4099, 0.0), 11, "u", 3).unwrap();
        let b = synth_produce(&spec(4099, 0.0), 11, "u", 3).unwrap();
        assert_eq!(&*a.bytes, &*b.bytes);
        let c = synth_produce(&spec(4099, 0.0), 11, "u", 4).unwrap();
        assert_ne!(&*a.bytes, &*c.bytes);
        let d = synth_produce(&spec(4099, 0.0), 12, "u", 3).unwrap();
        assert_ne!(&*a.bytes, &*d.bytes);
    }

    #[test]
    fn pooled_and_plain_agree() {
        let s = spec(1000, 0.0);
        let prod = SyntheticProducer::new(s, 5, "u").unwrap();
        for step in 1..=4 {
            let a = prod.produce(step).unwrap();
            let b = synth_produce(&s, 5, "u", step).unwrap();
            assert_eq!(&*a.bytes, &*b.bytes);
        }
    }

    #[test]
    fn step_out_of_range() {
        assert!(synth_produce(&spec(8, 0.0), 1, "u", 0).is_err());
        assert!(synth_produce(&spec(8, 0.0), 1, "u", 5).is_err());
        assert!(synth_produce(&spec(0, 0.0), 1, "u", 1).is_err());
    }

    #[test]
    fn generation_cost_is_honoured() {
        let t = Instant::now();
        synth_produce(&spec(1024, 20.0), 1, "u", 1).unwrap();
        assert!(t.elapsed().as_secs_f64() * 1e3 >= 20.0);
    }

    #[test]
    fn bytes_look_uniform() {
        let p = synth_produce(&spec(1 << 16, 0.0), 3, "u", 1).unwrap();
        let mut counts = [0u32; 256];
        for &b in p.bytes.iter() {
            counts[b as usize] += 1;
        }
        // 256 counts per bucket expected
        assert!(counts.iter().all(|&c| c > 150 && c < 370));
    }
}
