//! Data producers: a Gray-Scott reaction-diffusion stepper and a synthetic
//! producer with controllable cost and payload size.

mod field;
mod grayscott;
mod synthetic;

pub use field::{Dims, ScalarField};
pub use grayscott::{gs_init, gs_step, GrayScott, GrayScottParams, SeedBox};
pub use synthetic::{fill_payload, synth_produce, SyntheticProducer, SyntheticProducerSpec};
