//! Data-driven task trigger patterns for loosely coupled in-situ workflows:
//! a Gray-Scott producer, a histogram indicator, an in-memory staging
//! service, a live pattern orchestrator, an event-driven cost model and a
//! benchmark harness.

pub mod clock;
pub mod costmodel;
pub mod error;
pub mod harness;
pub mod indicator;
pub mod orchestrator;
pub mod scalar;
pub mod simkernel;
pub mod staging;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision concentration field.
pub type Field = simkernel::ScalarField<f64>;
/// Single-precision concentration field.
pub type Field32 = simkernel::ScalarField<f32>;
pub type Params = simkernel::GrayScottParams<f64>;
pub type Params32 = simkernel::GrayScottParams<f32>;
pub type Simulation = simkernel::GrayScott<f64>;
pub type Simulation32 = simkernel::GrayScott<f32>;
pub type ValueHistogram = indicator::Histogram<f64>;
pub type CheckResult = indicator::IndicatorResult<f64>;
