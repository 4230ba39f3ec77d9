//! Data checking service: histogram peak indicator and scripted schedules
//! that make qualified-step patterns exact.

mod histogram;
mod schedule;

pub use histogram::{build_histogram, check, check_le_bytes, check_with, peak_position, Direction, Histogram, IndicatorResult};
pub use schedule::{scripted_check, QualifiedSchedule, ScheduleMode};
