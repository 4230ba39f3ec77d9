//! The three trigger patterns wired over staging and a worker pool.

mod events;
mod live;
mod plan;
mod pool;

pub use events::{measure_stage_times, Event, EventLog, EventType, Stage, StageProfile};
pub use live::{run_pattern, run_pattern_c, run_pattern_m, run_pattern_p, DataSource, RunReport};
pub use plan::{Oversubscription, RunPlan, StageCosts, TriggerPattern};
pub use pool::{Lease, WorkerPool};
