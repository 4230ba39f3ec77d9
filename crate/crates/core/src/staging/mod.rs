//! Data staging between tasks and the publish/subscribe trigger registry.

mod payload;
mod pubsub;
mod store;

pub use payload::{BufferPool, PayloadBuf, PayloadBytes, StepPayload};
pub use pubsub::{SubscriptionId, TaskTemplate, TopicSubscription, Trigger, TriggerRegistry};
pub use store::{StagingConfig, StagingService, StagingStats, TransferModel};
