//! Cost model: affine stage-cost profiles, the A/B presets and an
//! event-driven simulator that predicts each pattern's makespan.

mod des;
mod profile;
mod recommend;

pub use des::{bytes_predicted, predict, PredictedReport};
pub use profile::{AffineCost, CostProfile, Preset};
pub use recommend::{rank, PatternLabel, Recommendation, DEFAULT_EPSILON};
