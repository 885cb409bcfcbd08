//! Two-step positive-unlabeled machinery: kNN distance scoring of unlabeled
//! rollout states against demonstrations, reliable-infeasible selection and
//! expansion, the reward-based rollout filter, and the memory buffer.

mod buffer;
mod filter;
mod reliable;
mod score;
mod standardize;

pub use buffer::MemoryBuffer;
pub use filter::{policy_filter, FilterForm, FilterSpec};
pub use reliable::{
    calibrate_threshold, expand_reliable, identify_reliable, Identification, ReliableSet,
};
pub use score::{knn_score, knn_scores, Metric, ScoreSpec, ThresholdMode};
pub use standardize::{standardize_combined, Standardization};
