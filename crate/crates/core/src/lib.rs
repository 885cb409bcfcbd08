//! Positive-unlabeled constraint learning from demonstrations.
//!
//! Demonstrations are feasible positives; rollouts of a policy that ignores
//! the unknown constraint are unlabeled. States far from every demonstration
//! are taken as reliably infeasible, a feed-forward classifier is trained on
//! both sets, and the policy is re-shaped around the learned infeasible
//! region until the two agree.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod envs;
pub mod error;
pub mod feature;
pub mod harness;
pub mod io;
pub mod policy;
pub mod pulearn;
pub mod rng;
pub mod types;

pub use classifier::{ConstraintNet, NetSpec, TrainSpec};
pub use config::{Backend, EarlyStop, EvalPoints, EvalSpec, ExperimentConfig, Task};
pub use envs::{EnvSpec, ExpertSpec, TrueConstraint};
pub use error::{PuclError, Result};
pub use feature::FeatureMap;
pub use harness::{IterationRecord, Learner, Metrics, RunOutput};
pub use pulearn::{FilterSpec, MemoryBuffer, ScoreSpec, ThresholdMode};
pub use rng::{Seeds, Stream};
pub use types::{Dataset, GeneralizedState, Provenance, StateAction, Trajectory};
