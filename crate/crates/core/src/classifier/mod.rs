//! The constraint network: a small feed-forward feasibility classifier with
//! exact parameter and input gradients.

mod net;
pub mod persist;
mod train;

pub use net::{sigmoid, ConstraintNet, Layer, NetSpec, DECISION_THRESHOLD};
pub use train::{bce_loss, loss_and_gradient, train, Optimizer, TrainReport, TrainSpec};
