//! Deterministic environments with hidden true constraints, rollouts and the
//! scripted demonstrator.

mod constraint;
mod env;
mod expert;
pub mod gait;

pub use constraint::{Cylinder, Ellipse, ObstacleGap, TrueConstraint};
pub use env::{Dynamics, EnvSpec, Goal, OpenLoop, Policy, RewardKind, SpeedLimit, StartRegion};
pub use expert::{
    generate_demonstrations, is_delta_suboptimal, is_feasible_demo, reference_optimum,
    Demonstrations, ExpertKind, ExpertSpec,
};
