//! Constraint-respecting policies: the modulated dynamical system and the
//! cross-entropy planner on the penalized return with a PID-adapted weight.

mod field;
mod modulation;
mod nominal;
mod penalty;
mod planner;
mod speed;

pub use field::{single_linkage, ConstraintField, LearnedField, ObstacleField, ReferenceIndex};
pub use modulation::{
    eigenvalues, gamma, gamma_unclamped, modulated_velocity, modulation_at, modulation_matrix,
    reference_direction, tangent_basis, DsmPolicy, ModulationSpec,
};
pub use nominal::NominalDS;
pub use penalty::{
    penalized_return, pid_update, violation_rate, LearnedViolation, PidGains, PidLagrangian,
    Violation,
};
pub use planner::{nominal_actions, plan_trajectory, PlanResult, PlannerSpec, RoundLog, WarmStart};
pub use speed::{BoundaryGuard, SpeedScaled};
