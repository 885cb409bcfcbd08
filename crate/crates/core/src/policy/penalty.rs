use serde::{Deserialize, Serialize};

use crate::classifier::ConstraintNet;
use crate::envs::EnvSpec;
use crate::feature::FeatureMap;
use crate::types::Trajectory;

/// Violation indicator `c(s, a) ∈ {0, 1}`.
pub trait Violation: Sync {
    fn violated(&self, state: &[f64], action: &[f64]) -> bool;
}

impl<F> Violation for F
where
    F: Fn(&[f64], &[f64]) -> bool + Sync,
{
    fn violated(&self, state: &[f64], action: &[f64]) -> bool {
        self(state, action)
    }
}

/// `c_θ = 1` iff the network marks the features of `(s, a)` infeasible.
pub struct LearnedViolation<'a> {
    pub net: &'a ConstraintNet,
    pub features: &'a FeatureMap,
}

impl Violation for LearnedViolation<'_> {
    fn violated(&self, state: &[f64], action: &[f64]) -> bool {
        self.features
            .select(state, action)
            .and_then(|x| self.net.is_infeasible(&x))
            .unwrap_or(true)
    }
}

/// `Σ_t γ^t [r_t − w_p·c_t]`.
pub fn penalized_return(
    traj: &Trajectory,
    env: &EnvSpec,
    violation: &dyn Violation,
    w_p: f64,
) -> f64 {
    let states: Vec<&[f64]> = traj.states().collect();
    let mut discount = 1.0;
    let mut total = 0.0;
    for (t, sa) in traj.steps().iter().enumerate() {
        discount *= env.gamma;
        let c = if violation.violated(&sa.state, &sa.action) {
            1.0
        } else {
            0.0
        };
        total += discount * (env.reward(states[t], states[t + 1]) - w_p * c);
    }
    total
}

/// Fraction of steps flagged by `violation` (0 for no steps).
pub fn violation_rate(trajectories: &[Trajectory], violation: &dyn Violation) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for t in trajectories {
        for sa in t.steps() {
            total += 1;
            if violation.violated(&sa.state, &sa.action) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            kp: 2.0,
            ki: 0.5,
            kd: 0.1,
        }
    }
}

/// Penalty weight from the history of measured violation rates:
/// `max(0, K_p·e_t + K_i·max(0, Σ e_u) + K_d·(e_t − e_{t−1}))`.
pub fn pid_update(history: &[f64], gains: &PidGains, target: f64) -> f64 {
    let Some(&last) = history.last() else {
        return 0.0;
    };
    let e = last - target;
    let integral = history.iter().map(|r| r - target).sum::<f64>().max(0.0);
    let derivative = if history.len() >= 2 {
        e - (history[history.len() - 2] - target)
    } else {
        0.0
    };
    (gains.kp * e + gains.ki * integral + gains.kd * derivative).max(0.0)
}

/// Stateful wrapper that records rates and yields the current weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PidLagrangian {
    pub gains: PidGains,
    pub target: f64,
    history: Vec<f64>,
    weight: f64,
}

impl PidLagrangian {
    pub fn new(gains: PidGains, target: f64, initial_weight: f64) -> Self {
        PidLagrangian {
            gains,
            target,
            history: Vec::new(),
            weight: initial_weight.max(0.0),
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn observe(&mut self, rate: f64) -> f64 {
        self.history.push(rate);
        self.weight = pid_update(&self.history, &self.gains, self.target);
        self.weight
    }
}
