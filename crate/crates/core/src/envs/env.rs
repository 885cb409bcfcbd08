use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::constraint::TrueConstraint;
use super::gait;
use crate::error::{ensure_dim, PuclError, Result};
use crate::policy::NominalDS;
use crate::rng::Rng;
use crate::types::{StateAction, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// `s' = s + h·a`, the action being a velocity.
    PointMass,
    /// The synthetic 18-dimensional locomotion system.
    Gait,
}

/// Bound on the action. Over-limit actions are scaled down uniformly, so the
/// direction is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedLimit {
    Norm { cap: f64 },
    Box { limits: Vec<f64> },
}

impl SpeedLimit {
    pub fn apply(&self, a: &[f64]) -> Vec<f64> {
        let factor = match self {
            SpeedLimit::Norm { cap } => {
                let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > *cap {
                    cap / n
                } else {
                    1.0
                }
            }
            SpeedLimit::Box { limits } => a
                .iter()
                .zip(limits)
                .filter(|(v, l)| v.abs() > **l)
                .map(|(v, l)| l / v.abs())
                .fold(1.0, f64::min),
        };
        if factor < 1.0 {
            a.iter().map(|v| v * factor).collect()
        } else {
            a.to_vec()
        }
    }

    /// Largest admissible magnitude of action component `i`.
    pub fn component_cap(&self, i: usize) -> f64 {
        match self {
            SpeedLimit::Norm { cap } => *cap,
            SpeedLimit::Box { limits } => limits[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    /// Negative Cartesian displacement per step.
    PathLength,
    /// `-h` per step: a faster arrival earns more.
    Time,
    /// Absolute displacement along one state coordinate.
    Progress { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Rate of the nominal attractor `ṡ = gain·(g − s)` before the speed cap.
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

impl Goal {
    pub fn nominal(&self) -> NominalDS {
        NominalDS::scaled_attractor(self.center.clone(), self.gain)
    }
}

/// Uniform box of start positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub min_goal_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub dynamics: Dynamics,
    /// Workspace bounds on the position coordinates (all state coordinates
    /// for the point mass, the forward position for the gait system).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub speed_limit: SpeedLimit,
    pub dt: f64,
    pub horizon: usize,
    pub goal: Option<Goal>,
    pub reward: RewardKind,
    pub gamma: f64,
    pub starts: StartRegion,
    /// Constraint the policy is told about (never learned).
    #[serde(default)]
    pub known: Option<TrueConstraint>,
}

/// Maps a state to an action. `step` is the index within the rollout.
pub trait Policy: Sync {
    fn act(&self, state: &[f64], step: usize) -> Vec<f64>;
}

impl<F> Policy for F
where
    F: Fn(&[f64], usize) -> Vec<f64> + Sync,
{
    fn act(&self, state: &[f64], step: usize) -> Vec<f64> {
        self(state, step)
    }
}

/// Replays a fixed action sequence; zero after it runs out.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop {
    pub actions: Vec<Vec<f64>>,
    pub action_dim: usize,
}

impl Policy for OpenLoop {
    fn act(&self, _state: &[f64], step: usize) -> Vec<f64> {
        self.actions
            .get(step)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.action_dim])
    }
}

impl EnvSpec {
    pub fn state_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::PointMass => self.lower.len(),
            Dynamics::Gait => gait::STATE_DIM,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::PointMass => self.lower.len(),
            Dynamics::Gait => gait::ACTION_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PuclError::Config(m.to_string()));
        let n = self.lower.len();
        if n == 0
            || self.upper.len() != n
            || self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u))
        {
            return bad("workspace bounds must be non-empty with lower < upper");
        }
        if self.dynamics == Dynamics::Gait && n != 1 {
            return bad("gait workspace bounds cover the forward position only");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("integration step must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        match &self.speed_limit {
            SpeedLimit::Norm { cap } if !(*cap > 0.0) => return bad("speed cap must be positive"),
            SpeedLimit::Box { limits }
                if limits.len() != self.action_dim() || limits.iter().any(|l| !(*l > 0.0)) =>
            {
                return bad("speed box needs one positive limit per action dimension")
            }
            _ => {}
        }
        if let Some(goal) = &self.goal {
            if goal.center.len() != self.state_dim()
                || !(goal.radius >= 0.0)
                || !(goal.gain > 0.0 && goal.gain.is_finite())
            {
                return bad("goal must match the state dimension with a non-negative radius and a positive gain");
            }
            if goal
                .center
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .any(|((g, l), u)| g < l || g > u)
            {
                return bad("goal must lie inside the workspace");
            }
        }
        if let RewardKind::Progress { index } = self.reward {
            if index >= self.state_dim() {
                return bad("progress reward index out of range");
            }
        }
        if self.starts.lower.len() != n
            || self.starts.upper.len() != n
            || self
                .starts
                .lower
                .iter()
                .zip(&self.starts.upper)
                .any(|(l, u)| l > u)
        {
            return bad("start region must match the workspace dimension with lower <= upper");
        }
        if let Some(k) = &self.known {
            k.validate(self.state_dim(), self.action_dim())?;
        }
        Ok(())
    }

    pub fn cap_action(&self, a: &[f64]) -> Vec<f64> {
        self.speed_limit.apply(a)
    }

    /// One integration step. The action is capped first; the reward uses
    /// the workspace-clipped successor.
    pub fn step(&self, s: &[f64], a: &[f64]) -> (Vec<f64>, f64) {
        let a = self.cap_action(a);
        let next = self.transition(s, &a);
        let r = self.reward(s, &next);
        (next, r)
    }

    fn transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        match self.dynamics {
            Dynamics::PointMass => s
                .iter()
                .zip(a)
                .zip(self.lower.iter().zip(&self.upper))
                .map(|((x, v), (l, u))| (x + self.dt * v).clamp(*l, *u))
                .collect(),
            Dynamics::Gait => {
                let mut next = gait::step(s, a, self.dt);
                next[0] = next[0].clamp(self.lower[0], self.upper[0]);
                next
            }
        }
    }

    /// Per-step reward from consecutive states.
    pub fn reward(&self, s: &[f64], next: &[f64]) -> f64 {
        match self.reward {
            RewardKind::PathLength => -crate::types::euclidean(s, next),
            RewardKind::Time => -self.dt,
            RewardKind::Progress { index } => (next[index] - s[index]).abs(),
        }
    }

    pub fn in_goal(&self, s: &[f64]) -> bool {
        match &self.goal {
            Some(g) => crate::types::euclidean(s, &g.center) <= g.radius,
            None => false,
        }
    }

    /// Distance from `s` to the goal ball (0 inside or when there is no goal).
    pub fn goal_gap(&self, s: &[f64]) -> f64 {
        match &self.goal {
            Some(g) => (crate::types::euclidean(s, &g.center) - g.radius).max(0.0),
            None => 0.0,
        }
    }

    /// Rollouts must reach the goal (when there is one) and respect the
    /// known constraint.
    pub fn admissible(&self, traj: &Trajectory) -> bool {
        if self.goal.is_some() && !self.in_goal(traj.terminal()) {
            return false;
        }
        match &self.known {
            Some(k) => !traj.steps().iter().any(|sa| k.is_truly_infeasible(sa)),
            None => true,
        }
    }

    /// Full state for a sampled start position.
    fn start_state(&self, position: Vec<f64>) -> Vec<f64> {
        match self.dynamics {
            Dynamics::PointMass => position,
            Dynamics::Gait => gait::initial_state(position[0]),
        }
    }

    /// Uniform start inside the start region, away from the goal and outside
    /// both the known constraint and `avoid`.
    pub fn sample_start(&self, rng: &mut Rng, avoid: Option<&TrueConstraint>) -> Result<Vec<f64>> {
        const ATTEMPTS: usize = 10_000;
        for _ in 0..ATTEMPTS {
            let position: Vec<f64> = self
                .starts
                .lower
                .iter()
                .zip(&self.starts.upper)
                .map(|(l, u)| if l < u { rng.random_range(*l..*u) } else { *l })
                .collect();
            let s = self.start_state(position);
            if self.goal.is_some() && self.goal_gap(&s) <= self.starts.min_goal_distance {
                continue;
            }
            if self.known.as_ref().is_some_and(|k| k.blocks_state(&s))
                || avoid.is_some_and(|c| c.blocks_state(&s))
            {
                continue;
            }
            return Ok(s);
        }
        Err(PuclError::Config(
            "start region has no admissible states".into(),
        ))
    }

    pub fn sample_starts(
        &self,
        n: usize,
        rng: &mut Rng,
        avoid: Option<&TrueConstraint>,
    ) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.sample_start(rng, avoid)).collect()
    }

    /// Integrates `policy` from `start` for up to `horizon` steps, stopping
    /// early inside the goal region.
    pub fn rollout(
        &self,
        policy: &dyn Policy,
        start: &[f64],
        start_index: usize,
    ) -> Result<Trajectory> {
        ensure_dim(self.state_dim(), start.len())?;
        let mut steps = Vec::new();
        let mut s = start.to_vec();
        let mut ret = 0.0;
        let mut discount = 1.0;
        for t in 0..self.horizon {
            if self.in_goal(&s) {
                break;
            }
            let a = self.cap_action(&policy.act(&s, t));
            ensure_dim(self.action_dim(), a.len())?;
            let next = self.transition(&s, &a);
            discount *= self.gamma;
            ret += discount * self.reward(&s, &next);
            steps.push(StateAction::new(s, a)?);
            s = next;
        }
        Trajectory::new(steps, s, start_index, ret)
    }

    /// `Σ_{t=1..T} γ^t r_t`, recomputed from the stored states.
    pub fn trajectory_return(&self, traj: &Trajectory) -> f64 {
        let states: Vec<&[f64]> = traj.states().collect();
        let mut discount = 1.0;
        let mut ret = 0.0;
        for w in states.windows(2) {
            discount *= self.gamma;
            ret += discount * self.reward(w[0], w[1]);
        }
        ret
    }
}
