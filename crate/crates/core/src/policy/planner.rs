use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::penalty::{PidGains, Violation};
use crate::envs::{EnvSpec, OpenLoop};
use crate::error::{ensure_dim, PuclError, Result};
use crate::rng::Rng;
use crate::types::Trajectory;

/// Initial mean of the action distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    #[default]
    Zero,
    /// The capped linear attractor towards the goal (zero without a goal).
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSpec {
    pub samples: usize,
    pub elite_fraction: f64,
    pub rounds: usize,
    /// Initial per-dimension noise std as a fraction of the action cap.
    pub noise_fraction: f64,
    /// Piecewise-constant segments over the horizon; 0 means one per step.
    pub knots: usize,
    /// Weight of the terminal distance to the goal region.
    pub goal_weight: f64,
    pub warm_start: WarmStart,
    pub initial_weight: f64,
    pub pid: PidGains,
    pub violation_target: f64,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        PlannerSpec {
            samples: 64,
            elite_fraction: 0.125,
            rounds: 20,
            noise_fraction: 0.2,
            knots: 0,
            goal_weight: 10.0,
            warm_start: WarmStart::Nominal,
            initial_weight: 1.0,
            pid: PidGains::default(),
            violation_target: 0.0,
        }
    }
}

impl PlannerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.rounds == 0 {
            return Err(PuclError::Config(
                "planner needs at least one sample and one round".into(),
            ));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(PuclError::Config(
                "elite fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.noise_fraction >= 0.0)
            || !(self.goal_weight >= 0.0)
            || !(self.initial_weight >= 0.0)
        {
            return Err(PuclError::Config(
                "planner noise, goal weight and penalty weight must be >= 0".into(),
            ));
        }
        Ok(())
    }

    fn elites(&self) -> usize {
        ((self.elite_fraction * self.samples as f64).ceil() as usize).clamp(1, self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub best_objective: f64,
    pub violations: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub objective: f64,
    pub violations: usize,
    /// The best plan does not reach the goal.
    pub exhausted: bool,
    pub rounds: Vec<RoundLog>,
}

struct Knots {
    count: usize,
    horizon: usize,
    dim: usize,
}

impl Knots {
    fn index(&self, t: usize) -> usize {
        (t * self.count / self.horizon).min(self.count - 1)
    }

    fn expand(&self, params: &[f64]) -> Vec<Vec<f64>> {
        (0..self.horizon)
            .map(|t| {
                let k = self.index(t);
                params[k * self.dim..(k + 1) * self.dim].to_vec()
            })
            .collect()
    }

    /// Per-knot mean of a per-step sequence (missing steps count as zero).
    fn compress(&self, actions: &[Vec<f64>]) -> Vec<f64> {
        let mut sums = vec![0.0; self.count * self.dim];
        let mut counts = vec![0usize; self.count];
        for t in 0..self.horizon {
            let k = self.index(t);
            counts[k] += 1;
            if let Some(a) = actions.get(t) {
                for (j, v) in a.iter().enumerate().take(self.dim) {
                    sums[k * self.dim + j] += v;
                }
            }
        }
        for k in 0..self.count {
            for j in 0..self.dim {
                sums[k * self.dim + j] /= counts[k].max(1) as f64;
            }
        }
        sums
    }
}

struct Scored {
    objective: f64,
    violations: usize,
}

fn evaluate(
    env: &EnvSpec,
    start: &[f64],
    actions: &[Vec<f64>],
    violation: &dyn Violation,
    w_p: f64,
    goal_weight: f64,
) -> Scored {
    let mut s = start.to_vec();
    let mut total = 0.0;
    let mut discount = 1.0;
    let mut violations = 0;
    for a in actions {
        if env.in_goal(&s) {
            break;
        }
        let a = env.cap_action(a);
        let (next, r) = env.step(&s, &a);
        discount *= env.gamma;
        let c = violation.violated(&s, &a);
        if c {
            violations += 1;
        }
        total += discount * (r - if c { w_p } else { 0.0 });
        s = next;
    }
    Scored {
        objective: total - goal_weight * env.goal_gap(&s),
        violations,
    }
}

/// Per-step actions of the capped nominal attractor rolled out from `start`.
pub fn nominal_actions(env: &EnvSpec, start: &[f64]) -> Vec<Vec<f64>> {
    let Some(goal) = &env.goal else {
        return Vec::new();
    };
    let ds = goal.nominal();
    let policy = |s: &[f64], _: usize| ds.velocity(s, &env.speed_limit);
    env.rollout(&policy, start, 0)
        .map(|t| t.steps().iter().map(|sa| sa.action.clone()).collect())
        .unwrap_or_default()
}

/// Cross-entropy search over open-loop action sequences maximizing the
/// penalized return minus a goal-distance term. `init` overrides the warm
/// start. Deterministic given `rng`.
#[allow(clippy::too_many_arguments)]
pub fn plan_trajectory(
    env: &EnvSpec,
    start: &[f64],
    start_index: usize,
    violation: &dyn Violation,
    w_p: f64,
    spec: &PlannerSpec,
    init: Option<&[Vec<f64>]>,
    rng: &mut Rng,
) -> Result<PlanResult> {
    spec.validate()?;
    ensure_dim(env.state_dim(), start.len())?;
    let dim = env.action_dim();
    let horizon = env.horizon;
    let knots = Knots {
        count: if spec.knots == 0 {
            horizon
        } else {
            spec.knots.min(horizon)
        },
        horizon,
        dim,
    };
    let n_params = knots.count * dim;
    let caps: Vec<f64> = (0..n_params)
        .map(|i| env.speed_limit.component_cap(i % dim))
        .collect();

    let mut mean = match init {
        Some(a) => knots.compress(a),
        None => match spec.warm_start {
            WarmStart::Zero => vec![0.0; n_params],
            WarmStart::Nominal => knots.compress(&nominal_actions(env, start)),
        },
    };
    let mut std: Vec<f64> = caps.iter().map(|c| spec.noise_fraction * c).collect();
    let n_elite = spec.elites();

    let mut best: Option<(Vec<f64>, Scored)> = None;
    let mut logs = Vec::with_capacity(spec.rounds);
    for _ in 0..spec.rounds {
        // Noise is drawn up front so evaluation order cannot affect results.
        let candidates: Vec<Vec<f64>> = (0..spec.samples)
            .map(|i| {
                (0..n_params)
                    .map(|j| {
                        let eps: f64 = StandardNormal.sample(rng);
                        // Sample 0 is the current mean itself.
                        let v = if i == 0 {
                            mean[j]
                        } else {
                            mean[j] + std[j] * eps
                        };
                        v.clamp(-caps[j], caps[j])
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<Scored> = candidates
            .par_iter()
            .map(|c| {
                evaluate(
                    env,
                    start,
                    &knots.expand(c),
                    violation,
                    w_p,
                    spec.goal_weight,
                )
            })
            .collect();
        let mut order: Vec<usize> = (0..spec.samples).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .objective
                .total_cmp(&scores[a].objective)
                .then(a.cmp(&b))
        });
        let top = order[0];
        if best
            .as_ref()
            .map_or(true, |(_, s)| scores[top].objective > s.objective)
        {
            best = Some((
                candidates[top].clone(),
                Scored {
                    objective: scores[top].objective,
                    violations: scores[top].violations,
                },
            ));
        }
        let elites = &order[..n_elite];
        for j in 0..n_params {
            let m = elites.iter().map(|&e| candidates[e][j]).sum::<f64>() / n_elite as f64;
            let v = elites
                .iter()
                .map(|&e| (candidates[e][j] - m).powi(2))
                .sum::<f64>()
                / n_elite as f64;
            mean[j] = m;
            std[j] = v.sqrt();
        }
        let (_, b) = best.as_ref().expect("at least one round");
        logs.push(RoundLog {
            best_objective: b.objective,
            violations: b.violations,
            weight: w_p,
        });
    }

    let (params, scored) = best.expect("at least one round");
    let policy = OpenLoop {
        actions: knots.expand(&params),
        action_dim: dim,
    };
    let trajectory = env.rollout(&policy, start, start_index)?;
    let exhausted = env.goal.is_some() && !env.in_goal(trajectory.terminal());
    if exhausted {
        log::debug!("planner budget exhausted without reaching the goal from start {start_index}");
    }
    Ok(PlanResult {
        trajectory,
        objective: scored.objective,
        violations: scored.violations,
        exhausted,
        rounds: logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Dynamics, Goal, RewardKind, SpeedLimit, StartRegion};
    use crate::rng::{Seeds, Stream};

    fn plane() -> EnvSpec {
        EnvSpec {
            dynamics: Dynamics::PointMass,
            lower: vec![0.0, 0.0],
            upper: vec![2.0, 2.0],
            speed_limit: SpeedLimit::Norm { cap: 0.58 },
            dt: 0.05,
            horizon: 120,
            goal: Some(Goal {
                center: vec![1.8, 1.0],
                radius: 0.05,
                gain: 1.0,
            }),
            reward: RewardKind::PathLength,
            gamma: 1.0,
            starts: StartRegion {
                lower: vec![0.1, 0.5],
                upper: vec![0.3, 1.5],
                min_goal_distance: 0.0,
            },
            known: None,
        }
    }

    fn never(_: &[f64], _: &[f64]) -> bool {
        false
    }

    #[test]
    fn empty_workspace_gives_near_straight_path() {
        let env = plane();
        let spec = PlannerSpec {
            knots: 12,
            warm_start: WarmStart::Zero,
            ..PlannerSpec::default()
        };
        let start = [0.2, 0.6];
        let mut rng = Seeds::new(1).stream(Stream::Planner);
        let plan = plan_trajectory(&env, &start, 0, &never, 0.0, &spec, None, &mut rng).unwrap();
        assert!(!plan.exhausted);
        let straight = crate::types::euclidean(&start, &[1.8, 1.0]) - 0.05;
        let len = plan.trajectory.polyline_length();
        assert!(len <= 1.05 * straight, "path {len} vs straight {straight}");
    }

    #[test]
    fn large_penalty_avoids_learned_violations() {
        let env = plane();
        // A band the straight line would cross.
        let wall = |s: &[f64], _: &[f64]| (0.9..1.1).contains(&s[0]) && s[1] < 1.3;
        let spec = PlannerSpec {
            knots: 12,
            rounds: 30,
            warm_start: WarmStart::Zero,
            ..PlannerSpec::default()
        };
        let mut rng = Seeds::new(3).stream(Stream::Planner);
        let plan =
            plan_trajectory(&env, &[0.2, 1.0], 0, &wall, 1e3, &spec, None, &mut rng).unwrap();
        let hits = plan
            .trajectory
            .steps()
            .iter()
            .filter(|sa| wall(&sa.state, &sa.action))
            .count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let env = plane();
        let spec = PlannerSpec {
            knots: 10,
            rounds: 5,
            ..PlannerSpec::default()
        };
        let run = || {
            let mut rng = Seeds::new(9).stream(Stream::Planner);
            plan_trajectory(&env, &[0.2, 0.6], 0, &never, 0.0, &spec, None, &mut rng)
                .unwrap()
                .trajectory
        };
        assert_eq!(run(), run());
    }
}
