use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::constraint::TrueConstraint;
use super::env::{Dynamics, EnvSpec, Policy};
use super::gait;
use crate::error::{PuclError, Result};
use crate::policy::{plan_trajectory, DsmPolicy, ModulationSpec, ObstacleField, PlannerSpec};
use crate::rng::{Rng, Seeds, Stream};
use crate::types::Trajectory;

/// How the scripted expert picks actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertKind {
    /// Modulated attractor around the true obstacles grown by the margin.
    Dsm,
    /// Modulated attractor around the known obstacles, with each velocity
    /// clamped per axis into the true velocity box tightened by the margin.
    VelocityDsm,
    /// Gait system: drive backwards to `turn` (plus margin), then forwards.
    Shuttle { drive: f64, turn: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub kind: ExpertKind,
    pub margin: f64,
    pub noise_std: f64,
    /// Sub-optimality budget: accept iff `r ≥ r* − δ·|r*|`.
    pub delta: f64,
    pub max_attempts: usize,
    /// Slope of the analytic obstacle field, per metre.
    pub sharpness: f64,
    /// Planner used for the reference optimum.
    pub reference: PlannerSpec,
}

/// Accepted demonstrations with their reference optima.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstrations {
    pub trajectories: Vec<Trajectory>,
    pub reference_returns: Vec<f64>,
    pub attempts: usize,
}

struct Noisy<P> {
    inner: P,
    noise: Vec<Vec<f64>>,
}

impl<P: Policy> Policy for Noisy<P> {
    fn act(&self, state: &[f64], step: usize) -> Vec<f64> {
        let mut a = self.inner.act(state, step);
        if let Some(n) = self.noise.get(step) {
            a.iter_mut().zip(n).for_each(|(x, e)| *x += e);
        }
        a
    }
}

struct BoxClamp<P> {
    inner: P,
    limits: Vec<f64>,
}

impl<P: Policy> Policy for BoxClamp<P> {
    fn act(&self, state: &[f64], step: usize) -> Vec<f64> {
        let a = self.inner.act(state, step);
        a.iter()
            .zip(&self.limits)
            .map(|(v, l)| v.clamp(-l, *l))
            .collect()
    }
}

struct Shuttle {
    drive: f64,
    turn_step: usize,
}

impl Policy for Shuttle {
    fn act(&self, _state: &[f64], step: usize) -> Vec<f64> {
        let mut a = vec![0.0; gait::ACTION_DIM];
        a[0] = if step < self.turn_step {
            -self.drive
        } else {
            self.drive
        };
        a
    }
}

fn obstacle_dsm(
    env: &EnvSpec,
    obstacles: &TrueConstraint,
    spec: &ExpertSpec,
) -> Result<DsmPolicy<ObstacleField>> {
    let goal = env
        .goal
        .as_ref()
        .ok_or_else(|| PuclError::Config("modulated expert needs a goal".into()))?;
    Ok(DsmPolicy {
        nominal: goal.nominal(),
        field: ObstacleField::new(
            obstacles.inflated(spec.margin),
            spec.sharpness,
            env.state_dim(),
        ),
        limit: env.speed_limit.clone(),
        spec: ModulationSpec::default(),
    })
}

fn expert_rollout(
    env: &EnvSpec,
    tc: &TrueConstraint,
    spec: &ExpertSpec,
    start: &[f64],
    start_index: usize,
    noise: Vec<Vec<f64>>,
) -> Result<Trajectory> {
    match &spec.kind {
        ExpertKind::Dsm => env.rollout(
            &Noisy {
                inner: obstacle_dsm(env, tc, spec)?,
                noise,
            },
            start,
            start_index,
        ),
        ExpertKind::VelocityDsm => {
            let known = env
                .known
                .as_ref()
                .ok_or_else(|| PuclError::Config("velocity expert needs known obstacles".into()))?;
            let TrueConstraint::VelocityBox { limits } = tc.inflated(spec.margin) else {
                return Err(PuclError::Config(
                    "velocity expert needs a velocity-box constraint".into(),
                ));
            };
            env.rollout(
                &BoxClamp {
                    inner: Noisy {
                        inner: obstacle_dsm(env, known, spec)?,
                        noise,
                    },
                    limits,
                },
                start,
                start_index,
            )
        }
        ExpertKind::Shuttle { drive, turn } => {
            if env.dynamics != Dynamics::Gait {
                return Err(PuclError::Config(
                    "shuttle expert needs gait dynamics".into(),
                ));
            }
            let travel = (start[0] - (turn + spec.margin)).max(0.0);
            let per_step = gait::speed(-drive).abs() * env.dt;
            env.rollout(
                &Noisy {
                    inner: Shuttle {
                        drive: *drive,
                        turn_step: (travel / per_step).floor() as usize,
                    },
                    noise,
                },
                start,
                start_index,
            )
        }
    }
}

/// Best return of a feasible, admissible plan, warm-started from `seed`.
pub fn reference_optimum(
    env: &EnvSpec,
    tc: &TrueConstraint,
    planner: &PlannerSpec,
    seed: &Trajectory,
    rng: &mut Rng,
) -> Result<f64> {
    let violation = |s: &[f64], a: &[f64]| {
        let sa = crate::types::StateAction {
            state: s.to_vec(),
            action: a.to_vec(),
        };
        tc.is_truly_infeasible(&sa)
            || env
                .known
                .as_ref()
                .is_some_and(|k| k.is_truly_infeasible(&sa))
    };
    let init: Vec<Vec<f64>> = seed.steps().iter().map(|sa| sa.action.clone()).collect();
    let plan = plan_trajectory(
        env,
        seed.start_state(),
        seed.start_index(),
        &violation,
        planner.initial_weight,
        planner,
        Some(&init),
        rng,
    )?;
    let t = &plan.trajectory;
    let clean = env.admissible(t) && !t.steps().iter().any(|sa| violation(&sa.state, &sa.action));
    Ok(if clean {
        t.cached_return().max(seed.cached_return())
    } else {
        seed.cached_return()
    })
}

/// Whether `traj` satisfies the feasibility half of the demonstration
/// assumption (and reaches the goal / respects the known constraint).
pub fn is_feasible_demo(env: &EnvSpec, tc: &TrueConstraint, traj: &Trajectory) -> bool {
    env.admissible(traj) && !traj.steps().iter().any(|sa| tc.is_truly_infeasible(sa))
}

/// `r ≥ r* − δ·|r*|`.
pub fn is_delta_suboptimal(ret: f64, reference: f64, delta: f64) -> bool {
    ret >= reference - delta * reference.abs()
}

/// Draws `count` demonstrations, re-drawing start and noise for rejected
/// samples until `max_attempts` draws in total have been used.
pub fn generate_demonstrations(
    env: &EnvSpec,
    tc: &TrueConstraint,
    spec: &ExpertSpec,
    count: usize,
    seeds: &Seeds,
) -> Result<Demonstrations> {
    if count == 0 {
        return Err(PuclError::Config(
            "demonstration count must be at least 1".into(),
        ));
    }
    if !(spec.delta >= 0.0 && spec.delta < 1.0) || !(spec.noise_std >= 0.0) || !(spec.margin >= 0.0)
    {
        return Err(PuclError::Config(
            "expert delta must lie in [0, 1); noise and margin >= 0".into(),
        ));
    }
    let mut starts_rng = seeds.stream(Stream::Starts);
    let mut noise_rng = seeds.stream(Stream::Expert);
    let normal = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| PuclError::Config(format!("expert noise: {e}")))?;
    let mut accepted = Vec::with_capacity(count);
    let mut references = Vec::with_capacity(count);
    let mut attempts = 0;
    let mut last_reason = String::new();
    while accepted.len() < count {
        if attempts >= spec.max_attempts {
            return Err(PuclError::ExpertExhausted {
                attempts,
                reason: last_reason,
            });
        }
        attempts += 1;
        let start = env.sample_start(&mut starts_rng, Some(tc))?;
        let noise: Vec<Vec<f64>> = (0..env.horizon)
            .map(|_| {
                (0..env.action_dim())
                    .map(|_| {
                        if spec.noise_std > 0.0 {
                            normal.sample(&mut noise_rng)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let index = accepted.len();
        let traj = expert_rollout(env, tc, spec, &start, index, noise)?;
        if !is_feasible_demo(env, tc, &traj) {
            last_reason = "demonstration violates the true constraint or misses the goal".into();
            continue;
        }
        let mut plan_rng = seeds.indexed(Stream::Expert, attempts as u64);
        let reference = reference_optimum(env, tc, &spec.reference, &traj, &mut plan_rng)?;
        if !is_delta_suboptimal(traj.cached_return(), reference, spec.delta) {
            last_reason = format!(
                "return {:.4} is not within delta {} of the reference optimum {:.4}",
                traj.cached_return(),
                spec.delta,
                reference
            );
            continue;
        }
        accepted.push(traj);
        references.push(reference);
    }
    Ok(Demonstrations {
        trajectories: accepted,
        reference_returns: references,
        attempts,
    })
}
