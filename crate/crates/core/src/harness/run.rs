use std::io::Write;
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{violation_fraction, EvalGrid};
use crate::classifier::{train, ConstraintNet};
use crate::config::{Backend, ExperimentConfig};
use crate::envs::{generate_demonstrations, Demonstrations, EnvSpec, Policy, SpeedLimit};
use crate::error::{PuclError, Result};
use crate::feature::FeatureMap;
use crate::policy::{
    plan_trajectory, violation_rate, BoundaryGuard, DsmPolicy, LearnedField, LearnedViolation,
    ObstacleField, PidLagrangian, SpeedScaled,
};
use crate::pulearn::{
    calibrate_threshold, expand_reliable, identify_reliable, policy_filter, MemoryBuffer,
    ReliableSet, ScoreSpec, ThresholdMode,
};
use crate::rng::{Seeds, Stream};
use crate::types::{flatten_trajectories, Dataset, GeneralizedState, Provenance, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Pucl,
    /// Every filtered rollout state is taken as infeasible.
    Bc,
}

/// One row of the learning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Environment steps executed by policy rollouts so far.
    pub env_steps: usize,
    pub rollouts: usize,
    /// Rollouts that reach the goal without breaking a known constraint.
    pub admissible: usize,
    /// Rollouts kept by the return filter.
    pub kept: usize,
    /// `|P|` after the filter, in generalized states.
    pub filtered_points: usize,
    pub identified: usize,
    /// `|R|` after expansion.
    pub reliable: usize,
    pub buffer: usize,
    pub threshold: f64,
    pub loss: f64,
    pub iou: Option<f64>,
    /// True violation rate of this iteration's rollouts.
    pub unsafe_rate: f64,
    pub penalty_weight: Option<f64>,
    /// Not part of the CSV trace, which must be reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

const TRACE_HEADER: &str = "iteration,env_steps,rollouts,admissible,kept,filtered_points,identified,reliable,buffer,threshold,loss,iou,unsafe_rate,penalty_weight";

pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:?},{:?},{},{:?},{}",
            r.iteration,
            r.env_steps,
            r.rollouts,
            r.admissible,
            r.kept,
            r.filtered_points,
            r.identified,
            r.reliable,
            r.buffer,
            r.threshold,
            r.loss,
            opt(r.iou),
            r.unsafe_rate,
            opt(r.penalty_weight)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub net: ConstraintNet,
    pub trace: Vec<IterationRecord>,
    pub buffer: MemoryBuffer,
    pub stopped_early: bool,
    /// Penalty weight the planner would use next.
    pub final_weight: f64,
    pub wall_seconds: f64,
}

/// Demonstrations for `cfg`, drawn from its master seed.
pub fn demonstrations(cfg: &ExperimentConfig) -> Result<Demonstrations> {
    cfg.validate()?;
    generate_demonstrations(
        &cfg.env,
        &cfg.constraint,
        &cfg.expert,
        cfg.demos,
        &Seeds::new(cfg.seed),
    )
}

pub fn run_pucl(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run(cfg, Learner::Pucl, &demonstrations(cfg)?.trajectories)
}

pub fn run_bc_baseline(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run(cfg, Learner::Bc, &demonstrations(cfg)?.trajectories)
}

/// Per-dimension mean and inverse standard deviation of the demonstration
/// features; near-constant dimensions keep unit scale.
fn input_normalization(d: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let dim = d.dim().unwrap_or(0);
    let n = d.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for p in d.points() {
        mean.iter_mut()
            .zip(p.as_slice())
            .for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; dim];
    for p in d.points() {
        var.iter_mut()
            .zip(p.as_slice().iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    let scale = var
        .iter()
        .map(|v| if v.sqrt() > 1e-6 { 1.0 / v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

/// The policy of one iteration, before exploration noise and the boundary
/// guard. `net = None` is the unconstrained policy.
pub fn build_policy<'a>(
    cfg: &'a ExperimentConfig,
    env: &'a EnvSpec,
    net: Option<&ConstraintNet>,
    buffer: &[GeneralizedState],
) -> Result<Box<dyn Policy + 'a>> {
    if cfg.backend != Backend::Dsm {
        return Err(PuclError::Config(
            "closed-loop policies exist only for the DSM backend".into(),
        ));
    }
    let goal = env
        .goal
        .as_ref()
        .ok_or_else(|| PuclError::Config("the DSM backend needs a goal".into()))?;
    let nominal = goal.nominal();
    match (&cfg.features, net) {
        (FeatureMap::ActionOnly, net) => {
            let known = env
                .known
                .as_ref()
                .ok_or_else(|| PuclError::Config("action features need known obstacles".into()))?;
            let base = DsmPolicy {
                nominal,
                field: ObstacleField::new(
                    known.inflated(cfg.expert.margin),
                    cfg.expert.sharpness,
                    env.state_dim(),
                ),
                limit: env.speed_limit.clone(),
                spec: cfg.modulation,
            };
            Ok(match net {
                Some(n) => Box::new(SpeedScaled::new(base, n.clone())),
                None => Box::new(base),
            })
        }
        (_, Some(n)) => {
            let pts: Vec<Vec<f64>> = buffer.iter().map(|g| g.as_slice().to_vec()).collect();
            Ok(Box::new(DsmPolicy {
                nominal,
                field: LearnedField::new(n.clone(), &pts, cfg.reference_radius()),
                limit: env.speed_limit.clone(),
                spec: cfg.modulation,
            }))
        }
        (_, None) => {
            let limit = env.speed_limit.clone();
            Ok(Box::new(move |s: &[f64], _: usize| {
                nominal.velocity(s, &limit)
            }))
        }
    }
}

/// Adds a pre-drawn noise sequence to the actions of `inner`.
struct Perturbed<'a> {
    inner: &'a dyn Policy,
    noise: Vec<Vec<f64>>,
    limit: &'a SpeedLimit,
}

impl Policy for Perturbed<'_> {
    fn act(&self, state: &[f64], step: usize) -> Vec<f64> {
        let mut a = self.inner.act(state, step);
        if let Some(n) = self.noise.get(step) {
            a.iter_mut().zip(n).for_each(|(v, e)| *v += e);
            a = self.limit.apply(&a);
        }
        a
    }
}

fn noise_table(env: &EnvSpec, std: f64, rng: &mut crate::rng::Rng) -> Result<Vec<Vec<f64>>> {
    if std == 0.0 {
        return Ok(Vec::new());
    }
    let adim = env.action_dim();
    let scale: Vec<f64> = (0..adim)
        .map(|i| std * env.speed_limit.component_cap(i))
        .collect();
    let normal =
        Normal::new(0.0, 1.0).map_err(|_| PuclError::Config("invalid exploration noise".into()))?;
    Ok((0..env.horizon)
        .map(|_| scale.iter().map(|c| c * normal.sample(rng)).collect())
        .collect())
}

/// Rollouts of the current policy from `starts` (paired by index). `noise`
/// is the exploration std as a fraction of the speed cap; rollouts from
/// state-feature networks are kept outside the learned boundary.
#[allow(clippy::too_many_arguments)]
pub fn policy_rollouts(
    cfg: &ExperimentConfig,
    env: &EnvSpec,
    net: Option<&ConstraintNet>,
    buffer: &[GeneralizedState],
    starts: &[(usize, Vec<f64>)],
    weight: f64,
    noise: f64,
    seeds: &Seeds,
    salt: u64,
) -> Result<Vec<Trajectory>> {
    match cfg.backend {
        Backend::Dsm => {
            let base = build_policy(cfg, env, net, buffer)?;
            let guard = net.filter(|_| cfg.features == FeatureMap::StateOnly);
            starts
                .par_iter()
                .enumerate()
                .map(|(j, (i, s))| {
                    let mut rng = seeds.indexed(
                        Stream::Explore,
                        salt.wrapping_mul(1 << 20).wrapping_add(j as u64),
                    );
                    let p = Perturbed {
                        inner: base.as_ref(),
                        noise: noise_table(env, noise, &mut rng)?,
                        limit: &env.speed_limit,
                    };
                    match guard {
                        Some(n) => env.rollout(
                            &BoundaryGuard::new(p, n.clone(), env.dt, env.speed_limit.clone()),
                            s,
                            *i,
                        ),
                        None => env.rollout(&p, s, *i),
                    }
                })
                .collect()
        }
        Backend::Planner => starts
            .par_iter()
            .map(|(i, s)| {
                let mut rng = seeds.indexed(
                    Stream::Planner,
                    salt.wrapping_mul(1 << 20).wrapping_add(*i as u64),
                );
                let plan = match net {
                    Some(n) => {
                        let v = LearnedViolation {
                            net: n,
                            features: &cfg.features,
                        };
                        plan_trajectory(env, s, *i, &v, weight, &cfg.planner, None, &mut rng)?
                    }
                    None => {
                        let v = |_: &[f64], _: &[f64]| false;
                        plan_trajectory(env, s, *i, &v, 0.0, &cfg.planner, None, &mut rng)?
                    }
                };
                Ok(plan.trajectory)
            })
            .collect(),
    }
}

fn dataset_of(
    trajs: &[Trajectory],
    features: &FeatureMap,
    provenance: Provenance,
) -> Result<Dataset> {
    if trajs.is_empty() {
        Ok(Dataset::new(Vec::new(), provenance))
    } else {
        flatten_trajectories(trajs, features, provenance)
    }
}

fn converged(trace: &[IterationRecord], cfg: &ExperimentConfig) -> bool {
    let Some(es) = cfg.early_stop else {
        return false;
    };
    if trace.len() <= es.window {
        return false;
    }
    let recent: Option<Vec<f64>> = trace[trace.len() - es.window - 1..]
        .iter()
        .map(|r| r.iou)
        .collect();
    match recent {
        Some(v) => v.windows(2).all(|w| (w[1] - w[0]).abs() < es.tolerance),
        None => false,
    }
}

/// Algorithm 1. The first iteration rolls out the unconstrained policy;
/// every later one uses the network trained in the previous iteration.
pub fn run(cfg: &ExperimentConfig, learner: Learner, demos: &[Trajectory]) -> Result<RunOutput> {
    cfg.validate()?;
    let clock = Instant::now();
    let seeds = Seeds::new(cfg.seed);
    let dim = cfg.feature_dim();
    let mut net = ConstraintNet::new(dim, &cfg.net, &mut seeds.stream(Stream::Init))?;
    let mut out = RunOutput {
        net: net.clone(),
        trace: Vec::new(),
        buffer: MemoryBuffer::new(),
        stopped_early: false,
        final_weight: cfg.planner.initial_weight,
        wall_seconds: 0.0,
    };
    if cfg.iterations == 0 {
        return Ok(out);
    }
    let d = flatten_trajectories(demos, &cfg.features, Provenance::Demonstration)?;
    let (shift, scale) = input_normalization(&d);
    net.set_input_normalization(shift, scale)?;
    let grid = EvalGrid::build(
        cfg.eval.trace_points.as_ref().unwrap_or(&cfg.eval.points),
        cfg,
    )?;
    let reps = if cfg.backend == Backend::Dsm {
        cfg.exploration.rollouts_per_start
    } else {
        1
    };
    let starts: Vec<(usize, Vec<f64>)> = demos
        .iter()
        .flat_map(|t| std::iter::repeat((t.start_index(), t.start_state().to_vec())).take(reps))
        .collect();

    let mut pid = PidLagrangian::new(
        cfg.planner.pid,
        cfg.planner.violation_target,
        cfg.planner.initial_weight,
    );
    let mut score: ScoreSpec = cfg.score;
    let mut env_steps = 0;
    for it in 1..=cfg.iterations {
        let iter_clock = Instant::now();
        let trained = it > 1;
        let weight = pid.weight();
        let rollouts = policy_rollouts(
            cfg,
            &cfg.env,
            trained.then_some(&net),
            out.buffer.points(),
            &starts,
            weight,
            cfg.exploration.noise,
            &seeds,
            it as u64,
        )
        .map_err(|e| e.at_iteration(it))?;
        env_steps += rollouts.iter().map(Trajectory::len).sum::<usize>();
        let unsafe_rate = violation_fraction(&rollouts, &cfg.constraint);
        let penalty_weight = if cfg.backend == Backend::Planner {
            if trained {
                let v = LearnedViolation {
                    net: &net,
                    features: &cfg.features,
                };
                pid.observe(violation_rate(&rollouts, &v));
                Some(weight)
            } else {
                Some(0.0)
            }
        } else {
            None
        };

        let admissible: Vec<Trajectory> = rollouts
            .iter()
            .filter(|t| cfg.env.admissible(t))
            .cloned()
            .collect();
        let kept =
            policy_filter(&admissible, demos, &cfg.filter).map_err(|e| e.at_iteration(it))?;
        let p = dataset_of(&kept, &cfg.features, Provenance::Policy)?;

        let (reliable, identified, threshold) = match learner {
            Learner::Bc => (ReliableSet::from_points(p.points().to_vec()), p.len(), 0.0),
            Learner::Pucl => {
                if let ThresholdMode::CalibratedPercentile { x } = score.threshold {
                    if !p.is_empty() {
                        let d_r = calibrate_threshold(&p, &d, &score, x)
                            .map_err(|e| e.at_iteration(it))?;
                        score.threshold = ThresholdMode::Absolute { d_r };
                    }
                }
                let id = identify_reliable(&p, &d, &score).map_err(|e| e.at_iteration(it))?;
                let expanded =
                    expand_reliable(&id.reliable, &p, &score, id.standardization.as_ref())
                        .map_err(|e| e.at_iteration(it))?;
                (expanded, id.reliable.len(), id.threshold)
            }
        };

        let infeasible = out.buffer.union_with(reliable.points());
        let report =
            train(&mut net, d.points(), &infeasible, &cfg.train).map_err(|e| e.at_iteration(it))?;
        out.buffer.merge(reliable.points(), it);
        let iou = grid.confusion(&net)?.iou().ok();

        out.trace.push(IterationRecord {
            iteration: it,
            env_steps,
            rollouts: rollouts.len(),
            admissible: admissible.len(),
            kept: kept.len(),
            filtered_points: p.len(),
            identified,
            reliable: reliable.len(),
            buffer: out.buffer.len(),
            threshold,
            loss: report.final_loss(),
            iou,
            unsafe_rate,
            penalty_weight,
            wall_seconds: iter_clock.elapsed().as_secs_f64(),
        });
        log::info!(
            "iteration {it}: |P| {} |R| {} |M| {} loss {:.4} iou {:?}",
            p.len(),
            reliable.len(),
            out.buffer.len(),
            report.final_loss(),
            iou
        );
        if converged(&out.trace, cfg) {
            out.stopped_early = true;
            break;
        }
    }
    out.net = net;
    out.final_weight = pid.weight();
    out.wall_seconds = clock.elapsed().as_secs_f64();
    Ok(out)
}
