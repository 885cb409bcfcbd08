use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{demo_infeasible_fraction, violation_fraction, EvalGrid};
use super::run::policy_rollouts;
use crate::classifier::ConstraintNet;
use crate::config::ExperimentConfig;
use crate::envs::EnvSpec;
use crate::error::{PuclError, Result};
use crate::rng::{Seeds, Stream};
use crate::types::{GeneralizedState, Trajectory};

/// Final metrics of a learned network. Undefined metrics are `None` and
/// named in `missing`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub iou: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub unsafe_rate: Option<f64>,
    pub demo_infeasible_fraction: Option<f64>,
    pub eval_points: usize,
    pub episodes: usize,
    pub missing: Vec<String>,
}

impl Metrics {
    pub fn complete(&self) -> bool {
        self.missing.is_empty()
    }
}

fn keep(metric: Result<f64>, name: &str, missing: &mut Vec<String>) -> Result<Option<f64>> {
    match metric {
        Ok(v) => Ok(Some(v)),
        Err(PuclError::MissingMetric(_)) => {
            missing.push(name.to_string());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Held-out evaluation starts, away from the true constraint.
pub fn held_out_starts(
    cfg: &ExperimentConfig,
    env: &EnvSpec,
    n: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rng = Seeds::new(cfg.seed).stream(Stream::HeldOut);
    Ok(env
        .sample_starts(n, &mut rng, Some(&cfg.constraint))?
        .into_iter()
        .enumerate()
        .collect())
}

/// Rolls out the policy built from `net` on held-out starts of `env`.
pub fn held_out_rollouts(
    cfg: &ExperimentConfig,
    env: &EnvSpec,
    net: &ConstraintNet,
    buffer: &[GeneralizedState],
    weight: f64,
) -> Result<Vec<Trajectory>> {
    if net.input_dim() != cfg.feature_dim() {
        return Err(PuclError::DimensionMismatch {
            expected: cfg.feature_dim(),
            found: net.input_dim(),
        });
    }
    let starts = held_out_starts(cfg, env, cfg.eval.held_out_episodes)?;
    policy_rollouts(
        cfg,
        env,
        Some(net),
        buffer,
        &starts,
        weight,
        0.0,
        &Seeds::new(cfg.seed),
        u64::MAX,
    )
}

/// Classification metrics on the configured evaluation points and the
/// unsafe rate over held-out episodes.
pub fn evaluate(
    cfg: &ExperimentConfig,
    net: &ConstraintNet,
    buffer: &[GeneralizedState],
    demos: &[Trajectory],
    weight: f64,
) -> Result<Metrics> {
    let grid = EvalGrid::build(&cfg.eval.points, cfg)?;
    let c = grid.confusion(net)?;
    let mut m = Metrics {
        eval_points: grid.len(),
        episodes: cfg.eval.held_out_episodes,
        ..Metrics::default()
    };
    m.iou = keep(c.iou(), "iou", &mut m.missing)?;
    m.recall = keep(c.recall(), "recall", &mut m.missing)?;
    m.precision = keep(c.precision(), "precision", &mut m.missing)?;
    m.accuracy = keep(c.accuracy(), "accuracy", &mut m.missing)?;
    m.demo_infeasible_fraction = keep(
        demo_infeasible_fraction(net, demos, &cfg.features),
        "demo_infeasible_fraction",
        &mut m.missing,
    )?;
    let trajs = held_out_rollouts(cfg, &cfg.env, net, buffer, weight)?;
    m.unsafe_rate = Some(violation_fraction(&trajs, &cfg.constraint));
    Ok(m)
}

/// Network output and true label at every evaluation point, for external
/// heat maps.
pub fn write_grid_predictions<W: Write>(
    cfg: &ExperimentConfig,
    net: &ConstraintNet,
    mut w: W,
) -> Result<()> {
    let grid = EvalGrid::build(&cfg.eval.points, cfg)?;
    let zeta = grid.predict(net)?;
    let dim = cfg.feature_dim();
    let cols: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(
        w,
        "{},zeta,predicted_infeasible,truly_infeasible",
        cols.join(",")
    )?;
    for ((p, z), t) in grid.points().iter().zip(&zeta).zip(grid.labels()) {
        let coords: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(
            w,
            "{},{z:?},{},{}",
            coords.join(","),
            u8::from(*z <= crate::classifier::DECISION_THRESHOLD),
            u8::from(*t)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMetrics {
    pub unsafe_rate: f64,
    /// Held-out episodes that reach the shifted goal.
    pub success_rate: f64,
    pub episodes: usize,
}

/// `env` with the goal and start region moved.
pub fn shifted_env(env: &EnvSpec, goal_shift: &[f64], start_shift: &[f64]) -> Result<EnvSpec> {
    let mut out = env.clone();
    if let Some(g) = out.goal.as_mut() {
        if goal_shift.len() != g.center.len() {
            return Err(PuclError::DimensionMismatch {
                expected: g.center.len(),
                found: goal_shift.len(),
            });
        }
        g.center
            .iter_mut()
            .zip(goal_shift)
            .for_each(|(c, d)| *c += d);
    }
    if start_shift.len() != out.starts.lower.len() {
        return Err(PuclError::DimensionMismatch {
            expected: out.starts.lower.len(),
            found: start_shift.len(),
        });
    }
    for ((l, u), d) in out
        .starts
        .lower
        .iter_mut()
        .zip(out.starts.upper.iter_mut())
        .zip(start_shift)
    {
        *l += d;
        *u += d;
    }
    out.validate()?;
    Ok(out)
}

/// Re-evaluates a frozen network on a task variant with shifted goal and
/// starts.
pub fn transfer_eval(
    cfg: &ExperimentConfig,
    net: &ConstraintNet,
    buffer: &[GeneralizedState],
    variant: &EnvSpec,
    weight: f64,
) -> Result<TransferMetrics> {
    if variant.state_dim() != cfg.env.state_dim() || variant.action_dim() != cfg.env.action_dim() {
        return Err(PuclError::DimensionMismatch {
            expected: cfg.env.state_dim(),
            found: variant.state_dim(),
        });
    }
    let trajs = held_out_rollouts(cfg, variant, net, buffer, weight)?;
    let reached = trajs.par_iter().filter(|t| variant.admissible(t)).count();
    Ok(TransferMetrics {
        unsafe_rate: violation_fraction(&trajs, &cfg.constraint),
        success_rate: reached as f64 / trajs.len().max(1) as f64,
        episodes: trajs.len(),
    })
}
