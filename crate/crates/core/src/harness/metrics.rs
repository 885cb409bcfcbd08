use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ConstraintNet;
use crate::config::{EvalPoints, ExperimentConfig};
use crate::envs::{generate_demonstrations, EnvSpec, Policy, TrueConstraint};
use crate::error::{ensure_dim, PuclError, Result};
use crate::feature::FeatureMap;
use crate::rng::{Seeds, Stream};
use crate::types::Trajectory;
use rand::Rng as _;

/// Evaluation points in feature space with their cached true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    points: Vec<Vec<f64>>,
    /// `true` where the point is truly infeasible.
    labels: Vec<bool>,
}

/// Cell centres of a uniform grid, first coordinate varying slowest.
pub fn grid_points(lower: &[f64], upper: &[f64], resolution: &[usize]) -> Vec<Vec<f64>> {
    let total: usize = resolution.iter().product();
    let dim = resolution.len();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        out.push(
            (0..dim)
                .map(|d| {
                    lower[d] + (idx[d] as f64 + 0.5) * (upper[d] - lower[d]) / resolution[d] as f64
                })
                .collect(),
        );
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < resolution[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

impl EvalGrid {
    pub fn from_labeled(points: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        ensure_dim(points.len(), labels.len())?;
        Ok(EvalGrid { points, labels })
    }

    /// Labels feature-space points by embedding them into a state-action
    /// pair (unselected coordinates zero) and asking the true constraint.
    pub fn label(
        points: Vec<Vec<f64>>,
        features: &FeatureMap,
        env: &EnvSpec,
        constraint: &TrueConstraint,
    ) -> Result<Self> {
        let labels = points
            .iter()
            .map(|p| {
                features
                    .embed(p, env.state_dim(), env.action_dim())
                    .map(|sa| constraint.is_truly_infeasible(&sa))
            })
            .collect::<Result<Vec<bool>>>()?;
        Ok(EvalGrid { points, labels })
    }

    pub fn build(spec: &EvalPoints, cfg: &ExperimentConfig) -> Result<Self> {
        let points = match spec {
            EvalPoints::Grid {
                lower,
                upper,
                resolution,
            } => grid_points(lower, upper, resolution),
            EvalPoints::AxisSweep {
                axis,
                lower,
                upper,
                count,
                episodes,
            } => {
                let seed: u64 = Seeds::new(cfg.seed).stream(Stream::Eval).random();
                let held_out = generate_demonstrations(
                    &cfg.env,
                    &cfg.constraint,
                    &cfg.expert,
                    *episodes,
                    &Seeds::new(seed),
                )?;
                let mut base = Vec::new();
                for t in &held_out.trajectories {
                    for sa in t.steps() {
                        base.push(cfg.features.select(&sa.state, &sa.action)?);
                    }
                }
                let mut pts = Vec::with_capacity(base.len() * count);
                for b in &base {
                    for i in 0..*count {
                        let mut p = b.clone();
                        p[*axis] = lower + (upper - lower) * i as f64 / (*count - 1) as f64;
                        pts.push(p);
                    }
                }
                pts
            }
        };
        Self::label(points, &cfg.features, &cfg.env, &cfg.constraint)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Network outputs at every point.
    pub fn predict(&self, net: &ConstraintNet) -> Result<Vec<f64>> {
        self.points.par_iter().map(|p| net.predict(p)).collect()
    }

    pub fn confusion(&self, net: &ConstraintNet) -> Result<Confusion> {
        let zeta = self.predict(net)?;
        let predicted: Vec<bool> = zeta
            .iter()
            .map(|z| *z <= crate::classifier::DECISION_THRESHOLD)
            .collect();
        Ok(Confusion::count(&predicted, &self.labels))
    }
}

/// Counts with "positive" meaning infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    /// Predicted infeasible, truly infeasible.
    pub true_infeasible: usize,
    /// Predicted infeasible, truly feasible.
    pub false_infeasible: usize,
    /// Predicted feasible, truly infeasible.
    pub false_feasible: usize,
    pub true_feasible: usize,
}

impl Confusion {
    pub fn count(predicted_infeasible: &[bool], truly_infeasible: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted_infeasible.iter().zip(truly_infeasible) {
            match (p, t) {
                (true, true) => c.true_infeasible += 1,
                (true, false) => c.false_infeasible += 1,
                (false, true) => c.false_feasible += 1,
                (false, false) => c.true_feasible += 1,
            }
        }
        c
    }

    fn ratio(num: usize, den: usize, name: &'static str) -> Result<f64> {
        if den == 0 {
            Err(PuclError::MissingMetric(name))
        } else {
            Ok(num as f64 / den as f64)
        }
    }

    pub fn iou(&self) -> Result<f64> {
        let union = self.true_infeasible + self.false_infeasible + self.false_feasible;
        Self::ratio(self.true_infeasible, union, "iou")
    }

    pub fn recall(&self) -> Result<f64> {
        Self::ratio(
            self.true_infeasible,
            self.true_infeasible + self.false_feasible,
            "recall",
        )
    }

    pub fn precision(&self) -> Result<f64> {
        Self::ratio(
            self.true_infeasible,
            self.true_infeasible + self.false_infeasible,
            "precision",
        )
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total =
            self.true_infeasible + self.false_infeasible + self.false_feasible + self.true_feasible;
        Self::ratio(self.true_infeasible + self.true_feasible, total, "accuracy")
    }
}

pub fn iou(net: &ConstraintNet, grid: &EvalGrid) -> Result<f64> {
    grid.confusion(net)?.iou()
}

pub fn recall_precision(net: &ConstraintNet, grid: &EvalGrid) -> Result<(f64, f64)> {
    let c = grid.confusion(net)?;
    Ok((c.recall()?, c.precision()?))
}

/// Fraction of executed steps that break the true constraint; 0 when no
/// step was executed.
pub fn violation_fraction(trajectories: &[Trajectory], constraint: &TrueConstraint) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for t in trajectories {
        for sa in t.steps() {
            total += 1;
            if constraint.is_truly_infeasible(sa) {
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

/// Per-step true violation rate of `policy` over episodes from `starts`.
pub fn unsafe_rate(
    policy: &dyn Policy,
    env: &EnvSpec,
    constraint: &TrueConstraint,
    starts: &[Vec<f64>],
) -> Result<f64> {
    if starts.is_empty() {
        return Err(PuclError::Config(
            "unsafe rate needs at least one episode".into(),
        ));
    }
    let trajs = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| env.rollout(policy, s, i))
        .collect::<Result<Vec<Trajectory>>>()?;
    Ok(violation_fraction(&trajs, constraint))
}

/// Fraction of demonstration generalized states the net calls infeasible.
pub fn demo_infeasible_fraction(
    net: &ConstraintNet,
    demos: &[Trajectory],
    features: &FeatureMap,
) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for t in demos {
        for sa in t.steps() {
            total += 1;
            if net.is_infeasible(&features.select(&sa.state, &sa.action)?)? {
                hits += 1;
            }
        }
    }
    Confusion::ratio(hits, total, "demo_infeasible_fraction")
}

/// Largest `0.5 − ζ` reached along the executed states (0 if the learned
/// boundary is never crossed).
pub fn max_incursion(net: &ConstraintNet, trajectories: &[Trajectory]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in trajectories {
        for s in t.states() {
            worst = worst.max(crate::classifier::DECISION_THRESHOLD - net.predict(s)?);
        }
    }
    Ok(worst)
}
