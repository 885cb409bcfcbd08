//! Declarative experiment description and the built-in task presets.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{NetSpec, TrainSpec};
use crate::envs::{
    gait, Cylinder, Dynamics, Ellipse, EnvSpec, ExpertKind, ExpertSpec, Goal, RewardKind,
    SpeedLimit, StartRegion, TrueConstraint,
};
use crate::error::{PuclError, Result};
use crate::feature::FeatureMap;
use crate::policy::{ModulationSpec, PidGains, PlannerSpec, WarmStart};
use crate::pulearn::{FilterForm, FilterSpec, Metric, ScoreSpec, ThresholdMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Modulated attractor. With state features the learned net shapes the
    /// flow; with action features the attractor avoids the known obstacles
    /// and the net caps the speed.
    #[default]
    Dsm,
    Planner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reaching2d,
    Reaching3d,
    Velocity,
    Hetero,
}

impl std::str::FromStr for Task {
    type Err = PuclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reaching2d" | "reaching_2d" | "2d" => Ok(Task::Reaching2d),
            "reaching3d" | "reaching_3d" | "3d" => Ok(Task::Reaching3d),
            "velocity" => Ok(Task::Velocity),
            "hetero" | "gait" => Ok(Task::Hetero),
            other => Err(PuclError::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Stop once the last `window` IoU changes all stay below `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub tolerance: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            window: 5,
            tolerance: 0.005,
        }
    }
}

/// Extra unlabeled data for the DSM back-end: several rollouts from each
/// demonstration start with Gaussian action noise of std `noise · cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub rollouts_per_start: usize,
    pub noise: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration {
            rollouts_per_start: 1,
            noise: 0.0,
        }
    }
}

/// Points (in feature space) on which the classification metrics are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalPoints {
    /// Cell centres of a uniform grid.
    Grid {
        lower: Vec<f64>,
        upper: Vec<f64>,
        resolution: Vec<usize>,
    },
    /// States of held-out demonstrations with one coordinate swept over
    /// `count` evenly spaced values in `[lower, upper]`.
    AxisSweep {
        axis: usize,
        lower: f64,
        upper: f64,
        count: usize,
        episodes: usize,
    },
}

impl EvalPoints {
    pub fn size(&self) -> Option<usize> {
        match self {
            EvalPoints::Grid { resolution, .. } => resolution
                .iter()
                .try_fold(1usize, |acc, &r| acc.checked_mul(r)),
            EvalPoints::AxisSweep { .. } => None,
        }
    }

    fn validate(&self, feature_dim: usize, budget: usize) -> Result<()> {
        match self {
            EvalPoints::Grid {
                lower,
                upper,
                resolution,
            } => {
                if lower.len() != feature_dim
                    || upper.len() != feature_dim
                    || resolution.len() != feature_dim
                {
                    return Err(PuclError::Config(
                        "evaluation grid must match the feature dimension".into(),
                    ));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) || resolution.contains(&0) {
                    return Err(PuclError::Config(
                        "evaluation grid needs lower < upper and resolution >= 1".into(),
                    ));
                }
                match self.size() {
                    Some(n) if n <= budget => Ok(()),
                    _ => Err(PuclError::Config(format!(
                        "evaluation grid exceeds the budget of {budget} points"
                    ))),
                }
            }
            EvalPoints::AxisSweep {
                axis,
                lower,
                upper,
                count,
                episodes,
            } => {
                if *axis >= feature_dim || !(lower < upper) || *count < 2 || *episodes == 0 {
                    return Err(PuclError::Config(
                        "axis sweep needs a valid axis, lower < upper, count >= 2".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub points: EvalPoints,
    /// Cheaper point set for the per-iteration trace; defaults to `points`.
    #[serde(default)]
    pub trace_points: Option<EvalPoints>,
    pub held_out_episodes: usize,
    pub max_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub env: EnvSpec,
    pub constraint: TrueConstraint,
    pub features: FeatureMap,
    pub score: ScoreSpec,
    pub filter: FilterSpec,
    pub net: NetSpec,
    pub train: TrainSpec,
    pub backend: Backend,
    pub planner: PlannerSpec,
    pub modulation: ModulationSpec,
    /// Single-linkage radius for the modulation reference points; defaults
    /// to twice the absolute threshold.
    #[serde(default)]
    pub cluster_radius: Option<f64>,
    #[serde(default)]
    pub exploration: Exploration,
    pub expert: ExpertSpec,
    pub demos: usize,
    pub iterations: usize,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
    pub eval: EvalSpec,
}

impl ExperimentConfig {
    pub fn preset(task: Task) -> Self {
        match task {
            Task::Reaching2d => reaching_2d(),
            Task::Reaching3d => reaching_3d(),
            Task::Velocity => velocity(),
            Task::Hetero => hetero(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.features
            .dim(self.env.state_dim(), self.env.action_dim())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.constraint
            .validate(self.env.state_dim(), self.env.action_dim())?;
        self.features
            .validate(self.env.state_dim(), self.env.action_dim())?;
        self.score.validate()?;
        self.filter.validate()?;
        self.train.validate()?;
        self.planner.validate()?;
        if self.net.hidden.contains(&0) || !self.net.negative_slope.is_finite() {
            return Err(PuclError::Config(
                "hidden layers need positive widths and a finite slope".into(),
            ));
        }
        if self.demos == 0 {
            return Err(PuclError::Config(
                "at least one demonstration is required".into(),
            ));
        }
        if let Some(r) = self.cluster_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(PuclError::Config("cluster radius must be positive".into()));
            }
        }
        if self.exploration.rollouts_per_start == 0
            || !(self.exploration.noise >= 0.0 && self.exploration.noise.is_finite())
        {
            return Err(PuclError::Config(
                "exploration needs at least one rollout per start and noise >= 0".into(),
            ));
        }
        if self.backend == Backend::Dsm {
            if self.env.goal.is_none() {
                return Err(PuclError::Config("the DSM backend needs a goal".into()));
            }
            match self.features {
                FeatureMap::StateOnly => {}
                FeatureMap::ActionOnly if self.env.known.is_some() => {}
                _ => return Err(PuclError::Config(
                    "the DSM backend needs state features, or action features with known obstacles"
                        .into(),
                )),
            }
            if self.cluster_radius.is_none()
                && !matches!(self.score.threshold, ThresholdMode::Absolute { .. })
            {
                return Err(PuclError::Config(
                    "percentile thresholds need an explicit cluster radius".into(),
                ));
            }
        }
        if let Some(es) = &self.early_stop {
            if es.window == 0 || !(es.tolerance >= 0.0) {
                return Err(PuclError::Config(
                    "early stop needs a positive window and tolerance >= 0".into(),
                ));
            }
        }
        if self.eval.held_out_episodes == 0 {
            return Err(PuclError::Config(
                "held-out episode count must be positive".into(),
            ));
        }
        let dim = self.feature_dim();
        self.eval.points.validate(dim, self.eval.max_points)?;
        if let Some(t) = &self.eval.trace_points {
            t.validate(dim, self.eval.max_points)?;
        }
        Ok(())
    }

    /// Radius used to cluster buffer points into learned obstacles.
    pub fn reference_radius(&self) -> f64 {
        match (self.cluster_radius, self.score.threshold) {
            (Some(r), _) => r,
            (None, ThresholdMode::Absolute { d_r }) => 2.0 * d_r,
            (None, _) => 0.0,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

fn reference_planner() -> PlannerSpec {
    PlannerSpec {
        knots: 12,
        rounds: 15,
        ..PlannerSpec::default()
    }
}

fn reaching_2d() -> ExperimentConfig {
    let env = EnvSpec {
        dynamics: Dynamics::PointMass,
        lower: vec![0.0, 0.0],
        upper: vec![2.0, 2.0],
        speed_limit: SpeedLimit::Norm { cap: 0.58 },
        dt: 0.05,
        horizon: 200,
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
    };
    ExperimentConfig {
        name: "reaching2d".into(),
        seed: 0,
        env,
        constraint: TrueConstraint::EllipseUnion {
            ellipses: vec![
                Ellipse {
                    center: [0.95, 1.05],
                    semi_axes: [0.35, 0.15],
                    angle: PI / 3.0,
                },
                Ellipse {
                    center: [1.05, 0.85],
                    semi_axes: [0.3, 0.12],
                    angle: -PI / 6.0,
                },
            ],
        },
        features: FeatureMap::StateOnly,
        score: ScoreSpec::absolute(1, 0.12),
        filter: FilterSpec {
            delta: 0.0,
            form: FilterForm::Literal,
        },
        net: NetSpec::default(),
        train: TrainSpec::default(),
        backend: Backend::Dsm,
        planner: PlannerSpec::default(),
        modulation: ModulationSpec::default(),
        cluster_radius: None,
        exploration: Exploration::default(),
        expert: ExpertSpec {
            kind: ExpertKind::Dsm,
            margin: 0.08,
            noise_std: 0.02,
            delta: 0.1,
            max_attempts: 200,
            sharpness: 20.0,
            reference: reference_planner(),
        },
        demos: 4,
        iterations: 40,
        early_stop: Some(EarlyStop::default()),
        eval: EvalSpec {
            points: EvalPoints::Grid {
                lower: vec![0.0, 0.0],
                upper: vec![2.0, 2.0],
                resolution: vec![200, 200],
            },
            trace_points: Some(EvalPoints::Grid {
                lower: vec![0.0, 0.0],
                upper: vec![2.0, 2.0],
                resolution: vec![100, 100],
            }),
            held_out_episodes: 50,
            max_points: 250_000,
        },
    }
}

fn reaching_3d() -> ExperimentConfig {
    let env = EnvSpec {
        dynamics: Dynamics::PointMass,
        lower: vec![0.0, 0.0, 0.0],
        upper: vec![1.2, 1.2, 0.6],
        speed_limit: SpeedLimit::Norm { cap: 0.58 },
        dt: 0.05,
        horizon: 300,
        goal: Some(Goal {
            center: vec![1.1, 0.6, 0.3],
            radius: 0.05,
            gain: 1.0,
        }),
        reward: RewardKind::PathLength,
        gamma: 1.0,
        starts: StartRegion {
            lower: vec![0.05, 0.3, 0.05],
            upper: vec![0.25, 0.9, 0.55],
            min_goal_distance: 0.0,
        },
        known: None,
    };
    let grid = |n: usize| EvalPoints::Grid {
        lower: vec![0.0, 0.0, 0.0],
        upper: vec![1.2, 1.2, 0.6],
        resolution: vec![n, n, n],
    };
    ExperimentConfig {
        name: "reaching3d".into(),
        seed: 0,
        env,
        constraint: TrueConstraint::CylinderSet {
            cylinders: vec![Cylinder {
                center: [0.8, 0.6],
                radius: 0.1,
            }],
        },
        features: FeatureMap::StateOnly,
        score: ScoreSpec::absolute(1, 0.03),
        filter: FilterSpec {
            delta: 0.03,
            form: FilterForm::Literal,
        },
        net: NetSpec {
            hidden: vec![64, 64],
            ..NetSpec::default()
        },
        train: TrainSpec::default(),
        backend: Backend::Dsm,
        planner: PlannerSpec::default(),
        modulation: ModulationSpec::default(),
        cluster_radius: None,
        exploration: Exploration::default(),
        expert: ExpertSpec {
            kind: ExpertKind::Dsm,
            margin: 0.04,
            noise_std: 0.01,
            delta: 0.1,
            max_attempts: 400,
            sharpness: 20.0,
            reference: reference_planner(),
        },
        demos: 10,
        iterations: 40,
        early_stop: Some(EarlyStop::default()),
        eval: EvalSpec {
            points: grid(60),
            trace_points: Some(grid(30)),
            held_out_episodes: 50,
            max_points: 250_000,
        },
    }
}

fn velocity() -> ExperimentConfig {
    let env = EnvSpec {
        dynamics: Dynamics::PointMass,
        lower: vec![0.0, 0.0, 0.0],
        upper: vec![1.2, 1.2, 0.6],
        speed_limit: SpeedLimit::Norm { cap: 0.58 },
        dt: 0.05,
        horizon: 300,
        goal: Some(Goal {
            center: vec![0.6, 0.6, 0.3],
            radius: 0.05,
            gain: 10.0,
        }),
        reward: RewardKind::Time,
        gamma: 1.0,
        starts: StartRegion {
            lower: vec![0.0, 0.0, 0.0],
            upper: vec![1.2, 1.2, 0.6],
            min_goal_distance: 0.3,
        },
        known: Some(TrueConstraint::CylinderSet {
            cylinders: vec![
                Cylinder {
                    center: [0.3, 0.85],
                    radius: 0.08,
                },
                Cylinder {
                    center: [0.9, 0.35],
                    radius: 0.08,
                },
            ],
        }),
    };
    let grid = |n: usize| EvalPoints::Grid {
        lower: vec![-0.58; 3],
        upper: vec![0.58; 3],
        resolution: vec![n, n, n],
    };
    ExperimentConfig {
        name: "velocity".into(),
        seed: 0,
        env,
        constraint: TrueConstraint::VelocityBox {
            limits: vec![0.48, 0.58, 0.19],
        },
        features: FeatureMap::ActionOnly,
        score: ScoreSpec::absolute(1, 0.01),
        filter: FilterSpec {
            delta: 0.0,
            form: FilterForm::Literal,
        },
        net: NetSpec::default(),
        train: TrainSpec::default(),
        backend: Backend::Dsm,
        planner: PlannerSpec::default(),
        modulation: ModulationSpec::default(),
        cluster_radius: None,
        exploration: Exploration::default(),
        expert: ExpertSpec {
            kind: ExpertKind::VelocityDsm,
            margin: 0.02,
            noise_std: 0.0,
            delta: 0.1,
            max_attempts: 400,
            sharpness: 20.0,
            reference: reference_planner(),
        },
        demos: 30,
        iterations: 30,
        early_stop: Some(EarlyStop::default()),
        eval: EvalSpec {
            points: grid(60),
            trace_points: Some(grid(20)),
            held_out_episodes: 50,
            max_points: 250_000,
        },
    }
}

fn hetero() -> ExperimentConfig {
    let env = EnvSpec {
        dynamics: Dynamics::Gait,
        lower: vec![-10.0],
        upper: vec![10.0],
        speed_limit: SpeedLimit::Box {
            limits: vec![1.0; gait::ACTION_DIM],
        },
        dt: 0.1,
        horizon: 120,
        goal: None,
        reward: RewardKind::Progress { index: 0 },
        gamma: 1.0,
        starts: StartRegion {
            lower: vec![-1.0],
            upper: vec![0.0],
            min_goal_distance: 0.0,
        },
        known: None,
    };
    let mut normal = vec![0.0; gait::STATE_DIM];
    normal[0] = 1.0;
    let planner = PlannerSpec {
        samples: 32,
        rounds: 12,
        noise_fraction: 0.5,
        knots: 12,
        warm_start: WarmStart::Zero,
        initial_weight: 1.0,
        pid: PidGains::default(),
        ..PlannerSpec::default()
    };
    ExperimentConfig {
        name: "hetero".into(),
        seed: 0,
        env,
        constraint: TrueConstraint::Halfspace {
            normal,
            offset: -3.0,
        },
        features: FeatureMap::StateOnly,
        score: ScoreSpec {
            k: 1,
            metric: Metric::Euclidean,
            threshold: ThresholdMode::CalibratedPercentile { x: 80.0 },
            standardize: true,
        },
        filter: FilterSpec {
            delta: 0.0,
            form: FilterForm::Literal,
        },
        net: NetSpec::default(),
        train: TrainSpec::default(),
        backend: Backend::Planner,
        planner: planner.clone(),
        modulation: ModulationSpec::default(),
        cluster_radius: None,
        exploration: Exploration::default(),
        expert: ExpertSpec {
            kind: ExpertKind::Shuttle {
                drive: 1.0,
                turn: -3.0,
            },
            margin: 0.1,
            noise_std: 0.0,
            delta: 0.1,
            max_attempts: 100,
            sharpness: 20.0,
            reference: planner,
        },
        demos: 10,
        iterations: 10,
        early_stop: None,
        eval: EvalSpec {
            points: EvalPoints::AxisSweep {
                axis: 0,
                lower: -6.0,
                upper: 0.0,
                count: 25,
                episodes: 5,
            },
            trace_points: None,
            held_out_episodes: 10,
            max_points: 250_000,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for task in [
            Task::Reaching2d,
            Task::Reaching3d,
            Task::Velocity,
            Task::Hetero,
        ] {
            let cfg = ExperimentConfig::preset(task);
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "{task:?}");
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn paper_defaults() {
        let c2 = ExperimentConfig::preset(Task::Reaching2d);
        assert_eq!((c2.score.k, c2.demos, c2.filter.delta), (1, 4, 0.0));
        assert_eq!(c2.score.threshold, ThresholdMode::Absolute { d_r: 0.12 });
        assert_eq!(c2.net.hidden, vec![32, 32]);
        assert_eq!(c2.train.learning_rate, 5e-3);
        let c3 = ExperimentConfig::preset(Task::Reaching3d);
        assert_eq!((c3.demos, c3.filter.delta), (10, 0.03));
        assert_eq!(c3.score.threshold, ThresholdMode::Absolute { d_r: 0.03 });
        assert_eq!(c3.env.horizon, 300);
        let v = ExperimentConfig::preset(Task::Velocity);
        assert_eq!(
            v.constraint,
            TrueConstraint::VelocityBox {
                limits: vec![0.48, 0.58, 0.19]
            }
        );
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let mut c = ExperimentConfig::preset(Task::Reaching2d);
        c.filter.delta = 1.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Task::Reaching2d);
        c.env.gamma = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Task::Reaching2d);
        c.score.k = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Task::Reaching2d);
        c.eval.max_points = 100;
        assert!(c.validate().is_err());
    }
}
