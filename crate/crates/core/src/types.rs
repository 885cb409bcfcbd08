//! Shared domain types: generalized states, state-action pairs, trajectories
//! and flattened datasets.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{PuclError, Result};
use crate::feature::FeatureMap;

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// The feature vector fed to the constraint network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeneralizedState(Vec<f64>);

impl GeneralizedState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !all_finite(&values) {
            return Err(PuclError::NonFinite("generalized state"));
        }
        Ok(GeneralizedState(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Bit pattern used for exact-equality deduplication.
    pub fn bit_key(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

impl Deref for GeneralizedState {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAction {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

impl StateAction {
    pub fn new(state: Vec<f64>, action: Vec<f64>) -> Result<Self> {
        if !all_finite(&state) || !all_finite(&action) {
            return Err(PuclError::NonFinite("state-action pair"));
        }
        Ok(StateAction { state, action })
    }
}

/// An ordered rollout. `terminal` is the state reached after the last action,
/// so rewards can be recomputed from consecutive states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<StateAction>,
    terminal: Vec<f64>,
    start_index: usize,
    cached_return: f64,
}

impl Trajectory {
    pub fn new(
        steps: Vec<StateAction>,
        terminal: Vec<f64>,
        start_index: usize,
        cached_return: f64,
    ) -> Result<Self> {
        if !all_finite(&terminal) || !cached_return.is_finite() {
            return Err(PuclError::NonFinite("trajectory"));
        }
        if let Some(first) = steps.first() {
            if first.state.len() != terminal.len() {
                return Err(PuclError::DimensionMismatch {
                    expected: first.state.len(),
                    found: terminal.len(),
                });
            }
        }
        Ok(Trajectory {
            steps,
            terminal,
            start_index,
            cached_return,
        })
    }

    pub fn steps(&self) -> &[StateAction] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn start_state(&self) -> &[f64] {
        self.steps
            .first()
            .map(|sa| sa.state.as_slice())
            .unwrap_or(&self.terminal)
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn cached_return(&self) -> f64 {
        self.cached_return
    }

    /// Visited states including the terminal one.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.steps
            .iter()
            .map(|sa| sa.state.as_slice())
            .chain(std::iter::once(self.terminal.as_slice()))
    }

    /// Euclidean length of the polyline through all visited states.
    pub fn polyline_length(&self) -> f64 {
        let states: Vec<&[f64]> = self.states().collect();
        states.windows(2).map(|w| euclidean(w[0], w[1])).sum()
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Demonstration,
    Policy,
    Buffer,
}

/// Back-reference from a flattened point to its trajectory and step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointOrigin {
    pub trajectory: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<GeneralizedState>,
    origins: Vec<PointOrigin>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(points: Vec<GeneralizedState>, provenance: Provenance) -> Self {
        Dataset {
            points,
            origins: Vec::new(),
            provenance,
        }
    }

    pub fn points(&self) -> &[GeneralizedState] {
        &self.points
    }

    pub fn origins(&self) -> &[PointOrigin] {
        &self.origins
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(GeneralizedState::dim)
    }

    /// Regroups points by trajectory using the stored back-references.
    pub fn regroup(&self) -> Vec<Vec<GeneralizedState>> {
        let n = self
            .origins
            .iter()
            .map(|o| o.trajectory + 1)
            .max()
            .unwrap_or(0);
        let mut groups = vec![Vec::new(); n];
        for (p, o) in self.points.iter().zip(&self.origins) {
            groups[o.trajectory].push(p.clone());
        }
        groups
    }
}

/// Maps every step of every trajectory through the feature map, preserving
/// trajectory order then step order.
pub fn flatten_trajectories(
    trajectories: &[Trajectory],
    feature_map: &FeatureMap,
    provenance: Provenance,
) -> Result<Dataset> {
    if trajectories.is_empty() {
        return Err(PuclError::EmptyDataset("no trajectories to flatten"));
    }
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let mut points = Vec::with_capacity(total);
    let mut origins = Vec::with_capacity(total);
    for (ti, traj) in trajectories.iter().enumerate() {
        for (si, sa) in traj.steps().iter().enumerate() {
            points.push(feature_map.apply(sa)?);
            origins.push(PointOrigin {
                trajectory: ti,
                step: si,
            });
        }
    }
    Ok(Dataset {
        points,
        origins,
        provenance,
    })
}
