use std::collections::HashSet;

use super::score::{knn_scores, ScoreSpec, ThresholdMode};
use super::standardize::Standardization;
use crate::error::{PuclError, Result};
use crate::types::{Dataset, GeneralizedState};

/// Unlabeled points judged infeasible.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReliableSet {
    points: Vec<GeneralizedState>,
    identified: usize,
}

impl ReliableSet {
    pub fn from_points(points: Vec<GeneralizedState>) -> Self {
        let identified = points.len();
        ReliableSet { points, identified }
    }

    pub fn points(&self) -> &[GeneralizedState] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points selected by thresholding, before any expansion.
    pub fn identified(&self) -> usize {
        self.identified
    }

    pub fn expanded(&self) -> usize {
        self.points.len() - self.identified
    }
}

/// Result of scoring an unlabeled set against the demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub reliable: ReliableSet,
    /// Score of every point of `P`, in order.
    pub scores: Vec<f64>,
    /// Threshold actually applied (the cutoff score in percentile mode).
    pub threshold: f64,
    pub standardization: Option<Standardization>,
}

struct Scored {
    scores: Vec<f64>,
    standardization: Option<Standardization>,
}

fn score_unlabeled(p: &Dataset, d: &Dataset, spec: &ScoreSpec) -> Result<Scored> {
    if d.is_empty() {
        return Err(PuclError::EmptyDataset("demonstration set"));
    }
    if spec.standardize {
        let record =
            Standardization::fit(d.points().iter().chain(p.points()).map(|g| g.as_slice()))?;
        let sd: Vec<Vec<f64>> = d.points().iter().map(|g| record.apply(g)).collect();
        let sp: Vec<Vec<f64>> = p.points().iter().map(|g| record.apply(g)).collect();
        let reference: Vec<&[f64]> = sd.iter().map(Vec::as_slice).collect();
        let queries: Vec<&[f64]> = sp.iter().map(Vec::as_slice).collect();
        Ok(Scored {
            scores: knn_scores(&queries, &reference, spec.k, spec.metric)?,
            standardization: Some(record),
        })
    } else {
        let reference: Vec<&[f64]> = d.points().iter().map(|g| g.as_slice()).collect();
        let queries: Vec<&[f64]> = p.points().iter().map(|g| g.as_slice()).collect();
        Ok(Scored {
            scores: knn_scores(&queries, &reference, spec.k, spec.metric)?,
            standardization: None,
        })
    }
}

/// Lowest score among the top `x` percent (at least one point when `x > 0`).
fn percentile_cutoff(scores: &[f64], x: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let n_sel = ((x / 100.0) * scores.len() as f64).ceil() as usize;
    if n_sel == 0 {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Some(sorted[n_sel.min(sorted.len()) - 1])
}

/// Selects reliable infeasible points of `p` by their kNN distance to `d`.
/// Percentile mode keeps every point tied with the cutoff score.
pub fn identify_reliable(p: &Dataset, d: &Dataset, spec: &ScoreSpec) -> Result<Identification> {
    spec.validate()?;
    if p.is_empty() {
        return Ok(Identification {
            reliable: ReliableSet::default(),
            scores: Vec::new(),
            threshold: f64::NAN,
            standardization: None,
        });
    }
    let scored = score_unlabeled(p, d, spec)?;
    let threshold = match spec.threshold {
        ThresholdMode::Absolute { d_r } => d_r,
        ThresholdMode::Percentile { x } | ThresholdMode::CalibratedPercentile { x } => {
            percentile_cutoff(&scored.scores, x).unwrap_or(f64::INFINITY)
        }
    };
    let points = p
        .points()
        .iter()
        .zip(&scored.scores)
        .filter(|(_, &s)| s >= threshold)
        .map(|(g, _)| g.clone())
        .collect();
    Ok(Identification {
        reliable: ReliableSet::from_points(points),
        scores: scored.scores,
        threshold,
        standardization: scored.standardization,
    })
}

/// Converts a percentile into an absolute threshold from one unlabeled batch.
pub fn calibrate_threshold(p: &Dataset, d: &Dataset, spec: &ScoreSpec, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 100.0) {
        return Err(PuclError::Config("percentile must lie in (0, 100)".into()));
    }
    if p.is_empty() {
        return Err(PuclError::EmptyDataset("calibration rollouts"));
    }
    let scored = score_unlabeled(p, d, spec)?;
    percentile_cutoff(&scored.scores, x).ok_or(PuclError::EmptyDataset("calibration scores"))
}

/// Adds, for every trajectory of `p`, its state closest to the current
/// reliable set (by the same kNN score). Points already present are not
/// duplicated. An empty set is returned unchanged.
pub fn expand_reliable(
    reliable: &ReliableSet,
    p: &Dataset,
    spec: &ScoreSpec,
    standardization: Option<&Standardization>,
) -> Result<ReliableSet> {
    if reliable.is_empty() || p.is_empty() {
        return Ok(reliable.clone());
    }
    if p.origins().len() != p.len() {
        return Err(PuclError::Format(
            "expansion needs trajectory back-references".into(),
        ));
    }
    let transform = |g: &GeneralizedState| -> Vec<f64> {
        match standardization {
            Some(s) => s.apply(g),
            None => g.as_slice().to_vec(),
        }
    };
    let r_space: Vec<Vec<f64>> = reliable.points().iter().map(transform).collect();
    let reference: Vec<&[f64]> = r_space.iter().map(Vec::as_slice).collect();
    let k = spec.k.min(reference.len());

    let mut keys: HashSet<Vec<u64>> = reliable
        .points()
        .iter()
        .map(GeneralizedState::bit_key)
        .collect();
    let mut out = reliable.clone();
    for group in p.regroup() {
        if group.is_empty() {
            continue;
        }
        let g_space: Vec<Vec<f64>> = group.iter().map(transform).collect();
        let queries: Vec<&[f64]> = g_space.iter().map(Vec::as_slice).collect();
        let scores = knn_scores(&queries, &reference, k, spec.metric)?;
        let (best, _) = scores
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bi, bs), (i, &s)| if s < bs { (i, s) } else { (bi, bs) },
            );
        let candidate = &group[best];
        if keys.insert(candidate.bit_key()) {
            out.points.push(candidate.clone());
        }
    }
    Ok(out)
}
