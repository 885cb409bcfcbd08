use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, PuclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl Metric {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Chebyshev => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Select unlabeled points scoring at least `d_r`.
    Absolute { d_r: f64 },
    /// Select the top `x` percent of unlabeled points by score, recomputed on
    /// every identification.
    Percentile { x: f64 },
    /// Fix an absolute threshold once, as the top-`x`-percent cut of the scores
    /// of an unconstrained policy's rollouts, then use it like `Absolute`.
    CalibratedPercentile { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub k: usize,
    pub metric: Metric,
    pub threshold: ThresholdMode,
    /// Standardize `D ∪ P` per dimension before scoring.
    #[serde(default)]
    pub standardize: bool,
}

impl ScoreSpec {
    pub fn absolute(k: usize, d_r: f64) -> Self {
        ScoreSpec {
            k,
            metric: Metric::Euclidean,
            threshold: ThresholdMode::Absolute { d_r },
            standardize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(PuclError::Config("k must be positive".into()));
        }
        match self.threshold {
            ThresholdMode::Absolute { d_r } if !(d_r.is_finite() && d_r >= 0.0) => {
                Err(PuclError::Config("d_r must be finite and >= 0".into()))
            }
            ThresholdMode::Percentile { x } | ThresholdMode::CalibratedPercentile { x }
                if !(x > 0.0 && x < 100.0) =>
            {
                Err(PuclError::Config("percentile must lie in (0, 100)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Mean distance from `query` to its `k` nearest points in `reference`, by
/// exact linear scan. The `k` smallest distances are summed in ascending order.
pub fn knn_score(query: &[f64], reference: &[&[f64]], k: usize, metric: Metric) -> Result<f64> {
    if k == 0 {
        return Err(PuclError::Config("k must be positive".into()));
    }
    if reference.len() < k {
        return Err(PuclError::InsufficientNeighbors {
            k,
            available: reference.len(),
        });
    }
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for r in reference {
        ensure_dim(query.len(), r.len())?;
        let d = metric.distance(query, r);
        if best.len() < k {
            let pos = best.partition_point(|&b| b <= d);
            best.insert(pos, d);
        } else if d < best[k - 1] {
            let pos = best.partition_point(|&b| b <= d);
            best.insert(pos, d);
            best.pop();
        }
    }
    Ok(best.iter().sum::<f64>() / k as f64)
}

/// Scores every query against the same reference set.
pub fn knn_scores(
    queries: &[&[f64]],
    reference: &[&[f64]],
    k: usize,
    metric: Metric,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    queries
        .par_iter()
        .map(|q| knn_score(q, reference, k, metric))
        .collect()
}
