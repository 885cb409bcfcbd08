use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, PuclError, Result};
use crate::types::GeneralizedState;

/// Per-dimension mean and population standard deviation of a combined set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions with (numerically) zero spread; these map to 0.
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn fit<'a, I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let points: Vec<&[f64]> = points.into_iter().collect();
        if points.len() < 2 {
            return Err(PuclError::EmptyDataset(
                "standardization needs at least two points",
            ));
        }
        let dim = points[0].len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in &points {
            ensure_dim(dim, p.len())?;
            for (m, v) in mean.iter_mut().zip(*p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for p in &points {
            for ((s, v), m) in var.iter_mut().zip(*p).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        let constant = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| *s <= 1e-12 * m.abs().max(1.0))
            .collect();
        Ok(Standardization {
            mean,
            std,
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .zip(&self.constant)
            .map(|(((v, m), s), c)| if *c { 0.0 } else { (v - m) / s })
            .collect()
    }
}

type Standardized = (Vec<Vec<f64>>, Vec<Vec<f64>>, Standardization);

/// Standardizes `d ∪ p` jointly; returns the transformed sets and the record.
pub fn standardize_combined(
    d: &[GeneralizedState],
    p: &[GeneralizedState],
) -> Result<Standardized> {
    let record = Standardization::fit(d.iter().chain(p).map(|g| g.as_slice()))?;
    let sd = d.iter().map(|g| record.apply(g)).collect();
    let sp = p.iter().map(|g| record.apply(g)).collect();
    Ok((sd, sp, record))
}
