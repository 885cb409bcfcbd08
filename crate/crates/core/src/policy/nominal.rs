use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::envs::SpeedLimit;
use crate::error::{ensure_dim, PuclError, Result};

/// Linear attractor `v = A (s - s_g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalDS {
    pub goal: Vec<f64>,
    /// Row-major gain matrix.
    pub gain: Vec<f64>,
}

impl NominalDS {
    /// `A = -I`.
    pub fn attractor(goal: Vec<f64>) -> Self {
        let n = goal.len();
        let mut gain = vec![0.0; n * n];
        for i in 0..n {
            gain[i * n + i] = -1.0;
        }
        NominalDS { goal, gain }
    }

    /// `A = -gain·I`.
    pub fn scaled_attractor(goal: Vec<f64>, gain: f64) -> Self {
        let mut ds = NominalDS::attractor(goal);
        ds.gain.iter_mut().for_each(|g| *g *= gain);
        ds
    }

    pub fn with_gain(goal: Vec<f64>, gain: Vec<f64>) -> Result<Self> {
        let ds = NominalDS { goal, gain };
        ds.validate()?;
        Ok(ds)
    }

    pub fn dim(&self) -> usize {
        self.goal.len()
    }

    /// Every eigenvalue of `A` must have a negative real part.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        ensure_dim(n * n, self.gain.len())?;
        let a = DMatrix::from_row_slice(n, n, &self.gain);
        if a.complex_eigenvalues().iter().any(|z| !(z.re < 0.0)) {
            return Err(PuclError::Config(
                "nominal gain matrix is not negative definite".into(),
            ));
        }
        Ok(())
    }

    /// Uncapped `A (s - s_g)`.
    pub fn raw_velocity(&self, s: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.gain[i * n + j] * (s[j] - self.goal[j]))
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn velocity(&self, s: &[f64], limit: &SpeedLimit) -> Vec<f64> {
        limit.apply(&self.raw_velocity(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_at_goal() {
        let ds = NominalDS::attractor(vec![1.0, 2.0]);
        assert_eq!(ds.raw_velocity(&[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn minus_identity() {
        let ds = NominalDS::attractor(vec![0.0, 0.0]);
        assert_eq!(ds.raw_velocity(&[1.0, 0.0]), vec![-1.0, 0.0]);
    }

    #[test]
    fn capped_keeps_direction() {
        let ds = NominalDS::attractor(vec![0.0, 0.0]);
        let v = ds.velocity(&[0.6, 0.8], &SpeedLimit::Norm { cap: 0.58 });
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!((n - 0.58).abs() < 1e-12);
        assert!((v[0] / v[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_unstable_gain() {
        assert!(NominalDS::with_gain(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).is_err());
        // Rotation plus contraction is fine.
        assert!(NominalDS::with_gain(vec![0.0, 0.0], vec![-1.0, 2.0, -2.0, -1.0]).is_ok());
    }
}
