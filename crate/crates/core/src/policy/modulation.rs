use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::field::ConstraintField;
use super::nominal::NominalDS;
use crate::classifier::DECISION_THRESHOLD;
use crate::envs::{Policy, SpeedLimit};
use crate::error::{ensure_dim, PuclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    /// `Γ` never drops below `1 + gamma_floor`.
    pub gamma_floor: f64,
    pub gamma_ceiling: f64,
    /// Gradients at or below this norm disable modulation.
    pub gradient_tolerance: f64,
    /// Reference directions less aligned than this with the gradient are
    /// replaced by the gradient direction.
    pub min_alignment: f64,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        ModulationSpec {
            gamma_floor: 1e-3,
            gamma_ceiling: 1e6,
            gradient_tolerance: 1e-12,
            min_alignment: 0.17,
        }
    }
}

/// `Γ = 1 + 10·max(ζ − 0.5, 0)^0.2`, clamped to `[1 + floor, ceiling]`.
pub fn gamma(zeta: f64, spec: &ModulationSpec) -> f64 {
    let base = (zeta - DECISION_THRESHOLD).max(0.0);
    (1.0 + 10.0 * base.powf(0.2)).clamp(1.0 + spec.gamma_floor, spec.gamma_ceiling)
}

/// Same as [`gamma`] without the floor; `Γ = 1` on the boundary.
pub fn gamma_unclamped(zeta: f64) -> f64 {
    1.0 + 10.0 * (zeta - DECISION_THRESHOLD).max(0.0).powf(0.2)
}

/// `(λ_1, λ_tangent) = (1 − 1/Γ, 1 + 1/Γ)`.
pub fn eigenvalues(gamma: f64) -> (f64, f64) {
    (1.0 - 1.0 / gamma, 1.0 + 1.0 / gamma)
}

/// Orthonormal basis of the complement of `n`: Gram–Schmidt over the
/// standard axes, skipping the axis most parallel to `n` (lowest index on
/// ties).
pub fn tangent_basis(n: &[f64]) -> Vec<Vec<f64>> {
    let dim = n.len();
    let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n_hat: Vec<f64> = n.iter().map(|v| v / norm).collect();
    let skip = (0..dim).fold(0, |best, i| {
        if n_hat[i].abs() > n_hat[best].abs() {
            i
        } else {
            best
        }
    });
    let mut basis: Vec<Vec<f64>> = vec![n_hat];
    for axis in (0..dim).filter(|&i| i != skip) {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= len);
        basis.push(v);
    }
    basis.remove(0);
    basis
}

/// `M = E·D·E⁻¹`, `E = [r, e_1 … e_{n−1}]`, `D = diag(λ_1, λ_t, …)` with the
/// `e_i` spanning the complement of `n`.
pub fn modulation_matrix(n: &[f64], r: &[f64], gamma: f64) -> Result<DMatrix<f64>> {
    let dim = n.len();
    ensure_dim(dim, r.len())?;
    let mut e = DMatrix::zeros(dim, dim);
    e.set_column(0, &DVector::from_column_slice(r));
    for (j, t) in tangent_basis(n).iter().enumerate() {
        e.set_column(j + 1, &DVector::from_column_slice(t));
    }
    let (l1, lt) = eigenvalues(gamma);
    let mut d = DMatrix::from_diagonal_element(dim, dim, lt);
    d[(0, 0)] = l1;
    let e_inv = e
        .clone()
        .try_inverse()
        .ok_or(PuclError::NonFinite("modulation basis is singular"))?;
    Ok(e * d * e_inv)
}

/// Unit vector from `reference` to `s`, or the gradient direction when the
/// reference is missing, coincident or badly aligned.
pub fn reference_direction(
    s: &[f64],
    reference: Option<&[f64]>,
    n_hat: &[f64],
    min_alignment: f64,
) -> Vec<f64> {
    if let Some(p) = reference {
        let d: Vec<f64> = s.iter().zip(p).map(|(a, b)| a - b).collect();
        let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 1e-12 {
            let r: Vec<f64> = d.iter().map(|v| v / len).collect();
            let align: f64 = r.iter().zip(n_hat).map(|(a, b)| a * b).sum();
            if align >= min_alignment {
                return r;
            }
        }
    }
    n_hat.to_vec()
}

/// The modulation matrix of `field` at `s`; identity when the gradient is
/// degenerate.
pub fn modulation_at(
    field: &dyn ConstraintField,
    s: &[f64],
    spec: &ModulationSpec,
) -> Result<DMatrix<f64>> {
    let (zeta, grad) = field.sample(s)?;
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > spec.gradient_tolerance) {
        log::warn!("degenerate constraint gradient (norm {norm:e}); modulation disabled");
        return Ok(DMatrix::identity(s.len(), s.len()));
    }
    let n_hat: Vec<f64> = grad.iter().map(|v| v / norm).collect();
    let reference = field.reference_point(s);
    let r = reference_direction(s, reference.as_deref(), &n_hat, spec.min_alignment);
    modulation_matrix(&n_hat, &r, gamma(zeta, spec))
}

/// `M(s)·π_n(s)`, speed-capped.
pub fn modulated_velocity(
    field: &dyn ConstraintField,
    ds: &NominalDS,
    s: &[f64],
    limit: &SpeedLimit,
    spec: &ModulationSpec,
) -> Result<Vec<f64>> {
    let m = modulation_at(field, s, spec)?;
    let v = DVector::from_vec(ds.velocity(s, limit));
    Ok(limit.apply((m * v).as_slice()))
}

/// Closed-loop modulated attractor.
pub struct DsmPolicy<F: ConstraintField> {
    pub nominal: NominalDS,
    pub field: F,
    pub limit: SpeedLimit,
    pub spec: ModulationSpec,
}

impl<F: ConstraintField> Policy for DsmPolicy<F> {
    fn act(&self, state: &[f64], _step: usize) -> Vec<f64> {
        modulated_velocity(&self.field, &self.nominal, state, &self.limit, &self.spec)
            .unwrap_or_else(|_| vec![0.0; state.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn closed_form(n: &[f64], r: &[f64], g: f64) -> DMatrix<f64> {
        let dim = n.len();
        let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nh = DVector::from_iterator(dim, n.iter().map(|v| v / norm));
        let rv = DVector::from_column_slice(r);
        let (l1, lt) = eigenvalues(g);
        DMatrix::from_diagonal_element(dim, dim, lt)
            + (l1 - lt) * &rv * nh.transpose() / nh.dot(&rv)
    }

    #[test]
    fn gamma_values() {
        let s = ModulationSpec::default();
        assert_eq!(gamma_unclamped(0.5), 1.0);
        assert_relative_eq!(
            gamma(1.0, &s),
            1.0 + 10.0 * 0.5f64.powf(0.2),
            epsilon = 1e-12
        );
        assert_relative_eq!(gamma(1.0, &s), 9.705506, epsilon = 1e-6);
        assert_eq!(gamma(0.3, &s), 1.0 + 1e-3);
    }

    #[test]
    fn eigenvalues_at_max_gamma() {
        let (l1, lt) = eigenvalues(gamma_unclamped(1.0));
        assert_relative_eq!(l1, 0.89697, epsilon = 1e-5);
        assert_relative_eq!(lt, 1.10303, epsilon = 1e-5);
    }

    #[test]
    fn tangent_basis_is_orthonormal_complement() {
        let n = [0.3, -0.9, 0.2, 0.1];
        let b = tangent_basis(&n);
        assert_eq!(b.len(), 3);
        for (i, u) in b.iter().enumerate() {
            let dn: f64 = u.iter().zip(&n).map(|(a, c)| a * c).sum();
            assert!(dn.abs() < 1e-12);
            for (j, w) in b.iter().enumerate() {
                let d: f64 = u.iter().zip(w).map(|(a, c)| a * c).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_closed_form_for_skewed_reference() {
        let n = [0.6, 0.8, 0.0];
        let r = {
            let v = [0.9, 0.3, 0.3];
            let l = (0.81f64 + 0.09 + 0.09).sqrt();
            [v[0] / l, v[1] / l, v[2] / l]
        };
        let m = modulation_matrix(&n, &r, 3.0).unwrap();
        let c = closed_form(&n, &r, 3.0);
        for (a, b) in m.iter().zip(c.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn symmetric_when_reference_is_normal() {
        let n = [0.0, 1.0];
        let g = gamma_unclamped(1.0);
        let m = modulation_matrix(&n, &n, g).unwrap();
        let (l1, lt) = eigenvalues(g);
        assert_relative_eq!(m[(0, 1)], m[(1, 0)], epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], l1, epsilon = 1e-12);
        assert_relative_eq!(m[(0, 0)], lt, epsilon = 1e-12);
    }

    #[test]
    fn boundary_kills_normal_component() {
        let n = [1.0, 0.0];
        let m = modulation_matrix(&n, &n, 1.0).unwrap();
        let v = &m * DVector::from_vec(vec![-0.5, 0.0]);
        assert!(v[0].abs() < 1e-15);
        let t = &m * DVector::from_vec(vec![0.0, 0.3]);
        assert_relative_eq!(t[1], 0.6, epsilon = 1e-12);
        assert_eq!(t[0], 0.0);
    }

    #[test]
    fn poorly_aligned_reference_falls_back_to_gradient() {
        let n = [1.0, 0.0];
        let r = reference_direction(&[0.0, 1.0], Some(&[0.0, 0.0]), &n, 0.17);
        assert_eq!(r, vec![1.0, 0.0]);
        let r = reference_direction(&[1.0, 1.0], Some(&[0.0, 0.0]), &n, 0.17);
        assert_relative_eq!(r[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }
}
