use serde::{Deserialize, Serialize};

use crate::error::{PuclError, Result};
use crate::types::StateAction;

/// Rotated ellipse in the first two state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Counter-clockwise rotation in radians.
    pub angle: f64,
}

impl Ellipse {
    fn local(&self, p: &[f64]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Normalized radius: < 1 strictly inside, 1 on the boundary.
    pub fn radius_ratio(&self, p: &[f64]) -> f64 {
        let u = self.local(p);
        ((u[0] / self.semi_axes[0]).powi(2) + (u[1] / self.semi_axes[1]).powi(2)).sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.radius_ratio(p) < 1.0
    }

    /// Approximate signed distance (metres) and its gradient in the plane.
    fn gap(&self, p: &[f64]) -> (f64, [f64; 2]) {
        let u = self.local(p);
        let [a, b] = self.semi_axes;
        let rho = ((u[0] / a).powi(2) + (u[1] / b).powi(2)).sqrt();
        let scale = a.min(b);
        if rho < 1e-12 {
            return (-scale, [0.0, 0.0]);
        }
        let du = [u[0] / (a * a * rho), u[1] / (b * b * rho)];
        let (s, c) = self.angle.sin_cos();
        let dp = [c * du[0] - s * du[1], s * du[0] + c * du[1]];
        ((rho - 1.0) * scale, [dp[0] * scale, dp[1] * scale])
    }
}

/// Vertical cylinder of unbounded height over the first two state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Cylinder {
    pub fn contains(&self, p: &[f64]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy < self.radius * self.radius
    }

    fn gap(&self, p: &[f64]) -> (f64, [f64; 2]) {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let d = (dx * dx + dy * dy).sqrt();
        if d < 1e-12 {
            return (-self.radius, [0.0, 0.0]);
        }
        (d - self.radius, [dx / d, dy / d])
    }
}

/// The hidden constraint a task is built around. Boundaries are feasible;
/// only strict interiors (or strict violations of a limit) are infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueConstraint {
    EllipseUnion {
        ellipses: Vec<Ellipse>,
    },
    CylinderSet {
        cylinders: Vec<Cylinder>,
    },
    /// Per-axis limits on the action: infeasible iff some `|a_i| > limit_i`.
    VelocityBox {
        limits: Vec<f64>,
    },
    /// Infeasible iff `normal · state < offset`.
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
}

/// Nearest inflated obstacle to a position.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleGap {
    /// Signed distance in metres, negative inside.
    pub gap: f64,
    /// Gradient of `gap` with respect to the full position.
    pub gradient: Vec<f64>,
    /// A point inside the obstacle, in the same space as the position.
    pub reference: Vec<f64>,
}

impl TrueConstraint {
    pub fn validate(&self, state_dim: usize, action_dim: usize) -> Result<()> {
        let bad = |m: &str| Err(PuclError::Config(m.to_string()));
        match self {
            TrueConstraint::EllipseUnion { ellipses } => {
                if state_dim < 2 || ellipses.is_empty() {
                    return bad("ellipse union needs a planar state and at least one ellipse");
                }
                if ellipses
                    .iter()
                    .any(|e| !(e.semi_axes[0] > 0.0 && e.semi_axes[1] > 0.0))
                {
                    return bad("ellipse semi-axes must be positive");
                }
            }
            TrueConstraint::CylinderSet { cylinders } => {
                if state_dim < 2 || cylinders.is_empty() {
                    return bad("cylinder set needs a planar footprint and at least one cylinder");
                }
                if cylinders.iter().any(|c| !(c.radius > 0.0)) {
                    return bad("cylinder radius must be positive");
                }
            }
            TrueConstraint::VelocityBox { limits } => {
                if limits.len() != action_dim || limits.iter().any(|l| !(*l > 0.0)) {
                    return bad("velocity box needs one positive limit per action dimension");
                }
            }
            TrueConstraint::Halfspace { normal, offset } => {
                if normal.len() != state_dim
                    || !offset.is_finite()
                    || normal.iter().all(|v| *v == 0.0)
                {
                    return bad("halfspace normal must match the state dimension and be non-zero");
                }
            }
        }
        Ok(())
    }

    pub fn is_truly_infeasible(&self, sa: &StateAction) -> bool {
        match self {
            TrueConstraint::EllipseUnion { ellipses } => {
                ellipses.iter().any(|e| e.contains(&sa.state))
            }
            TrueConstraint::CylinderSet { cylinders } => {
                cylinders.iter().any(|c| c.contains(&sa.state))
            }
            TrueConstraint::VelocityBox { limits } => {
                sa.action.iter().zip(limits).any(|(a, l)| a.abs() > *l)
            }
            TrueConstraint::Halfspace { normal, offset } => {
                normal
                    .iter()
                    .zip(&sa.state)
                    .map(|(n, s)| n * s)
                    .sum::<f64>()
                    < *offset
            }
        }
    }

    /// State-only membership test; action-dependent constraints never fire.
    pub fn blocks_state(&self, state: &[f64]) -> bool {
        match self {
            TrueConstraint::VelocityBox { .. } => false,
            _ => self.is_truly_infeasible(&StateAction {
                state: state.to_vec(),
                action: Vec::new(),
            }),
        }
    }

    /// The constraint grown by `margin`: obstacles get larger, velocity limits
    /// and halfspaces stricter.
    pub fn inflated(&self, margin: f64) -> TrueConstraint {
        match self {
            TrueConstraint::EllipseUnion { ellipses } => TrueConstraint::EllipseUnion {
                ellipses: ellipses
                    .iter()
                    .map(|e| Ellipse {
                        semi_axes: [e.semi_axes[0] + margin, e.semi_axes[1] + margin],
                        ..e.clone()
                    })
                    .collect(),
            },
            TrueConstraint::CylinderSet { cylinders } => TrueConstraint::CylinderSet {
                cylinders: cylinders
                    .iter()
                    .map(|c| Cylinder {
                        radius: c.radius + margin,
                        ..c.clone()
                    })
                    .collect(),
            },
            TrueConstraint::VelocityBox { limits } => TrueConstraint::VelocityBox {
                limits: limits.iter().map(|l| (l - margin).max(0.0)).collect(),
            },
            TrueConstraint::Halfspace { normal, offset } => {
                let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                TrueConstraint::Halfspace {
                    normal: normal.clone(),
                    offset: offset + margin * norm,
                }
            }
        }
    }

    /// Signed distance to the closest obstacle, for geometric obstacle types.
    pub fn nearest_gap(&self, position: &[f64]) -> Option<ObstacleGap> {
        let planar: Vec<(f64, [f64; 2], [f64; 2])> = match self {
            TrueConstraint::EllipseUnion { ellipses } => ellipses
                .iter()
                .map(|e| {
                    let (g, d) = e.gap(position);
                    (g, d, e.center)
                })
                .collect(),
            TrueConstraint::CylinderSet { cylinders } => cylinders
                .iter()
                .map(|c| {
                    let (g, d) = c.gap(position);
                    (g, d, c.center)
                })
                .collect(),
            _ => return None,
        };
        let (gap, grad, center) = planar.into_iter().min_by(|a, b| a.0.total_cmp(&b.0))?;
        let mut gradient = vec![0.0; position.len()];
        gradient[..2].copy_from_slice(&grad);
        let mut reference = position.to_vec();
        reference[..2].copy_from_slice(&center);
        Some(ObstacleGap {
            gap,
            gradient,
            reference,
        })
    }
}
