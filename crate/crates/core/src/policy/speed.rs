use crate::classifier::ConstraintNet;
use crate::envs::{Policy, SpeedLimit};

/// Shrinks the action of `inner` along its own direction until the network
/// over actions calls it feasible: the largest `α ∈ [0, 1]` found by
/// bisection with `ζ(α·a) > 0.5`.
pub struct SpeedScaled<P: Policy> {
    pub inner: P,
    pub net: ConstraintNet,
    pub iterations: usize,
}

impl<P: Policy> SpeedScaled<P> {
    pub fn new(inner: P, net: ConstraintNet) -> Self {
        SpeedScaled {
            inner,
            net,
            iterations: 30,
        }
    }

    fn feasible(&self, a: &[f64], alpha: f64) -> bool {
        let x: Vec<f64> = a.iter().map(|v| alpha * v).collect();
        self.net.is_infeasible(&x).map(|b| !b).unwrap_or(false)
    }

    pub fn scale(&self, a: &[f64]) -> f64 {
        if self.feasible(a, 1.0) {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..self.iterations {
            let mid = 0.5 * (lo + hi);
            if self.feasible(a, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

impl<P: Policy> Policy for SpeedScaled<P> {
    fn act(&self, state: &[f64], step: usize) -> Vec<f64> {
        let a = self.inner.act(state, step);
        let alpha = self.scale(&a);
        a.iter().map(|v| alpha * v).collect()
    }
}

/// Keeps a feasible state on the feasible side of the learned boundary
/// under `s' = s + dt·a`. When the full step would land at `ζ ≤ 0.5` the
/// inward normal part of the action is dropped; if the remaining step still
/// crosses (a curved boundary), the smallest outward normal push that keeps
/// it outside is added, and as a last resort the step is shortened by
/// bisection. States already infeasible are left alone.
pub struct BoundaryGuard<P: Policy> {
    pub inner: P,
    pub net: ConstraintNet,
    pub dt: f64,
    pub limit: SpeedLimit,
    pub iterations: usize,
}

impl<P: Policy> BoundaryGuard<P> {
    pub fn new(inner: P, net: ConstraintNet, dt: f64, limit: SpeedLimit) -> Self {
        BoundaryGuard {
            inner,
            net,
            dt,
            limit,
            iterations: 30,
        }
    }

    fn feasible_after(&self, s: &[f64], a: &[f64], alpha: f64) -> bool {
        let x: Vec<f64> = s
            .iter()
            .zip(a)
            .map(|(p, v)| p + alpha * self.dt * v)
            .collect();
        self.net.is_infeasible(&x).map(|b| !b).unwrap_or(false)
    }

    /// Unit normal pointing towards increasing `ζ`.
    fn normal(&self, s: &[f64]) -> Option<Vec<f64>> {
        let (_, g) = self.net.logit_with_gradient(s).ok()?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        (norm > 0.0).then(|| g.iter().map(|v| v / norm).collect())
    }

    fn bisect(&self, mut ok: impl FnMut(f64) -> bool) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..self.iterations {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// The guarded action at `s`.
    pub fn guard(&self, s: &[f64], a: Vec<f64>) -> Vec<f64> {
        if !self.feasible_after(s, &a, 0.0) || self.feasible_after(s, &a, 1.0) {
            return a;
        }
        let Some(n) = self.normal(s) else {
            return vec![0.0; a.len()];
        };
        let inward: f64 = a.iter().zip(&n).map(|(v, m)| v * m).sum();
        let slid: Vec<f64> = if inward < 0.0 {
            a.iter().zip(&n).map(|(v, m)| v - inward * m).collect()
        } else {
            a.clone()
        };
        if self.feasible_after(s, &slid, 1.0) {
            return slid;
        }
        let speed = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let pushed = |c: f64| -> Vec<f64> {
            let v: Vec<f64> = slid
                .iter()
                .zip(&n)
                .map(|(v, m)| v + c * speed * m)
                .collect();
            self.limit.apply(&v)
        };
        if self.feasible_after(s, &pushed(1.0), 1.0) {
            let c = self.bisect(|c| self.feasible_after(s, &pushed(c), 1.0));
            return pushed(c);
        }
        let alpha = self.bisect(|t| !self.feasible_after(s, &slid, 1.0 - t));
        slid.iter().map(|v| (1.0 - alpha) * v).collect()
    }
}

impl<P: Policy> Policy for BoundaryGuard<P> {
    fn act(&self, state: &[f64], step: usize) -> Vec<f64> {
        let a = self.inner.act(state, step);
        self.guard(state, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Layer;

    #[test]
    fn scales_to_learned_boundary() {
        // ζ = sigmoid(0.3 - x): feasible iff x < 0.3.
        let net = ConstraintNet::from_layers(
            vec![Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![-1.0],
                biases: vec![0.3],
            }],
            0.01,
        )
        .unwrap();
        let p = SpeedScaled::new(|_: &[f64], _: usize| vec![0.6], net);
        let a = p.act(&[0.0], 0);
        assert!(a[0] < 0.3 && a[0] > 0.3 - 1e-6);
        let slow = SpeedScaled::new(|_: &[f64], _: usize| vec![0.2], p.net.clone());
        assert_eq!(slow.act(&[0.0], 0), vec![0.2]);
    }

    #[test]
    fn guard_stops_short_of_boundary() {
        let net = ConstraintNet::from_layers(
            vec![Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![-1.0],
                biases: vec![0.3],
            }],
            0.01,
        )
        .unwrap();
        let g = BoundaryGuard::new(
            |_: &[f64], _: usize| vec![1.0],
            net.clone(),
            0.5,
            SpeedLimit::Norm { cap: 10.0 },
        );
        // Moving straight at the boundary leaves nothing after the slide.
        assert_eq!(g.act(&[0.0], 0), vec![0.0]);
        assert_eq!(g.act(&[0.5], 0), vec![1.0]);
        assert_eq!(g.act(&[-1.0], 0), vec![1.0]);
        // ζ = sigmoid(0.3 - x) in 2-D: the tangential part survives.
        let net2 = ConstraintNet::from_layers(
            vec![Layer {
                inputs: 2,
                outputs: 1,
                weights: vec![-1.0, 0.0],
                biases: vec![0.3],
            }],
            0.01,
        )
        .unwrap();
        let g = BoundaryGuard::new(
            |_: &[f64], _: usize| vec![1.0, 0.4],
            net2,
            0.5,
            SpeedLimit::Norm { cap: 10.0 },
        );
        let a = g.act(&[0.0, 0.0], 0);
        assert!(a[0].abs() < 1e-12);
        assert!((a[1] - 0.4).abs() < 1e-12);
    }
}
