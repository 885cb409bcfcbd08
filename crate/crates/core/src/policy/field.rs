use std::collections::HashMap;

use crate::classifier::ConstraintNet;
use crate::envs::TrueConstraint;
use crate::error::{ensure_dim, Result};
use crate::types::euclidean;

/// A scalar feasibility field `ζ(s) ∈ (0, 1)` over states, with its gradient
/// and an interior reference point for the modulation basis.
pub trait ConstraintField: Sync {
    fn dim(&self) -> usize;

    /// `(ζ(s), ∇ζ(s))`.
    fn sample(&self, s: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// A point inside the infeasible region nearest to `s`, if known.
    fn reference_point(&self, s: &[f64]) -> Option<Vec<f64>>;
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so labels do not depend on visiting order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn neighbour_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|o| {
                (-1..=1).map(move |d| {
                    let mut v = o.clone();
                    v.push(d);
                    v
                })
            })
            .collect();
    }
    out
}

/// Single-linkage clusters of `points` at `radius`: two points share a
/// cluster when a chain of pairwise distances `<= radius` joins them.
pub fn single_linkage(points: &[Vec<f64>], radius: f64) -> Vec<usize> {
    let n = points.len();
    let mut uf = UnionFind::new(n);
    let dim = points.first().map(Vec::len).unwrap_or(0);
    if dim > 0 && dim <= 3 && radius > 0.0 {
        let cell =
            |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / radius).floor() as i64).collect() };
        let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(cell(p)).or_default().push(i);
        }
        let offsets = neighbour_offsets(dim);
        for (i, p) in points.iter().enumerate() {
            let c = cell(p);
            for o in &offsets {
                let key: Vec<i64> = c.iter().zip(o).map(|(a, b)| a + b).collect();
                if let Some(bucket) = grid.get(&key) {
                    for &j in bucket {
                        if j > i && euclidean(p, &points[j]) <= radius {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                if euclidean(&points[i], &points[j]) <= radius {
                    uf.union(i, j);
                }
            }
        }
    }
    (0..n).map(|i| uf.find(i)).collect()
}

/// Clustered infeasible points; each cluster is represented by its member
/// with the lowest `ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceIndex {
    points: Vec<Vec<f64>>,
    anchor_of: Vec<usize>,
}

impl ReferenceIndex {
    pub fn build(points: Vec<Vec<f64>>, radius: f64, zeta: impl Fn(&[f64]) -> f64) -> Self {
        let labels = single_linkage(&points, radius);
        let values: Vec<f64> = points.iter().map(|p| zeta(p)).collect();
        let mut best: HashMap<usize, usize> = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            let e = best.entry(l).or_insert(i);
            if values[i] < values[*e] {
                *e = i;
            }
        }
        let anchor_of = labels.iter().map(|l| best[l]).collect();
        ReferenceIndex { points, anchor_of }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        let mut a = self.anchor_of.clone();
        a.sort_unstable();
        a.dedup();
        a.len()
    }

    /// Anchor of the cluster holding the point nearest to `s`.
    pub fn reference(&self, s: &[f64]) -> Option<&[f64]> {
        let (nearest, _) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, euclidean(p, s)))
            .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                Some((_, bd)) if bd <= d => acc,
                _ => Some((i, d)),
            })?;
        Some(&self.points[self.anchor_of[nearest]])
    }
}

/// The learned network as a field over its feature space.
#[derive(Debug, Clone)]
pub struct LearnedField {
    pub net: ConstraintNet,
    pub index: Option<ReferenceIndex>,
}

impl LearnedField {
    /// Builds the reference index from buffered infeasible points.
    pub fn new(net: ConstraintNet, buffer: &[Vec<f64>], cluster_radius: f64) -> Self {
        let index = if buffer.is_empty() {
            None
        } else {
            let n = &net;
            Some(ReferenceIndex::build(
                buffer.to_vec(),
                cluster_radius,
                |p| n.predict(p).unwrap_or(f64::INFINITY),
            ))
        };
        LearnedField { net, index }
    }
}

impl ConstraintField for LearnedField {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn sample(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (logit, g) = self.net.logit_with_gradient(s)?;
        let z = crate::classifier::sigmoid(logit);
        // Same slope floor as the obstacle field: a saturated sigmoid keeps
        // its direction.
        let slope = (z * (1.0 - z)).max(1e-12);
        Ok((z, g.iter().map(|d| slope * d).collect()))
    }

    fn reference_point(&self, s: &[f64]) -> Option<Vec<f64>> {
        self.index.as_ref()?.reference(s).map(<[f64]>::to_vec)
    }
}

/// Analytic field around a geometric constraint:
/// `ζ = sigmoid(sharpness · gap)`, with `gap` the signed distance to the
/// nearest obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleField {
    pub constraint: TrueConstraint,
    pub sharpness: f64,
    pub dim: usize,
}

impl ObstacleField {
    pub fn new(constraint: TrueConstraint, sharpness: f64, dim: usize) -> Self {
        ObstacleField {
            constraint,
            sharpness,
            dim,
        }
    }
}

impl ConstraintField for ObstacleField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        ensure_dim(self.dim, s.len())?;
        match self.constraint.nearest_gap(s) {
            Some(g) => {
                let z = crate::classifier::sigmoid(self.sharpness * g.gap);
                // Floor the slope so the direction stays defined far away.
                let slope = self.sharpness * (z * (1.0 - z)).max(1e-12);
                Ok((z, g.gradient.iter().map(|d| slope * d).collect()))
            }
            None => Ok((1.0, vec![0.0; self.dim])),
        }
    }

    fn reference_point(&self, s: &[f64]) -> Option<Vec<f64>> {
        self.constraint.nearest_gap(s).map(|g| g.reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Cylinder;

    #[test]
    fn clusters_chain_within_radius() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.2, 0.0],
            vec![1.0, 1.0],
            vec![1.05, 1.0],
        ];
        let l = single_linkage(&pts, 0.11);
        assert_eq!(l[0], l[1]);
        assert_eq!(l[1], l[2]);
        assert_eq!(l[3], l[4]);
        assert_ne!(l[0], l[3]);
    }

    #[test]
    fn grid_and_brute_force_agree() {
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin(), (2.0 * t).cos(), (0.5 * t).sin()]
            })
            .collect();
        let grid = single_linkage(&pts, 0.3);
        let mut uf = UnionFind::new(pts.len());
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if euclidean(&pts[i], &pts[j]) <= 0.3 {
                    uf.union(i, j);
                }
            }
        }
        let brute: Vec<usize> = (0..pts.len()).map(|i| uf.find(i)).collect();
        assert_eq!(grid, brute);
    }

    #[test]
    fn reference_is_lowest_zeta_member() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![3.0, 0.0]];
        let idx = ReferenceIndex::build(pts, 0.2, |p| p[0].abs() - 0.5 * (p[0] - 0.1).abs());
        assert_eq!(idx.cluster_count(), 2);
        // zeta: 0.0 -> -0.05, 0.1 -> 0.1; the first point anchors its cluster.
        assert_eq!(idx.reference(&[0.12, 0.0]).unwrap(), &[0.0, 0.0]);
        assert_eq!(idx.reference(&[2.0, 0.0]).unwrap(), &[3.0, 0.0]);
    }

    #[test]
    fn obstacle_field_is_half_on_boundary() {
        let f = ObstacleField::new(
            TrueConstraint::CylinderSet {
                cylinders: vec![Cylinder {
                    center: [0.0, 0.0],
                    radius: 0.2,
                }],
            },
            50.0,
            2,
        );
        let (z, g) = f.sample(&[0.2, 0.0]).unwrap();
        assert!((z - 0.5).abs() < 1e-12);
        assert!((g[0] - 12.5).abs() < 1e-9 && g[1].abs() < 1e-12);
        assert_eq!(f.reference_point(&[0.3, 0.1]).unwrap(), vec![0.0, 0.0]);
    }
}
