//! Fixtures shared by the benchmarks.

use pucl_core::classifier::{ConstraintNet, NetSpec};
use pucl_core::rng::{Seeds, Stream};
use pucl_core::types::GeneralizedState;

/// `n` points of a Kronecker sequence in `[-1, 1]^dim`.
pub fn cloud(n: usize, dim: usize, offset: f64) -> Vec<Vec<f64>> {
    let alpha: Vec<f64> = (0..dim).map(|i| ((i + 2) as f64).sqrt().fract()).collect();
    (0..n)
        .map(|j| {
            alpha
                .iter()
                .map(|a| 2.0 * ((offset + j as f64 * a).fract()) - 1.0)
                .collect()
        })
        .collect()
}

pub fn states(points: &[Vec<f64>]) -> Vec<GeneralizedState> {
    points
        .iter()
        .map(|p| GeneralizedState::new(p.clone()).expect("finite point"))
        .collect()
}

pub fn net(dim: usize) -> ConstraintNet {
    ConstraintNet::new(
        dim,
        &NetSpec::default(),
        &mut Seeds::new(0).stream(Stream::Init),
    )
    .expect("net")
}
