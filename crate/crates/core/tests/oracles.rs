use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use pucl_core::classifier::{bce_loss, loss_and_gradient, ConstraintNet, Layer, NetSpec};
use pucl_core::harness::{grid_points, Confusion, EvalGrid};
use pucl_core::policy::{eigenvalues, modulation_matrix};
use pucl_core::pulearn::{knn_score, Metric};
use pucl_core::rng::{Seeds, Stream};
use pucl_core::types::GeneralizedState;

fn brute_knn(q: &[f64], reference: &[Vec<f64>], k: usize) -> f64 {
    let mut d: Vec<f64> = reference
        .iter()
        .map(|r| {
            q.iter()
                .zip(r)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

fn points(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, dim), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_brute_force(
        q in prop::collection::vec(-5.0..5.0f64, 3),
        reference in points(1..40, 3),
        k in 1usize..6,
    ) {
        let refs: Vec<&[f64]> = reference.iter().map(|r| r.as_slice()).collect();
        let k = k.min(reference.len());
        let got = knn_score(&q, &refs, k, Metric::Euclidean).unwrap();
        let want = brute_knn(&q, &reference, k);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn confusion_matches_counting(labels in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (pred, truth): (Vec<bool>, Vec<bool>) = labels.iter().cloned().unzip();
        let c = Confusion::count(&pred, &truth);
        let tp = labels.iter().filter(|(p, t)| *p && *t).count();
        let fp = labels.iter().filter(|(p, t)| *p && !*t).count();
        let fn_ = labels.iter().filter(|(p, t)| !*p && *t).count();
        let tn = labels.len() - tp - fp - fn_;
        prop_assert_eq!(
            (c.true_infeasible, c.false_infeasible, c.false_feasible, c.true_feasible),
            (tp, fp, fn_, tn)
        );
        match c.iou() {
            Ok(v) => prop_assert_eq!(v, tp as f64 / (tp + fp + fn_) as f64),
            Err(_) => prop_assert_eq!(tp + fp + fn_, 0),
        }
        match c.recall() {
            Ok(v) => prop_assert_eq!(v, tp as f64 / (tp + fn_) as f64),
            Err(_) => prop_assert_eq!(tp + fn_, 0),
        }
        match c.precision() {
            Ok(v) => prop_assert_eq!(v, tp as f64 / (tp + fp) as f64),
            Err(_) => prop_assert_eq!(tp + fp, 0),
        }
    }
}

fn net(dim: usize, seed: u64) -> ConstraintNet {
    let mut rng = Seeds::new(seed).stream(Stream::Init);
    let spec = NetSpec {
        hidden: vec![8, 6],
        negative_slope: 0.01,
    };
    let mut net = ConstraintNet::new(dim, &spec, &mut rng).unwrap();
    net.set_input_normalization(vec![0.1; dim], vec![1.5; dim])
        .unwrap();
    net
}

fn gs(v: &[f64]) -> GeneralizedState {
    GeneralizedState::new(v.to_vec()).unwrap()
}

fn sample_sets(seed: u64) -> (Vec<GeneralizedState>, Vec<GeneralizedState>) {
    use rand::Rng as _;
    let mut rng = Seeds::new(seed).stream(Stream::Starts);
    let mut draw = |n: usize, c: f64| -> Vec<GeneralizedState> {
        (0..n)
            .map(|_| gs(&[c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
            .collect()
    };
    (draw(12, -0.5), draw(9, 0.7))
}

#[test]
fn bce_loss_matches_hand_evaluation() {
    for seed in 0..5 {
        let n = net(2, seed);
        let (f, i) = sample_sets(seed);
        let mut want = 0.0;
        for x in &f {
            want -= n
                .predict(x.as_slice())
                .unwrap()
                .clamp(1e-7, 1.0 - 1e-7)
                .ln();
        }
        for x in &i {
            want -= (1.0 - n.predict(x.as_slice()).unwrap().clamp(1e-7, 1.0 - 1e-7)).ln();
        }
        want /= (f.len() + i.len()) as f64;
        let got = bce_loss(&n, &f, &i, 1e-7).unwrap();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn bce_gradient_matches_central_differences() {
    for seed in 0..5 {
        let mut n = net(2, seed);
        let (f, i) = sample_sets(seed);
        let (loss, grad) = loss_and_gradient(&n, &f, &i, 1e-7).unwrap();
        assert!((loss - bce_loss(&n, &f, &i, 1e-7).unwrap()).abs() <= 1e-12);
        let theta = n.parameters();
        let h = 1e-6;
        let mut fd = vec![0.0; theta.len()];
        for j in 0..theta.len() {
            let mut p = theta.clone();
            p[j] = theta[j] + h;
            n.set_parameters(&p).unwrap();
            let up = bce_loss(&n, &f, &i, 1e-7).unwrap();
            p[j] = theta[j] - h;
            n.set_parameters(&p).unwrap();
            let down = bce_loss(&n, &f, &i, 1e-7).unwrap();
            fd[j] = (up - down) / (2.0 * h);
        }
        n.set_parameters(&theta).unwrap();
        let diff: f64 = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            diff <= 1e-4 * norm,
            "seed {seed}: relative error {}",
            diff / norm
        );
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (j, (a, b)) in grad.iter().zip(&fd).enumerate() {
            assert!(
                (a - b).abs() <= 1e-4 * b.abs().max(1e-2 * scale),
                "seed {seed} param {j}: {a} vs {b}"
            );
        }
    }
}

/// `E·D·E⁻¹` with the tangent complement taken from a QR factorization, so
/// the basis differs from the one used by the library.
fn oracle_modulation(n: &[f64], r: &[f64], gamma: f64) -> DMatrix<f64> {
    let dim = n.len();
    let mut a = DMatrix::zeros(dim, dim + 1);
    a.set_column(0, &DVector::from_column_slice(n));
    for i in 0..dim {
        a[(i, i + 1)] = 1.0;
    }
    let q = a.qr().q();
    let mut e = DMatrix::zeros(dim, dim);
    e.set_column(0, &DVector::from_column_slice(r));
    for j in 1..dim {
        e.set_column(j, &q.column(j));
    }
    let (l1, lt) = eigenvalues(gamma);
    let mut d = DMatrix::from_diagonal_element(dim, dim, lt);
    d[(0, 0)] = l1;
    &e * d * e.try_inverse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn modulation_matches_eigen_construction(
        raw_n in prop::collection::vec(-1.0..1.0f64, 3),
        tilt in prop::collection::vec(-0.5..0.5f64, 3),
        gamma in 1.001..50.0f64,
    ) {
        let norm = raw_n.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        let n: Vec<f64> = raw_n.iter().map(|v| v / norm).collect();
        let r_raw: Vec<f64> = n.iter().zip(&tilt).map(|(a, b)| a + b).collect();
        let align: f64 = r_raw.iter().zip(&n).map(|(a, b)| a * b).sum();
        prop_assume!(align > 0.3);
        let rn = r_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r: Vec<f64> = r_raw.iter().map(|v| v / rn).collect();
        let got = modulation_matrix(&n, &r, gamma).unwrap();
        let want = oracle_modulation(&n, &r, gamma);
        let err = (&got - &want).abs().max();
        prop_assert!(err <= 1e-9, "max abs error {err}");
    }
}

#[test]
fn grid_iou_converges_to_area_ratio() {
    // Predicted infeasible: x + y <= 0.8. True infeasible: x < 0.5.
    let layer = Layer {
        inputs: 2,
        outputs: 1,
        weights: vec![1.0, 1.0],
        biases: vec![-0.8],
    };
    let net = ConstraintNet::from_layers(vec![layer], 0.01).unwrap();
    let inter = 0.4 - 0.125;
    let exact = inter / (0.32 + 0.5 - inter);
    let mut errors = Vec::new();
    for n in [10, 40, 160] {
        let pts = grid_points(&[0.0, 0.0], &[1.0, 1.0], &[n, n]);
        let labels = pts.iter().map(|p| p[0] < 0.5).collect();
        let grid = EvalGrid::from_labeled(pts, labels).unwrap();
        errors.push((grid.confusion(&net).unwrap().iou().unwrap() - exact).abs());
    }
    assert!(errors[2] < 0.005, "{errors:?}");
    assert!(errors[2] <= errors[0], "{errors:?}");
}
