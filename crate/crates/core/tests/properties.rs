use proptest::prelude::*;

use pucl_core::config::{ExperimentConfig, Task};
use pucl_core::envs::{EnvSpec, OpenLoop, SpeedLimit};
use pucl_core::policy::{
    eigenvalues, modulation_matrix, penalized_return, pid_update, PidGains, Violation,
};
use pucl_core::pulearn::{knn_score, MemoryBuffer, Metric};
use pucl_core::types::{flatten_trajectories, GeneralizedState, Provenance, Trajectory};
use pucl_core::FeatureMap;

fn env2d() -> EnvSpec {
    ExperimentConfig::preset(Task::Reaching2d).env
}

fn rollout(env: &EnvSpec, start: &[f64], actions: Vec<Vec<f64>>, index: usize) -> Trajectory {
    let p = OpenLoop {
        actions,
        action_dim: env.action_dim(),
    };
    env.rollout(&p, start, index).unwrap()
}

fn actions(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), len)
}

fn start() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..0.4f64, 2)
}

struct Disk;

impl Violation for Disk {
    fn violated(&self, state: &[f64], _action: &[f64]) -> bool {
        (state[0] - 0.8).powi(2) + (state[1] - 0.8).powi(2) < 0.25
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn regroup_inverts_flatten(
        starts in prop::collection::vec(start(), 1..5),
        acts in prop::collection::vec(actions(1..12), 5),
    ) {
        let env = env2d();
        let trajs: Vec<Trajectory> = starts
            .iter()
            .zip(acts)
            .enumerate()
            .map(|(i, (s, a))| rollout(&env, s, a, i))
            .filter(|t| !t.is_empty())
            .collect();
        prop_assume!(!trajs.is_empty());
        let d = flatten_trajectories(&trajs, &FeatureMap::StateOnly, Provenance::Policy).unwrap();
        let groups = d.regroup();
        prop_assert_eq!(groups.len(), trajs.len());
        for (g, t) in groups.iter().zip(&trajs) {
            let want: Vec<&[f64]> = t.steps().iter().map(|sa| sa.state.as_slice()).collect();
            let got: Vec<&[f64]> = g.iter().map(|p| p.as_slice()).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn path_reward_telescopes_to_polyline_length(s in start(), a in actions(1..40)) {
        let env = env2d();
        let t = rollout(&env, &s, a, 0);
        prop_assert!((t.cached_return() + t.polyline_length()).abs() <= 1e-12);
        prop_assert!((env.trajectory_return(&t) - t.cached_return()).abs() <= 1e-12);
    }

    #[test]
    fn steps_are_speed_limited(s in start(), a in actions(1..40)) {
        let env = env2d();
        let SpeedLimit::Norm { cap } = env.speed_limit else { unreachable!() };
        let t = rollout(&env, &s, a, 0);
        let states: Vec<&[f64]> = t.states().collect();
        for w in states.windows(2) {
            let step: f64 = w[0].iter().zip(w[1]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            prop_assert!(step <= cap * env.dt * (1.0 + 1e-12));
        }
    }

    #[test]
    fn knn_score_invariant_under_rigid_motion(
        q in prop::collection::vec(-3.0..3.0f64, 2),
        reference in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 3..20),
        angle in 0.0..std::f64::consts::TAU,
        shift in prop::collection::vec(-5.0..5.0f64, 2),
        k in 1usize..4,
    ) {
        let (c, s) = (angle.cos(), angle.sin());
        let moved = |p: &[f64]| vec![c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]];
        let refs: Vec<&[f64]> = reference.iter().map(|r| r.as_slice()).collect();
        let moved_ref: Vec<Vec<f64>> = reference.iter().map(|r| moved(r)).collect();
        let moved_refs: Vec<&[f64]> = moved_ref.iter().map(|r| r.as_slice()).collect();
        let a = knn_score(&q, &refs, k, Metric::Euclidean).unwrap();
        let b = knn_score(&moved(&q), &moved_refs, k, Metric::Euclidean).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn modulation_scales_tangent_vectors(
        raw in prop::collection::vec(-1.0..1.0f64, 3),
        v in prop::collection::vec(-1.0..1.0f64, 3),
        gamma in 1.0..100.0f64,
    ) {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        let n: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let dot: f64 = v.iter().zip(&n).map(|(a, b)| a * b).sum();
        let t: Vec<f64> = v.iter().zip(&n).map(|(a, b)| a - dot * b).collect();
        let m = modulation_matrix(&n, &n, gamma).unwrap();
        let (l1, lt) = eigenvalues(gamma);
        prop_assert!((0.0..1.0).contains(&l1) && lt > 1.0 && lt <= 2.0);
        let mt = &m * nalgebra::DVector::from_vec(t.clone());
        for (a, b) in mt.iter().zip(&t) {
            prop_assert!((a - lt * b).abs() <= 1e-9);
        }
        let mn = &m * nalgebra::DVector::from_vec(n.clone());
        for (a, b) in mn.iter().zip(&n) {
            prop_assert!((a - l1 * b).abs() <= 1e-9);
        }
    }

    #[test]
    fn penalized_return_decreases_with_weight(
        s in prop::collection::vec(0.0..1.0f64, 2),
        a in actions(1..30),
        w in prop::collection::vec(0.0..100.0f64, 2),
    ) {
        let env = env2d();
        let t = rollout(&env, &s, a, 0);
        let (lo, hi) = if w[0] <= w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
        prop_assert!(penalized_return(&t, &env, &Disk, hi) <= penalized_return(&t, &env, &Disk, lo));
        prop_assert!((penalized_return(&t, &env, &Disk, 0.0) - t.cached_return()).abs() <= 1e-12);
    }

    #[test]
    fn pid_weight_grows_under_persistent_violation(
        kp in 0.0..5.0f64,
        ki in 0.01..5.0f64,
        kd in 0.0..1.0f64,
        rate in 0.01..1.0f64,
        steps in 2usize..30,
    ) {
        let gains = PidGains { kp, ki, kd };
        let target = 0.0;
        let mut history = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..steps {
            history.push(rate);
            let w = pid_update(&history, &gains, target);
            prop_assert!(w > last);
            last = w;
        }
    }

    #[test]
    fn buffer_never_shrinks(batches in prop::collection::vec(prop::collection::vec(prop::collection::vec(-2i32..2, 2), 0..10), 1..8)) {
        let mut buffer = MemoryBuffer::new();
        let mut before = 0;
        for (it, batch) in batches.iter().enumerate() {
            let pts: Vec<GeneralizedState> = batch
                .iter()
                .map(|p| GeneralizedState::new(p.iter().map(|&v| v as f64 * 0.5).collect()).unwrap())
                .collect();
            let added = buffer.merge(&pts, it);
            prop_assert_eq!(buffer.len(), before + added);
            prop_assert!(pts.iter().all(|p| buffer.contains(p)));
            before = buffer.len();
        }
    }
}

#[test]
fn true_constraint_examples() {
    let velocity = ExperimentConfig::preset(Task::Velocity).constraint;
    let sa = |a: Vec<f64>| pucl_core::StateAction::new(vec![0.5, 0.5, 0.3], a).unwrap();
    assert!(velocity.is_truly_infeasible(&sa(vec![0.50, 0.0, 0.0])));
    assert!(!velocity.is_truly_infeasible(&sa(vec![0.47, 0.57, 0.18])));
}
