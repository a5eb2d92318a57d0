mod common;

use common::*;
use ndarray::Array2;
use policy_committee::cover::coverage_stats;
use policy_committee::grad::{
    optimize_cover, relax_gradient, relax_objective, relax_objective_t, Init, OptimizerConfig, RelaxState,
};
use policy_committee::TaskSet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The proxy written out directly: Σ_i max(0, Σ_k softmax_k · ‖c_k − x_i‖∞ − ε).
fn proxy(tasks: &TaskSet, centers: &Array2<f64>, logits: &Array2<f64>, eps: f64, temp: f64) -> f64 {
    (0..tasks.len())
        .map(|i| {
            let z: Vec<f64> = logits.row(i).iter().map(|l| (l / temp).exp()).collect();
            let total: f64 = z.iter().sum();
            let soft: f64 = (0..centers.nrows())
                .map(|k| {
                    let d = centers.row(k).iter().zip(tasks.point(i)).fold(0.0f64, |m, (c, x)| m.max((c - x).abs()));
                    z[k] / total * d
                })
                .sum();
            (soft - eps).max(0.0)
        })
        .sum()
}

fn random_state(rng: &mut impl Rng, n: usize, d: usize, k: usize) -> (TaskSet, Array2<f64>, Array2<f64>) {
    let tasks = random_tasks(rng, n, d, 3.0);
    let centers = Array2::from_shape_fn((k, d), |_| rng.random_range(0.0..3.0));
    let logits = Array2::from_shape_fn((n, k), |_| rng.random_range(-3.0..3.0));
    (tasks, centers, logits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_matches_direct_formula(seed in any::<u64>(), eps in 0.0f64..2.0, temp in 0.2f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tasks, c, l) = random_state(&mut rng, 7, 3, 3);
        let state = RelaxState::new(c.clone(), l.clone(), &tasks, eps, temp).unwrap();
        let direct = proxy(&tasks, &c, &l, eps, temp);
        prop_assert!((relax_objective_t(&state, &tasks, eps, temp).unwrap() - direct).abs() <= 1e-12 * direct.max(1.0));
        prop_assert_eq!(state.objective, relax_objective_t(&state, &tasks, eps, temp).unwrap());
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tasks, c, l) = random_state(&mut rng, 5, 2, 4);
        let state = RelaxState::new(c, l, &tasks, 0.5, 1.0).unwrap();
        for row in state.weights(1.0).rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn zero_soft_objective_means_full_hard_cover(seed in any::<u64>(), eps in 0.1f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tasks, c, l) = random_state(&mut rng, 6, 2, 3);
        let state = RelaxState::new(c, l, &tasks, eps, 1.0).unwrap();
        if relax_objective(&state, &tasks, eps).unwrap() == 0.0 {
            prop_assert_eq!(coverage_stats(&tasks, &state.center_params(), eps).unwrap().miss_rate, 0.0);
        }
    }

    #[test]
    fn gradient_is_a_directional_derivative(seed in any::<u64>()) {
        // along a random direction, the one-sided slope matches the gradient
        // wherever the objective is locally linear in the centers
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tasks, c, l) = random_state(&mut rng, 6, 2, 2);
        let eps = 0.4;
        let state = RelaxState::new(c.clone(), l.clone(), &tasks, eps, 1.0).unwrap();
        let g = relax_gradient(&state, &tasks, eps).unwrap();
        let dir_c = Array2::from_shape_fn(c.raw_dim(), |_| rng.random_range(-1.0..1.0));
        let dir_l = Array2::from_shape_fn(l.raw_dim(), |_| rng.random_range(-1.0..1.0));
        let predicted = (&g.centers * &dir_c).sum() + (&g.logits * &dir_l).sum();
        let h = 1e-7;
        let f = |t: f64| proxy(&tasks, &(&c + &(&dir_c * t)), &(&l + &(&dir_l * t)), eps, 1.0);
        let (fwd, bwd) = ((f(h) - f(0.0)) / h, (f(0.0) - f(-h)) / h);
        // at a kink the two sides differ; only smooth points are compared
        prop_assume!((fwd - bwd).abs() < 1e-5);
        prop_assert!((predicted - fwd).abs() < 1e-4 * fwd.abs().max(1.0), "predicted {} fd {}", predicted, fwd);
    }
}

#[test]
fn explicit_full_cover_stays_put() {
    let tasks = TaskSet::from_rows(vec![vec![0.0], vec![0.1], vec![5.0]]).unwrap();
    let cfg = OptimizerConfig {
        init: Init::Explicit(vec![params(&[0.05]), params(&[5.0])]),
        init_logit: 20.0,
        ..Default::default()
    };
    let out = optimize_cover(&tasks, 0.2, 2, &cfg).unwrap();
    assert_eq!(out.iterations, 0);
    assert_eq!(out.solution.covered_count, 3);
}

#[test]
fn random_init_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tasks = random_tasks(&mut rng, 30, 3, 4.0);
    let cfg = OptimizerConfig { init: Init::Random, seed: 9, max_iters: 50, ..Default::default() };
    let a = optimize_cover(&tasks, 0.5, 3, &cfg).unwrap();
    let b = optimize_cover(&tasks, 0.5, 3, &cfg).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn descent_from_greedy_never_loses_coverage_on_planted_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = Vec::new();
    for c in [[0.0, 0.0], [2.0, 2.0], [4.0, 0.0]] {
        for _ in 0..10 {
            rows.push(c.iter().map(|x| x + rng.random_range(-0.2..0.2)).collect());
        }
    }
    let tasks = TaskSet::from_rows(rows).unwrap();
    let out = optimize_cover(&tasks, 0.4, 3, &OptimizerConfig::default()).unwrap();
    assert_eq!(out.soft_objective, 0.0);
    assert_eq!(out.solution.covered_count, 30);
    assert!(out.trace.first().unwrap().iteration == 0);
}
