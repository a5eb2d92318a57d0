mod common;

use common::*;
use policy_committee::mdp::{
    lipschitz_constant, policy_value, rollout, simulation_bound, value_iteration, EnvironmentFile,
};
use policy_committee::DynamicEnvironment;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn planner_matches_policy_enumeration(seed in any::<u64>(), gamma in 0.3f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = random_env(&mut rng, 3, 2, 2, 2, gamma);
        let t = task(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        let pi = value_iteration(&env, &t).unwrap();
        let exact = brute_optimal_value(&env, &t);
        prop_assert!((policy_value(&env, &t, &pi).unwrap() - exact).abs() < 1e-12);
        prop_assert!((pi.planned_start_value(&env).unwrap() - exact).abs() < 1e-12);
        prop_assert!(pi.bellman_residual(&env, &t).unwrap() < 1e-12);
    }

    #[test]
    fn forward_and_backward_evaluation_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, a, h) = (rng.random_range(1..6), rng.random_range(1..4), rng.random_range(0..12));
        let gamma = rng.random_range(0.5..=1.0);
        let env = random_env(&mut rng, s, a, 2, h, gamma);
        let t = task(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let actions = (0..=h).map(|_| (0..s).map(|_| rng.random_range(0..a)).collect()).collect();
        let pi = policy_committee::Policy::from_actions(&env, actions).unwrap();
        let v = policy_value(&env, &t, &pi).unwrap();
        prop_assert!((v - evaluate_policy(&env, &t, &pi)).abs() < 1e-10 * v.abs().max(1.0));
    }

    #[test]
    fn values_are_lipschitz_in_theta(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, gamma) = (rng.random_range(0..15), rng.random_range(0.5..=1.0));
        let env = random_env(&mut rng, 4, 3, 3, h, gamma);
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dist = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let (ta, tb) = (task(&a), task(&b));
        let pi = value_iteration(&env, &ta).unwrap();
        let horizon_weight: f64 = (0..=h).map(|t| gamma.powi(t as i32)).sum();
        let gap = (policy_value(&env, &ta, &pi).unwrap() - policy_value(&env, &tb, &pi).unwrap()).abs();
        prop_assert!(gap <= lipschitz_constant(&env) * horizon_weight * dist + 1e-12);
    }
}

#[test]
fn rollout_mean_matches_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let env = random_env(&mut rng, 5, 3, 2, 8, 0.9);
    let t = task(&[0.7, -0.4]);
    let pi = value_iteration(&env, &t).unwrap();
    let exact = policy_value(&env, &t, &pi).unwrap();
    let n = 20_000;
    let returns: Vec<f64> = (0..n).map(|e| rollout(&env, &t, &pi, e).unwrap()).collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "mean {mean} exact {exact}");
    assert_eq!(rollout(&env, &t, &pi, 5).unwrap(), rollout(&env, &t, &pi, 5).unwrap());
}

#[test]
fn bound_uses_discounted_horizon_weight() {
    let b = simulation_bound(1.0, 0.5, 2, 0.1);
    assert!((b - 2.0 * 0.1 * (1.0 - 0.125) / 0.5).abs() < 1e-15);
    assert!((simulation_bound(2.0, 1.0, 10, 0.1) - 4.0).abs() < 1e-12);
}

#[test]
fn environment_file_validation_names_the_field() {
    let bad = EnvironmentFile {
        schema_version: 1,
        horizon: 1,
        discount: 0.9,
        initial_dist: vec![1.0, 0.0],
        transitions: vec![vec![vec![0.5, 0.4]], vec![vec![0.0, 1.0]]],
        features: vec![vec![vec![0.1]], vec![vec![0.2]]],
        base_reward: None,
    };
    let err = DynamicEnvironment::from_file_repr(bad).unwrap_err().to_string();
    assert!(err.contains("transitions[0][0]"), "{err}");
}

#[test]
fn fixture_environment_loads() {
    let env = DynamicEnvironment::load(fixture("velocity_env.json")).unwrap();
    assert_eq!(env, DynamicEnvironment::velocity_tracking(11, 20, 0.95, 0.2).unwrap());
    assert_eq!(lipschitz_constant(&env), 1.0);
}
