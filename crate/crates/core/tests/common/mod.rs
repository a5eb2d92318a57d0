//! Independent oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use policy_committee::mdp::RandomEnvSpec;
use policy_committee::{DynamicEnvironment, MdpTask, Policy, TaskParams, TaskSet};
use rand::Rng;

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn params(v: &[f64]) -> TaskParams {
    TaskParams::new(v.to_vec()).unwrap()
}

pub fn task(v: &[f64]) -> MdpTask {
    MdpTask::new(params(v))
}

pub fn random_tasks(rng: &mut impl Rng, n: usize, d: usize, span: f64) -> TaskSet {
    let rows = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..span)).collect())
        .collect();
    TaskSet::from_rows(rows).unwrap()
}

/// The five-vertex instance whose single-center coverage is the max clique
/// size (2). Vertex `θ` sits at 0 in dimension `θ`, at 1.5ε in dimensions of
/// adjacent vertices and at 2.5ε elsewhere.
pub fn clique_instance(eps: f64) -> TaskSet {
    let adjacent = |i: usize, j: usize| matches!((i.min(j), i.max(j)), (3, 5) | (4, 5));
    let rows = (1..=5)
        .map(|v| {
            (1..=5)
                .map(|s| match (s == v, adjacent(s, v)) {
                    (true, _) => 0.0,
                    (false, true) => 1.5 * eps,
                    (false, false) => 2.5 * eps,
                })
                .collect()
        })
        .collect();
    TaskSet::from_rows(rows).unwrap()
}

/// Whether one ε-box can hold every task in `mask`: on each dimension some
/// `f64` center near `lo + ε`, `hi − ε` or the midpoint is within ε of every
/// member.
pub fn coverable(tasks: &TaskSet, mask: u32, eps: f64) -> bool {
    let members: Vec<&[f64]> = (0..tasks.len()).filter(|i| mask >> i & 1 == 1).map(|i| tasks.point(i)).collect();
    (0..tasks.dim()).all(|s| {
        let xs: Vec<f64> = members.iter().map(|p| p[s]).collect();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut candidates = Vec::new();
        for seed in [lo + eps, hi - eps, (lo + hi) / 2.0] {
            let (mut up, mut down) = (seed, seed);
            for _ in 0..6 {
                candidates.push(up);
                candidates.push(down);
                up = up.next_up();
                down = down.next_down();
            }
        }
        candidates.iter().any(|c| xs.iter().all(|x| (c - x).abs() <= eps))
    })
}

/// Largest coverable subset, by enumerating every subset.
pub fn brute_max_1_cover(tasks: &TaskSet, eps: f64) -> usize {
    assert!(tasks.len() <= 16);
    (1u32..1 << tasks.len())
        .filter(|&m| coverable(tasks, m, eps))
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

/// Largest union of `k` coverable subsets; only inclusion-maximal subsets
/// need to be tried.
pub fn brute_max_k_cover(tasks: &TaskSet, eps: f64, k: usize) -> usize {
    assert!(tasks.len() <= 16);
    let feasible: Vec<u32> = (1u32..1 << tasks.len()).filter(|&m| coverable(tasks, m, eps)).collect();
    let maximal: Vec<u32> = feasible
        .iter()
        .copied()
        .filter(|&m| !feasible.iter().any(|&o| o != m && o & m == m))
        .collect();
    fn go(sets: &[u32], k: usize, acc: u32) -> u32 {
        if k == 0 || sets.is_empty() {
            return acc.count_ones();
        }
        let take = go(&sets[1..], k - 1, acc | sets[0]);
        let skip = go(&sets[1..], k, acc);
        take.max(skip)
    }
    go(&maximal, k, 0) as usize
}

pub fn random_env(rng: &mut impl Rng, s: usize, a: usize, d: usize, h: usize, gamma: f64) -> DynamicEnvironment {
    let spec = RandomEnvSpec { num_states: s, num_actions: a, feature_dim: d, horizon: h, discount: gamma };
    DynamicEnvironment::random(&spec, rng)
}

pub fn reward(env: &DynamicEnvironment, task: &MdpTask, s: usize, a: usize) -> f64 {
    let phi = env.feature(s, a);
    task.theta.as_slice().iter().zip(phi).map(|(t, f)| t * f).sum::<f64>() + env.base_reward(s, a)
}

/// Expected return of a time-indexed policy by backward recursion.
pub fn evaluate_backward(env: &DynamicEnvironment, task: &MdpTask, action: impl Fn(usize, usize) -> usize) -> f64 {
    let n = env.num_states();
    let mut v = vec![0.0; n];
    for t in (0..=env.horizon()).rev() {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let a = action(t, s);
                let future: f64 = env.transition_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                reward(env, task, s, a) + env.discount() * future
            })
            .collect();
        v = next;
    }
    env.initial_dist().iter().zip(&v).map(|(p, x)| p * x).sum()
}

pub fn evaluate_policy(env: &DynamicEnvironment, task: &MdpTask, pi: &Policy) -> f64 {
    evaluate_backward(env, task, |t, s| pi.action(t, s))
}

/// Best expected return over all deterministic time-indexed policies.
pub fn brute_optimal_value(env: &DynamicEnvironment, task: &MdpTask) -> f64 {
    let slots = (env.horizon() + 1) * env.num_states();
    let a = env.num_actions();
    let total = a.pow(slots as u32);
    assert!(total <= 1 << 16, "too many policies to enumerate");
    (0..total)
        .map(|code| {
            let choice = |t: usize, s: usize| (code / a.pow((t * env.num_states() + s) as u32)) % a;
            evaluate_backward(env, task, choice)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
