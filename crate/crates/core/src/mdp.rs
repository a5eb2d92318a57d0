//! Tabular multi-task MDP with shared dynamics and rewards linear in the task
//! parameters: `r_θ(s,a) = θ·φ(s,a) + b(s,a)`.
//!
//! Episodes run for timesteps `t = 0..=h`, so a value sums `h + 1` discounted
//! rewards. Policies are deterministic and time-indexed; planning is exact
//! backward induction and evaluation is exact forward propagation of the
//! state distribution.

use std::fs;
use std::path::Path;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task_space::TaskParams;

const ROW_TOLERANCE: f64 = 1e-12;

/// Shared dynamics `(S, A, h, γ, ρ, T)` plus the reward features φ.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicEnvironment {
    num_states: usize,
    num_actions: usize,
    feature_dim: usize,
    horizon: usize,
    discount: f64,
    initial_dist: Vec<f64>,
    /// `[s][a][s']`, flattened.
    transitions: Vec<f64>,
    /// `[s][a][j]`, flattened.
    features: Vec<f64>,
    /// `[s][a]`, task-independent reward offset.
    base_reward: Vec<f64>,
}

/// On-disk layout of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFile {
    #[serde(default = "schema_v1")]
    pub schema_version: u32,
    pub horizon: usize,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `features[s][a][j]`, entries in [0, 1]
    pub features: Vec<Vec<Vec<f64>>>,
    /// `base_reward[s][a]`; omitted means all zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_reward: Option<Vec<Vec<f64>>>,
}

fn schema_v1() -> u32 {
    1
}

impl DynamicEnvironment {
    pub fn from_file_repr(f: EnvironmentFile) -> Result<Self> {
        let s_count = f.transitions.len();
        if s_count == 0 {
            return Err(Error::Validation("transitions: need at least one state".into()));
        }
        let a_count = f.transitions[0].len();
        if a_count == 0 {
            return Err(Error::Validation("transitions[0]: need at least one action".into()));
        }
        if f.features.len() != s_count {
            return Err(Error::Validation(format!(
                "features: expected {s_count} states, got {}",
                f.features.len()
            )));
        }
        let d = f.features[0].first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::Validation("features: feature dimension must be >= 1".into()));
        }
        let mut transitions = Vec::with_capacity(s_count * a_count * s_count);
        let mut features = Vec::with_capacity(s_count * a_count * d);
        for s in 0..s_count {
            if f.transitions[s].len() != a_count || f.features[s].len() != a_count {
                return Err(Error::Validation(format!(
                    "state {s}: expected {a_count} actions in transitions and features"
                )));
            }
            for a in 0..a_count {
                let row = &f.transitions[s][a];
                if row.len() != s_count {
                    return Err(Error::Validation(format!(
                        "transitions[{s}][{a}]: expected {s_count} entries"
                    )));
                }
                transitions.extend_from_slice(row);
                let phi = &f.features[s][a];
                if phi.len() != d {
                    return Err(Error::Validation(format!(
                        "features[{s}][{a}]: expected {d} entries"
                    )));
                }
                features.extend_from_slice(phi);
            }
        }
        let base_reward = match f.base_reward {
            None => vec![0.0; s_count * a_count],
            Some(b) => {
                if b.len() != s_count || b.iter().any(|r| r.len() != a_count) {
                    return Err(Error::Validation(format!(
                        "base_reward: expected {s_count}x{a_count}"
                    )));
                }
                b.into_iter().flatten().collect()
            }
        };
        let env = DynamicEnvironment {
            num_states: s_count,
            num_actions: a_count,
            feature_dim: d,
            horizon: f.horizon,
            discount: f.discount,
            initial_dist: f.initial_dist,
            transitions,
            features,
            base_reward,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn to_file_repr(&self) -> EnvironmentFile {
        let (s_n, a_n) = (self.num_states, self.num_actions);
        let any_base = self.base_reward.iter().any(|&b| b != 0.0);
        EnvironmentFile {
            schema_version: 1,
            horizon: self.horizon,
            discount: self.discount,
            initial_dist: self.initial_dist.clone(),
            transitions: (0..s_n)
                .map(|s| (0..a_n).map(|a| self.transition_row(s, a).to_vec()).collect())
                .collect(),
            features: (0..s_n)
                .map(|s| (0..a_n).map(|a| self.feature(s, a).to_vec()).collect())
                .collect(),
            base_reward: any_base.then(|| {
                (0..s_n)
                    .map(|s| (0..a_n).map(|a| self.base_reward[s * a_n + a]).collect())
                    .collect()
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        let s_n = self.num_states;
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Validation(format!(
                "discount: must lie in (0, 1], got {}",
                self.discount
            )));
        }
        if self.initial_dist.len() != s_n {
            return Err(Error::Validation(format!(
                "initial_dist: expected {s_n} entries, got {}",
                self.initial_dist.len()
            )));
        }
        check_distribution(&self.initial_dist, "initial_dist")?;
        for s in 0..s_n {
            for a in 0..self.num_actions {
                check_distribution(self.transition_row(s, a), &format!("transitions[{s}][{a}]"))?;
                if let Some(v) = self.feature(s, a).iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::Validation(format!(
                        "features[{s}][{a}]: entry {v} outside [0, 1]"
                    )));
                }
            }
        }
        if self.base_reward.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("base_reward: non-finite entry".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: EnvironmentFile = serde_json::from_str(&text)?;
        DynamicEnvironment::from_file_repr(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_vec_pretty(&self.to_file_repr())?;
        s.push(b'\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Random instance: Dirichlet(1) transition rows and initial distribution,
    /// uniform [0, 1] features, zero base reward.
    pub fn random(spec: &RandomEnvSpec, rng: &mut impl Rng) -> Self {
        let (s_n, a_n, d) = (spec.num_states, spec.num_actions, spec.feature_dim);
        let mut transitions = Vec::with_capacity(s_n * a_n * s_n);
        for _ in 0..s_n * a_n {
            transitions.extend(dirichlet_ones(s_n, rng));
        }
        let features = (0..s_n * a_n * d).map(|_| rng.random::<f64>()).collect();
        DynamicEnvironment {
            num_states: s_n,
            num_actions: a_n,
            feature_dim: d,
            horizon: spec.horizon,
            discount: spec.discount,
            initial_dist: dirichlet_ones(s_n, rng),
            transitions,
            features,
            base_reward: vec![0.0; s_n * a_n],
        }
    }

    /// Velocity-tracking chain: state `i` is speed `i / (levels - 1)`, actions
    /// brake, coast and accelerate move one level (clamped), landing one level
    /// off either way with probability `slip / 2` each. The single feature is
    /// the current speed `v` and the base reward is `-v² / 2`, so task `θ`
    /// earns `θv - v²/2`, which peaks at speed `θ`. Episodes start at rest.
    pub fn velocity_tracking(levels: usize, horizon: usize, discount: f64, slip: f64) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Validation("levels must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&slip) {
            return Err(Error::Validation(format!("slip must lie in [0, 1], got {slip}")));
        }
        let speed = |i: usize| i as f64 / (levels - 1) as f64;
        let clamp = |i: isize| i.clamp(0, levels as isize - 1) as usize;
        let mut transitions = vec![0.0; levels * 3 * levels];
        for s in 0..levels {
            for a in 0..3 {
                let target = s as isize + a as isize - 1;
                let row = &mut transitions[(s * 3 + a) * levels..(s * 3 + a + 1) * levels];
                row[clamp(target)] += 1.0 - slip;
                row[clamp(target - 1)] += slip / 2.0;
                row[clamp(target + 1)] += slip / 2.0;
            }
        }
        let mut initial_dist = vec![0.0; levels];
        initial_dist[0] = 1.0;
        let env = DynamicEnvironment {
            num_states: levels,
            num_actions: 3,
            feature_dim: 1,
            horizon,
            discount,
            initial_dist,
            transitions,
            features: (0..levels * 3).map(|i| speed(i / 3)).collect(),
            base_reward: (0..levels * 3).map(|i| -speed(i / 3).powi(2) / 2.0).collect(),
        };
        env.validate()?;
        Ok(env)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        &self.transitions[start..start + n]
    }

    pub fn feature(&self, s: usize, a: usize) -> &[f64] {
        let d = self.feature_dim;
        let start = (s * self.num_actions + a) * d;
        &self.features[start..start + d]
    }

    pub fn base_reward(&self, s: usize, a: usize) -> f64 {
        self.base_reward[s * self.num_actions + a]
    }

    /// Same dynamics and features with a new horizon.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    /// Sets the task-independent reward offset `b[s][a]`.
    pub fn with_base_reward(mut self, base: Vec<Vec<f64>>) -> Result<Self> {
        if base.len() != self.num_states || base.iter().any(|r| r.len() != self.num_actions) {
            return Err(Error::Validation(format!(
                "base_reward: expected {}x{}",
                self.num_states, self.num_actions
            )));
        }
        self.base_reward = base.into_iter().flatten().collect();
        self.validate()?;
        Ok(self)
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Validation(format!("{what}: invalid probability {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Validation(format!(
            "{what}: probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn dirichlet_ones(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Shape of a random environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomEnvSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub feature_dim: usize,
    pub horizon: usize,
    pub discount: f64,
}

/// A task over a shared environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpTask {
    pub theta: TaskParams,
}

impl MdpTask {
    pub fn new(theta: TaskParams) -> Self {
        MdpTask { theta }
    }

    pub fn reward(&self, env: &DynamicEnvironment, s: usize, a: usize) -> f64 {
        let phi = env.feature(s, a);
        self.theta
            .as_slice()
            .iter()
            .zip(phi)
            .map(|(t, f)| t * f)
            .sum::<f64>()
            + env.base_reward(s, a)
    }

    fn check(&self, env: &DynamicEnvironment) -> Result<()> {
        if self.theta.dim() != env.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.feature_dim(),
                found: self.theta.dim(),
            });
        }
        Ok(())
    }
}

/// Deterministic time-indexed policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    /// `actions[t * S + s]` for `t = 0..=h`.
    actions: Vec<usize>,
    /// Planning-time values `V_t(s)`, same layout; empty for hand-built policies.
    #[serde(default)]
    values: Vec<f64>,
}

impl Policy {
    /// Wraps an action table laid out as `[t][s]`.
    pub fn from_actions(env: &DynamicEnvironment, actions: Vec<Vec<usize>>) -> Result<Self> {
        if actions.len() != env.horizon() + 1 {
            return Err(Error::Validation(format!(
                "policy needs {} timesteps, got {}",
                env.horizon() + 1,
                actions.len()
            )));
        }
        let mut flat = Vec::with_capacity(actions.len() * env.num_states());
        for (t, row) in actions.into_iter().enumerate() {
            if row.len() != env.num_states() {
                return Err(Error::Validation(format!("policy timestep {t}: wrong state count")));
            }
            if let Some(a) = row.iter().find(|&&a| a >= env.num_actions()) {
                return Err(Error::Validation(format!("policy timestep {t}: action {a} out of range")));
            }
            flat.extend(row);
        }
        Ok(Policy {
            horizon: env.horizon(),
            num_states: env.num_states(),
            actions: flat,
            values: Vec::new(),
        })
    }

    pub fn action(&self, t: usize, s: usize) -> usize {
        self.actions[t * self.num_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `V_t(s)` recorded at planning time, if any.
    pub fn planned_value(&self, t: usize, s: usize) -> Option<f64> {
        self.values.get(t * self.num_states + s).copied()
    }

    /// Expected planning-time value under ρ.
    pub fn planned_start_value(&self, env: &DynamicEnvironment) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        Some(
            env.initial_dist()
                .iter()
                .enumerate()
                .map(|(s, p)| p * self.values[s])
                .sum(),
        )
    }

    fn check(&self, env: &DynamicEnvironment) -> Result<()> {
        if self.horizon != env.horizon() || self.num_states != env.num_states() {
            return Err(Error::Validation(format!(
                "policy shaped for h={}, |S|={} but environment has h={}, |S|={}",
                self.horizon,
                self.num_states,
                env.horizon(),
                env.num_states()
            )));
        }
        if self.actions.iter().any(|&a| a >= env.num_actions()) {
            return Err(Error::Validation("policy action out of range".into()));
        }
        Ok(())
    }

    /// Largest violation of the Bellman backup the stored values came from.
    pub fn bellman_residual(&self, env: &DynamicEnvironment, task: &MdpTask) -> Result<f64> {
        self.check(env)?;
        if self.values.is_empty() {
            return Err(Error::Precondition("policy carries no planning values".into()));
        }
        let s_n = env.num_states();
        let gamma = env.discount();
        let mut worst: f64 = 0.0;
        for t in 0..=env.horizon() {
            for s in 0..s_n {
                let a = self.action(t, s);
                let next = if t == env.horizon() {
                    0.0
                } else {
                    env.transition_row(s, a)
                        .iter()
                        .enumerate()
                        .map(|(s2, p)| p * self.values[(t + 1) * s_n + s2])
                        .sum()
                };
                let target = task.reward(env, s, a) + gamma * next;
                worst = worst.max((self.values[t * s_n + s] - target).abs());
            }
        }
        Ok(worst)
    }
}

/// Exact finite-horizon planning by backward induction (ties → lowest action).
pub fn value_iteration(env: &DynamicEnvironment, task: &MdpTask) -> Result<Policy> {
    task.check(env)?;
    let (s_n, a_n, h) = (env.num_states(), env.num_actions(), env.horizon());
    let gamma = env.discount();
    let rewards: Vec<f64> = (0..s_n)
        .flat_map(|s| (0..a_n).map(move |a| (s, a)))
        .map(|(s, a)| task.reward(env, s, a))
        .collect();
    let mut actions = vec![0; (h + 1) * s_n];
    let mut values = vec![0.0; (h + 1) * s_n];
    for t in (0..=h).rev() {
        for s in 0..s_n {
            let mut best = (0, f64::NEG_INFINITY);
            for a in 0..a_n {
                let next = if t == h {
                    0.0
                } else {
                    env.transition_row(s, a)
                        .iter()
                        .enumerate()
                        .map(|(s2, p)| p * values[(t + 1) * s_n + s2])
                        .sum()
                };
                let q = rewards[s * a_n + a] + gamma * next;
                if q > best.1 {
                    best = (a, q);
                }
            }
            actions[t * s_n + s] = best.0;
            values[t * s_n + s] = best.1;
        }
    }
    Ok(Policy {
        horizon: h,
        num_states: s_n,
        actions,
        values,
    })
}

/// Exact value `E[Σ_t γ^t r(s_t, a_t)]` by forward propagation of the state
/// distribution from ρ.
pub fn policy_value(env: &DynamicEnvironment, task: &MdpTask, policy: &Policy) -> Result<f64> {
    task.check(env)?;
    policy.check(env)?;
    let s_n = env.num_states();
    let mut dist = env.initial_dist().to_vec();
    let mut next = vec![0.0; s_n];
    let mut total = 0.0;
    let mut disc = 1.0;
    for t in 0..=env.horizon() {
        let step: f64 = dist
            .iter()
            .enumerate()
            .map(|(s, p)| p * task.reward(env, s, policy.action(t, s)))
            .sum();
        total += disc * step;
        if t < env.horizon() {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (s, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (s2, q) in env.transition_row(s, policy.action(t, s)).iter().enumerate() {
                    next[s2] += p * q;
                }
            }
            std::mem::swap(&mut dist, &mut next);
            disc *= env.discount();
        }
    }
    Ok(total)
}

fn sample_index(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &q) in p.iter().enumerate() {
        if q > 0.0 {
            acc += q;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples one episode with a `ChaCha8Rng` seeded from `seed` and returns its
/// discounted return.
pub fn rollout(env: &DynamicEnvironment, task: &MdpTask, policy: &Policy, seed: u64) -> Result<f64> {
    task.check(env)?;
    policy.check(env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rollout_unchecked(env, task, policy, &mut rng))
}

pub(crate) fn rollout_unchecked(
    env: &DynamicEnvironment,
    task: &MdpTask,
    policy: &Policy,
    rng: &mut impl Rng,
) -> f64 {
    let mut s = sample_index(env.initial_dist(), rng);
    let mut total = 0.0;
    let mut disc = 1.0;
    for t in 0..=env.horizon() {
        let a = policy.action(t, s);
        total += disc * task.reward(env, s, a);
        if t < env.horizon() {
            s = sample_index(env.transition_row(s, a), rng);
            disc *= env.discount();
        }
    }
    total
}

/// `L = max_{s,a} ‖φ(s,a)‖₁`, the ℓ∞-Lipschitz constant of `θ ↦ r_θ`.
pub fn lipschitz_constant(env: &DynamicEnvironment) -> f64 {
    (0..env.num_states())
        .flat_map(|s| (0..env.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| env.feature(s, a).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Value loss allowed when acting with the optimal policy of a task whose
/// parameters are within `epsilon` (ℓ∞) of the true one:
/// `2L(1−γ^{h+1})/(1−γ)·ε` for γ < 1 and `2Lhε` for γ = 1.
pub fn simulation_bound(lipschitz: f64, discount: f64, horizon: usize, epsilon: f64) -> f64 {
    if discount < 1.0 {
        2.0 * lipschitz * (1.0 - discount.powi(horizon as i32 + 1)) / (1.0 - discount) * epsilon
    } else {
        2.0 * lipschitz * horizon as f64 * epsilon
    }
}

/// Every deterministic time-indexed policy of a tiny environment.
pub fn all_policies(env: &DynamicEnvironment, budget: u64) -> Result<Vec<Policy>> {
    let slots = (env.horizon() + 1) * env.num_states();
    let count = (env.num_actions() as u64)
        .checked_pow(slots as u32)
        .filter(|&c| c <= budget)
        .ok_or(Error::Capacity {
            what: "policy enumeration",
            budget,
            hint: "enumeration is meant for |A|^((h+1)|S|) in the thousands",
        })?;
    let a_n = env.num_actions();
    Ok((0..count)
        .map(|mut code| {
            let actions = (0..slots)
                .map(|_| {
                    let a = (code % a_n as u64) as usize;
                    code /= a_n as u64;
                    a
                })
                .collect();
            Policy {
                horizon: env.horizon(),
                num_states: env.num_states(),
                actions,
                values: Vec::new(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_env(horizon: usize, discount: f64) -> DynamicEnvironment {
        DynamicEnvironment::from_file_repr(EnvironmentFile {
            schema_version: 1,
            horizon,
            discount,
            initial_dist: vec![0.5, 0.5],
            transitions: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.3, 0.7], vec![0.6, 0.4]],
            ],
            features: vec![
                vec![vec![1.0, 0.0], vec![0.0, 0.5]],
                vec![vec![0.2, 0.2], vec![0.9, 1.0]],
            ],
            base_reward: None,
        })
        .unwrap()
    }

    fn task(v: &[f64]) -> MdpTask {
        MdpTask::new(TaskParams::new(v.to_vec()).unwrap())
    }

    #[test]
    fn one_step_horizon_is_greedy() {
        let env = two_state_env(0, 0.9);
        let tk = task(&[1.0, 1.0]);
        let pi = value_iteration(&env, &tk).unwrap();
        assert_eq!(pi.action(0, 0), 0);
        assert_eq!(pi.action(0, 1), 1);
        let v = policy_value(&env, &tk, &pi).unwrap();
        assert!((v - (0.5 * 1.0 + 0.5 * 1.9)).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_prefers_action_zero() {
        let env = two_state_env(3, 0.9);
        let tk = task(&[0.0, 0.0]);
        let pi = value_iteration(&env, &tk).unwrap();
        assert!((0..=3).all(|t| pi.action(t, 0) == 0 && pi.action(t, 1) == 0));
        assert_eq!(policy_value(&env, &tk, &pi).unwrap(), 0.0);
    }

    #[test]
    fn planner_and_evaluator_agree_and_bellman_holds() {
        let env = two_state_env(6, 0.8);
        let tk = task(&[0.3, -1.2]);
        let pi = value_iteration(&env, &tk).unwrap();
        let exact = policy_value(&env, &tk, &pi).unwrap();
        assert!((exact - pi.planned_start_value(&env).unwrap()).abs() < 1e-12);
        assert!(pi.bellman_residual(&env, &tk).unwrap() < 1e-12);
    }

    #[test]
    fn lipschitz_examples() {
        let env = two_state_env(1, 1.0);
        assert!((lipschitz_constant(&env) - 1.9).abs() < 1e-12);
        let zero = DynamicEnvironment::from_file_repr(EnvironmentFile {
            schema_version: 1,
            horizon: 0,
            discount: 1.0,
            initial_dist: vec![1.0],
            transitions: vec![vec![vec![1.0]]],
            features: vec![vec![vec![0.0, 0.0]]],
            base_reward: None,
        })
        .unwrap();
        assert_eq!(lipschitz_constant(&zero), 0.0);
        let ones = DynamicEnvironment::from_file_repr(EnvironmentFile {
            features: vec![vec![vec![1.0; 4]]],
            ..zero.to_file_repr()
        })
        .unwrap();
        assert_eq!(lipschitz_constant(&ones), 4.0);
    }

    #[test]
    fn deterministic_rollout_matches_exact_value() {
        let env = two_state_env(5, 0.95)
            .to_file_repr();
        let env = DynamicEnvironment::from_file_repr(EnvironmentFile {
            initial_dist: vec![0.0, 1.0],
            transitions: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            ..env
        })
        .unwrap();
        let tk = task(&[0.7, 0.4]);
        let pi = value_iteration(&env, &tk).unwrap();
        let exact = policy_value(&env, &tk, &pi).unwrap();
        assert_eq!(rollout(&env, &tk, &pi, 17).unwrap(), exact);
    }

    #[test]
    fn rollout_is_seed_deterministic() {
        let env = two_state_env(8, 0.9);
        let tk = task(&[0.5, 0.5]);
        let pi = value_iteration(&env, &tk).unwrap();
        assert_eq!(rollout(&env, &tk, &pi, 42).unwrap(), rollout(&env, &tk, &pi, 42).unwrap());
    }

    #[test]
    fn validation_errors() {
        let good = two_state_env(2, 0.9).to_file_repr();
        let bad_row = EnvironmentFile {
            transitions: vec![
                vec![vec![0.9, 0.0], vec![0.0, 1.0]],
                vec![vec![0.3, 0.7], vec![0.6, 0.4]],
            ],
            ..good.clone()
        };
        assert!(DynamicEnvironment::from_file_repr(bad_row).is_err());
        let bad_feature = EnvironmentFile {
            features: vec![
                vec![vec![1.5, 0.0], vec![0.0, 0.5]],
                vec![vec![0.2, 0.2], vec![0.9, 1.0]],
            ],
            ..good.clone()
        };
        assert!(DynamicEnvironment::from_file_repr(bad_feature).is_err());
        let bad_gamma = EnvironmentFile { discount: 0.0, ..good };
        assert!(DynamicEnvironment::from_file_repr(bad_gamma).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let env = two_state_env(2, 0.9);
        let other = two_state_env(3, 0.9);
        let tk = task(&[1.0, 0.0]);
        let pi = value_iteration(&other, &tk).unwrap();
        assert!(policy_value(&env, &tk, &pi).is_err());
        assert!(value_iteration(&env, &task(&[1.0])).is_err());
    }

    #[test]
    fn undiscounted_bound_branch() {
        assert_eq!(simulation_bound(2.0, 1.0, 5, 0.1), 2.0 * 2.0 * 5.0 * 0.1);
        let b = simulation_bound(1.0, 0.5, 1, 1.0);
        assert!((b - 2.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn env_json_round_trip() {
        let env = two_state_env(4, 0.9);
        let json = serde_json::to_string(&env.to_file_repr()).unwrap();
        let back = DynamicEnvironment::from_file_repr(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn velocity_tracking_settles_at_target_speed() {
        let env = DynamicEnvironment::velocity_tracking(11, 30, 1.0, 0.0).unwrap();
        let pi = value_iteration(&env, &task(&[0.3])).unwrap();
        // deterministic: accelerate three times, then coast at level 3
        let mut s = 0;
        for t in 0..10 {
            let a = pi.action(t, s);
            s = (s as isize + a as isize - 1).clamp(0, 10) as usize;
        }
        assert_eq!(s, 3);
        assert!(DynamicEnvironment::velocity_tracking(1, 5, 0.9, 0.1).is_err());
        assert!(DynamicEnvironment::velocity_tracking(5, 5, 0.9, 1.5).is_err());
    }
}
