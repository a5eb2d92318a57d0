//! Policy committees: one planned policy per cluster, exact committee values,
//! value-space cover reports and few-shot member selection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::CoverSolution;
use crate::error::{Error, Result};
use crate::mdp::{policy_value, rollout_unchecked, value_iteration, DynamicEnvironment, MdpTask, Policy};
use crate::task_space::{sample_tasks, GmmSpec, TaskParams, TaskSet};

/// How a member's training task is formed from its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Plan for the cluster representative θ_k.
    Representative,
    /// Maximize the summed reward of the cluster's tasks. With rewards linear
    /// in θ this is planning for the mean θ of the members.
    ClusterSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeMember {
    pub center: TaskParams,
    /// Parameters the policy was planned for.
    pub training_theta: TaskParams,
    pub cluster_tasks: Vec<String>,
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCommittee {
    pub members: Vec<CommitteeMember>,
}

impl PolicyCommittee {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.members.iter().map(|m| &m.policy)
    }

    /// A committee of explicit policies with no cluster bookkeeping.
    pub fn from_policies(policies: Vec<(TaskParams, Policy)>) -> Self {
        PolicyCommittee {
            members: policies
                .into_iter()
                .map(|(theta, policy)| CommitteeMember {
                    center: theta.clone(),
                    training_theta: theta,
                    cluster_tasks: Vec::new(),
                    policy,
                })
                .collect(),
        }
    }
}

fn mean_theta(tasks: &TaskSet, members: &[usize]) -> TaskParams {
    let d = tasks.dim();
    let mut m = vec![0.0; d];
    for &i in members {
        for (acc, x) in m.iter_mut().zip(tasks.point(i)) {
            *acc += x;
        }
    }
    let n = members.len() as f64;
    TaskParams::new(m.into_iter().map(|v| v / n).collect()).expect("finite mean")
}

/// Plans one policy per cover center. Members are independent and planned in
/// parallel.
pub fn train_committee(
    env: &DynamicEnvironment,
    training_tasks: &TaskSet,
    cover: &CoverSolution,
    mode: TrainMode,
) -> Result<PolicyCommittee> {
    if cover.assignment.len() != training_tasks.len() {
        return Err(Error::Validation(format!(
            "cover assigns {} tasks but the task set has {}",
            cover.assignment.len(),
            training_tasks.len()
        )));
    }
    if let Some(a) = cover.assignment.iter().flatten().find(|&&a| a >= cover.k()) {
        return Err(Error::Validation(format!(
            "cover assigns a task to center {a} but has only {} centers",
            cover.k()
        )));
    }
    if cover.centers.is_empty() {
        return Err(Error::Validation("cover has no centers".into()));
    }
    let members: Vec<Result<CommitteeMember>> = (0..cover.k())
        .into_par_iter()
        .map(|k| {
            let idx = cover.members(k);
            let center = cover.centers[k].clone();
            let training_theta = match mode {
                TrainMode::ClusterSum if !idx.is_empty() => mean_theta(training_tasks, &idx),
                _ => center.clone(),
            };
            let policy = value_iteration(env, &MdpTask::new(training_theta.clone()))?;
            Ok(CommitteeMember {
                center,
                training_theta,
                cluster_tasks: idx.iter().map(|&i| training_tasks.ids()[i].clone()).collect(),
                policy,
            })
        })
        .collect();
    Ok(PolicyCommittee {
        members: members.into_iter().collect::<Result<_>>()?,
    })
}

/// Exact `max_k V^{π_k}` and the member attaining it (ties → lowest index).
pub fn committee_value(
    committee: &PolicyCommittee,
    env: &DynamicEnvironment,
    task: &MdpTask,
) -> Result<(f64, usize)> {
    if committee.members.is_empty() {
        return Err(Error::Precondition("committee is empty".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, m) in committee.members.iter().enumerate() {
        let v = policy_value(env, task, &m.policy)?;
        if v > best.0 {
            best = (v, k);
        }
    }
    Ok(best)
}

/// Exact optimal value, computed with the same evaluator as committee values.
pub fn optimal_value(env: &DynamicEnvironment, task: &MdpTask) -> Result<f64> {
    let pi = value_iteration(env, task)?;
    policy_value(env, task, &pi)
}

/// Tasks to evaluate a committee on.
#[derive(Debug, Clone, Copy)]
pub enum TaskSource<'a> {
    Listed(&'a TaskSet),
    Sampled { gmm: &'a GmmSpec, m: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvaluation {
    pub task_id: String,
    pub v_star: f64,
    pub v_committee: f64,
    pub best_member: usize,
    pub covered: bool,
}

/// Value-space cover statistics of a committee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub epsilon_value: f64,
    /// Fraction of tasks with `V^Π < V* − ε`.
    pub delta_hat: f64,
    pub mean_v_star: f64,
    pub mean_v_committee: f64,
    pub per_task: Vec<TaskEvaluation>,
}

impl CoverReport {
    /// Per-task CSV: `task_id,v_star,v_committee,best_member,covered`.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        writeln!(out, "task_id,v_star,v_committee,best_member,covered").expect("vec write");
        for t in &self.per_task {
            writeln!(
                out,
                "{},{:?},{:?},{},{}",
                t.task_id, t.v_star, t.v_committee, t.best_member, t.covered
            )
            .expect("vec write");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Computes `V*` and `V^Π` exactly for every task and the miss fraction at
/// `epsilon_value`.
pub fn evaluate_cover(
    committee: &PolicyCommittee,
    env: &DynamicEnvironment,
    tasks: TaskSource<'_>,
    epsilon_value: f64,
) -> Result<CoverReport> {
    if !(epsilon_value >= 0.0) {
        return Err(Error::Precondition(format!(
            "epsilon_value must be >= 0, got {epsilon_value}"
        )));
    }
    let sampled;
    let tasks = match tasks {
        TaskSource::Listed(t) => t,
        TaskSource::Sampled { gmm, m, seed } => {
            sampled = sample_tasks(gmm, m, seed)?;
            &sampled
        }
    };
    let per_task: Vec<TaskEvaluation> = tasks
        .tasks()
        .par_iter()
        .zip(tasks.ids().par_iter())
        .map(|(theta, id)| {
            let task = MdpTask::new(theta.clone());
            let v_star = optimal_value(env, &task)?;
            let (v_committee, best_member) = committee_value(committee, env, &task)?;
            Ok(TaskEvaluation {
                task_id: id.clone(),
                v_star,
                v_committee,
                best_member,
                covered: v_committee >= v_star - epsilon_value,
            })
        })
        .collect::<Result<_>>()?;
    let n = per_task.len().max(1) as f64;
    let misses = per_task.iter().filter(|t| !t.covered).count();
    Ok(CoverReport {
        epsilon_value,
        delta_hat: misses as f64 / n,
        mean_v_star: per_task.iter().map(|t| t.v_star).sum::<f64>() / n,
        mean_v_committee: per_task.iter().map(|t| t.v_committee).sum::<f64>() / n,
        per_task,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    /// Episodes per committee member, p.
    pub episodes_per_policy: u64,
    /// Bias-span bound H, in reward units.
    pub span_bound: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    /// Reuse the same episode seeds for every member.
    #[serde(default)]
    pub common_random_numbers: bool,
}

impl FewShotConfig {
    /// Picks p from [`required_episode_count`].
    pub fn from_guarantee(horizon: usize, span_bound: f64, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        Ok(FewShotConfig {
            episodes_per_policy: required_episode_count(horizon, span_bound, alpha, beta)?,
            span_bound,
            alpha,
            beta,
            seed,
            common_random_numbers: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotOutcome {
    pub chosen: usize,
    pub empirical_means: Vec<f64>,
    pub total_episodes: u64,
}

/// Runs `p` seeded episodes per member on the task and picks the best
/// empirical mean return (ties → lowest index). Member `m`'s episode `e` uses
/// seed `seed + m·p + e`, or `seed + e` with common random numbers.
pub fn fewshot_select(
    committee: &PolicyCommittee,
    env: &DynamicEnvironment,
    task: &MdpTask,
    cfg: &FewShotConfig,
) -> Result<FewShotOutcome> {
    if committee.members.is_empty() {
        return Err(Error::Precondition("committee is empty".into()));
    }
    let p = cfg.episodes_per_policy;
    if p == 0 {
        return Err(Error::Precondition("episodes_per_policy must be >= 1".into()));
    }
    for m in &committee.members {
        // shape checks once, outside the hot loop
        policy_value(env, task, &m.policy)?;
    }
    let means: Vec<f64> = committee
        .members
        .par_iter()
        .enumerate()
        .map(|(m, member)| {
            let base = if cfg.common_random_numbers {
                cfg.seed
            } else {
                cfg.seed.wrapping_add((m as u64).wrapping_mul(p))
            };
            let total: f64 = (0..p)
                .map(|e| {
                    let mut rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(e));
                    rollout_unchecked(env, task, &member.policy, &mut rng)
                })
                .sum();
            total / p as f64
        })
        .collect();
    let mut chosen = 0;
    for (m, &v) in means.iter().enumerate() {
        if v > means[chosen] {
            chosen = m;
        }
    }
    Ok(FewShotOutcome {
        chosen,
        empirical_means: means,
        total_episodes: p * committee.k() as u64,
    })
}

/// Episodes per member for the few-shot guarantee:
/// `ceil(32 h (H+1)² ln(4/α) / (β − 2H)²)`, at least 1.
pub fn required_episode_count(horizon: usize, span_bound: f64, alpha: f64, beta: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(span_bound >= 0.0 && span_bound.is_finite()) {
        return Err(Error::Precondition(format!("span bound H must be >= 0, got {span_bound}")));
    }
    if !(beta > 2.0 * span_bound) {
        return Err(Error::Precondition(format!(
            "the episode bound requires beta > 2H (beta = {beta}, H = {span_bound})"
        )));
    }
    Ok(raw_episode_count(horizon, span_bound, alpha, beta).ceil().max(1.0) as u64)
}

/// The un-rounded episode formula.
pub fn raw_episode_count(horizon: usize, span_bound: f64, alpha: f64, beta: f64) -> f64 {
    let gap = beta - 2.0 * span_bound;
    32.0 * horizon as f64 * (span_bound + 1.0).powi(2) * (4.0 / alpha).ln() / (gap * gap)
}

/// Crude span bound `h · (max r − min r)` over all state-action pairs.
pub fn span_bound_estimate(env: &DynamicEnvironment, task: &MdpTask) -> f64 {
    let rewards = (0..env.num_states())
        .flat_map(|s| (0..env.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| task.reward(env, s, a));
    let (lo, hi) = rewards.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    env.horizon() as f64 * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::coverage_stats;
    use crate::mdp::EnvironmentFile;

    fn env() -> DynamicEnvironment {
        DynamicEnvironment::from_file_repr(EnvironmentFile {
            schema_version: 1,
            horizon: 3,
            discount: 0.9,
            initial_dist: vec![1.0, 0.0],
            transitions: vec![
                vec![vec![0.8, 0.2], vec![0.1, 0.9]],
                vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            ],
            features: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.5, 0.5], vec![0.0, 0.3]],
            ],
            base_reward: None,
        })
        .unwrap()
    }

    fn tp(v: &[f64]) -> TaskParams {
        TaskParams::new(v.to_vec()).unwrap()
    }

    #[test]
    fn episode_count_values() {
        assert_eq!(required_episode_count(10, 0.0, 0.05, 0.5).unwrap(), 5609);
        let ratio = raw_episode_count(10, 0.0, 0.05, 1.0) / raw_episode_count(10, 0.0, 0.05, 0.5);
        assert!((ratio - 0.25).abs() < 1e-15);
        assert!(required_episode_count(10, 0.25, 0.05, 0.5).is_err());
        assert!(required_episode_count(10, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn single_task_committee_is_optimal() {
        let env = env();
        let ts = TaskSet::from_rows(vec![vec![0.2, 0.9]]).unwrap();
        let cover = coverage_stats(&ts, ts.tasks(), 0.0).unwrap();
        let c = train_committee(&env, &ts, &cover, TrainMode::Representative).unwrap();
        let task = MdpTask::new(ts.tasks()[0].clone());
        let (v, k) = committee_value(&c, &env, &task).unwrap();
        assert_eq!(k, 0);
        assert_eq!(v, optimal_value(&env, &task).unwrap());
    }

    #[test]
    fn cluster_sum_with_identical_members_matches_representative() {
        let env = env();
        let ts = TaskSet::from_rows(vec![vec![0.4, 0.1], vec![0.4, 0.1]]).unwrap();
        let cover = coverage_stats(&ts, &[tp(&[0.4, 0.1])], 0.0).unwrap();
        let a = train_committee(&env, &ts, &cover, TrainMode::Representative).unwrap();
        let b = train_committee(&env, &ts, &cover, TrainMode::ClusterSum).unwrap();
        assert_eq!(a.members[0].policy, b.members[0].policy);
        assert_eq!(a.members[0].cluster_tasks, vec!["0", "1"]);
    }

    #[test]
    fn empty_cluster_trains_on_center() {
        let env = env();
        let ts = TaskSet::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        let cover = coverage_stats(&ts, &[tp(&[0.0, 0.0]), tp(&[5.0, 5.0])], 0.1).unwrap();
        let c = train_committee(&env, &ts, &cover, TrainMode::ClusterSum).unwrap();
        assert_eq!(c.members[1].training_theta, tp(&[5.0, 5.0]));
        assert!(c.members[1].cluster_tasks.is_empty());
    }

    #[test]
    fn mismatched_cover_rejected() {
        let env = env();
        let ts = TaskSet::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let other = TaskSet::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        let cover = coverage_stats(&other, other.tasks(), 0.0).unwrap();
        assert!(train_committee(&env, &ts, &cover, TrainMode::Representative).is_err());
    }

    #[test]
    fn empty_committee_errors() {
        let c = PolicyCommittee { members: vec![] };
        assert!(committee_value(&c, &env(), &MdpTask::new(tp(&[1.0, 0.0]))).is_err());
    }

    #[test]
    fn report_thresholds() {
        let env = env();
        let ts = TaskSet::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let per_task = coverage_stats(&ts, ts.tasks(), 0.0).unwrap();
        let c = train_committee(&env, &ts, &per_task, TrainMode::Representative).unwrap();
        let r = evaluate_cover(&c, &env, TaskSource::Listed(&ts), 0.0).unwrap();
        assert_eq!(r.delta_hat, 0.0);

        let one = coverage_stats(&ts, &[tp(&[1.0, 0.0])], 0.0).unwrap();
        let c1 = train_committee(&env, &ts, &one, TrainMode::Representative).unwrap();
        let big = r.per_task.iter().map(|t| t.v_star.abs()).fold(0.0, f64::max) * 3.0;
        let r1 = evaluate_cover(&c1, &env, TaskSource::Listed(&ts), big).unwrap();
        assert_eq!(r1.delta_hat, 0.0);

        let csv = String::from_utf8(r.to_csv_bytes()).unwrap();
        assert!(csv.starts_with("task_id,v_star,v_committee,best_member,covered\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn single_member_fewshot_picks_zero() {
        let env = env();
        let task = MdpTask::new(tp(&[0.3, 0.3]));
        let pi = value_iteration(&env, &task).unwrap();
        let c = PolicyCommittee::from_policies(vec![(tp(&[0.3, 0.3]), pi)]);
        let cfg = FewShotConfig {
            episodes_per_policy: 3,
            span_bound: 0.0,
            alpha: 0.1,
            beta: 0.5,
            seed: 9,
            common_random_numbers: false,
        };
        let out = fewshot_select(&c, &env, &task, &cfg).unwrap();
        assert_eq!((out.chosen, out.total_episodes), (0, 3));
    }

    #[test]
    fn span_estimate_scales_with_horizon() {
        let env = env();
        let task = MdpTask::new(tp(&[1.0, 0.0]));
        // rewards range over [0, 1]
        assert_eq!(span_bound_estimate(&env, &task), 3.0);
    }
}
