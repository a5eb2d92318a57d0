//! Policy committees for multi-task MDPs.
//!
//! Tasks are identified with parameter vectors. The crate clusters a sample of
//! task parameters into an ℓ∞ parameter cover ([`cover`], [`grad`]), plans one
//! policy per cluster on a tabular multi-task MDP ([`mdp`], [`committee`]) and
//! picks a committee member for an unseen task from a handful of episodes.
//!
//! The [`cli`] module backs the `pacman` binary; everything it does is also
//! reachable through the library API.

pub mod baseline;
pub mod cli;
pub mod committee;
pub mod cover;
pub mod error;
pub mod grad;
pub mod mdp;
pub mod task_space;

pub use committee::{
    committee_value, evaluate_cover, fewshot_select, required_episode_count, train_committee,
    CoverReport, FewShotConfig, FewShotOutcome, PolicyCommittee, TaskSource, TrainMode,
};
pub use cover::{
    coverage_stats, gea, gia, max_1_cover_oracle, max_k_cover_oracle, Algorithm, CoverSolution,
    GiaConfig,
};
pub use error::{Error, Result};
pub use grad::{optimize_cover, relax_gradient, relax_objective, OptimizerConfig, RelaxState};
pub use mdp::{
    lipschitz_constant, policy_value, rollout, simulation_bound, value_iteration,
    DynamicEnvironment, MdpTask, Policy,
};
pub use task_space::{
    linf_distance, load_task_set, required_sample_size, sample_tasks, GmmSpec, TaskFormat,
    TaskParams, TaskSet,
};
