// Pick a committee member for a new task from a few episodes per member.

use policy_committee::committee::{committee_value, fewshot_select, train_committee, FewShotConfig, TrainMode};
use policy_committee::cover::gia;
use policy_committee::{DynamicEnvironment, MdpTask, TaskParams, TaskSet};

pub fn run_example() -> Result<(usize, usize), Box<dyn std::error::Error>> {
    let env = DynamicEnvironment::velocity_tracking(11, 10, 0.95, 0.2)?;
    let train = TaskSet::from_rows(vec![vec![0.2], vec![0.21], vec![0.6], vec![0.62], vec![0.9]])?;
    let cover = gia(&train, 0.02, 3)?;
    let committee = train_committee(&env, &train, &cover, TrainMode::ClusterSum)?;

    let task = MdpTask::new(TaskParams::new(vec![0.58])?);
    let cfg = FewShotConfig::from_guarantee(env.horizon(), 0.0, 0.1, 0.5, 7)?;
    let pick = fewshot_select(&committee, &env, &task, &cfg)?;
    let (best_value, best) = committee_value(&committee, &env, &task)?;
    println!(
        "{} episodes per member; empirical means {:?}",
        cfg.episodes_per_policy, pick.empirical_means
    );
    println!("picked member {}, exact best is {best} (value {best_value:.4})", pick.chosen);
    Ok((pick.chosen, best))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
