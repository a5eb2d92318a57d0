// Velocity-tracking tasks drawn from a five-mode mixture: cluster, plan one
// policy per cluster and compare committees of size 1 and 3 against a
// k-means committee on held-out tasks.

use policy_committee::baseline::kmeans_cover;
use policy_committee::committee::{evaluate_cover, train_committee, CoverReport, TaskSource, TrainMode};
use policy_committee::cover::gia;
use policy_committee::mdp::{lipschitz_constant, simulation_bound, DynamicEnvironment};
use policy_committee::task_space::{sample_tasks, GmmComponent, GmmSpec};
use policy_committee::CoverSolution;

pub fn velocity_modes() -> GmmSpec {
    let modes = [(0.30, 0.1), (0.25, 0.3), (0.20, 0.5), (0.15, 0.7), (0.10, 0.9)];
    GmmSpec {
        components: modes
            .iter()
            .map(|&(weight, mean)| GmmComponent {
                weight,
                mean: vec![mean],
                stddev: vec![0.0005],
            })
            .collect(),
    }
}

pub fn run_example() -> Result<Vec<(String, CoverReport)>, Box<dyn std::error::Error>> {
    let env = DynamicEnvironment::velocity_tracking(11, 20, 0.95, 0.2)?;
    let gmm = velocity_modes();
    let epsilon = 0.001;
    let train = sample_tasks(&gmm, 200, 1)?;
    let eval = TaskSource::Sampled { gmm: &gmm, m: 500, seed: 2 };
    let eps_value = simulation_bound(lipschitz_constant(&env), env.discount(), env.horizon(), epsilon);
    println!("value tolerance {eps_value:.4}");

    let mut runs: Vec<(String, CoverSolution)> = Vec::new();
    for k in [1, 3] {
        runs.push((format!("gia K={k}"), gia(&train, epsilon, k)?));
    }
    runs.push(("kmeans K=3".into(), kmeans_cover(&train, epsilon, 3, 0)?));

    let mut out = Vec::new();
    for (name, cover) in runs {
        let committee = train_committee(&env, &train, &cover, TrainMode::Representative)?;
        let report = evaluate_cover(&committee, &env, eval, eps_value)?;
        println!(
            "{name:<11} train miss {:.3}  held-out delta_hat {:.3}  mean value {:.4} (optimal {:.4})",
            cover.miss_rate, report.delta_hat, report.mean_v_committee, report.mean_v_star
        );
        out.push((name, report));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
