// Refine a greedy cover by subgradient descent on the soft miss objective.

use policy_committee::grad::{optimize_cover, GradOutcome, Init, OptimizerConfig};
use policy_committee::TaskSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<GradOutcome, Box<dyn std::error::Error>> {
    // three planted clusters in 4-D, every point within ε/2 of its center
    let epsilon = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers = [[0.0, 0.0, 0.0, 0.0], [3.0, 1.0, -2.0, 0.5], [-2.0, 4.0, 1.0, 2.0]];
    let mut rows = Vec::new();
    for c in &centers {
        for _ in 0..20 {
            rows.push(c.iter().map(|x| x + rng.random_range(-0.25..=0.25)).collect());
        }
    }
    let tasks = TaskSet::from_rows(rows)?;

    let cfg = OptimizerConfig { init: Init::Gea, seed: 3, ..Default::default() };
    let out = optimize_cover(&tasks, epsilon, 3, &cfg)?;
    println!(
        "{} iterations: soft objective {:.3e}, covered {}/{}",
        out.iterations,
        out.soft_objective,
        out.solution.covered_count,
        tasks.len()
    );
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
