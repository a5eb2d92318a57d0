// Nearby tasks have nearly optimal policies for each other: compare the
// value lost by swapping optimal policies with the simulation bound.

use policy_committee::mdp::{lipschitz_constant, policy_value, simulation_bound, value_iteration, RandomEnvSpec};
use policy_committee::{DynamicEnvironment, MdpTask, TaskParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<f64, Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = RandomEnvSpec { num_states: 6, num_actions: 3, feature_dim: 2, horizon: 15, discount: 0.9 };
    let env = DynamicEnvironment::random(&spec, &mut rng);
    let epsilon = 0.05;
    let bound = simulation_bound(lipschitz_constant(&env), env.discount(), env.horizon(), epsilon);

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-epsilon..=epsilon)).collect();
        let (ta, tb) = (MdpTask::new(TaskParams::new(a)?), MdpTask::new(TaskParams::new(b)?));
        let (pa, pb) = (value_iteration(&env, &ta)?, value_iteration(&env, &tb)?);
        let loss = policy_value(&env, &ta, &pa)? - policy_value(&env, &ta, &pb)?;
        worst = worst.max(loss);
    }
    println!("largest loss {worst:.5} against bound {bound:.5}");
    Ok(worst / bound)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
