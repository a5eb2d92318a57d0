// Greedy parameter covers on a small instance, checked against the exact
// oracles.

use policy_committee::cover::{gea, gia, max_1_cover_oracle, max_k_cover_oracle};
use policy_committee::TaskSet;

pub fn run_example() -> Result<(usize, usize, usize), Box<dyn std::error::Error>> {
    // target velocities of ten tasks
    let rows = [10.0, 11.0, 12.0, 20.0, 21.0, 22.0, 23.0, 30.0, 40.0, 50.0];
    let tasks = TaskSet::from_rows(rows.iter().map(|&v| vec![v]).collect())?;
    let epsilon = 1.0;

    let best_single = max_1_cover_oracle(&tasks, epsilon)?;
    println!("one center covers at most {} tasks", best_single.covered.len());

    let greedy_points = gea(&tasks, epsilon, 2)?;
    let greedy_boxes = gia(&tasks, epsilon, 2)?;
    let exact = max_k_cover_oracle(&tasks, epsilon, 2)?;
    println!("gea  K=2: covered {} (miss {:.2})", greedy_points.covered_count, greedy_points.miss_rate);
    println!("gia  K=2: covered {} (miss {:.2})", greedy_boxes.covered_count, greedy_boxes.miss_rate);
    println!("best K=2: covered {} (miss {:.2})", exact.covered_count, exact.miss_rate);
    for (k, c) in greedy_boxes.centers.iter().enumerate() {
        println!("  center {k}: {:?} -> tasks {:?}", c.as_slice(), greedy_boxes.members(k));
    }
    Ok((greedy_points.covered_count, greedy_boxes.covered_count, exact.covered_count))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
