// Draw a task sample from a Gaussian mixture, sized for a coverage guarantee,
// and write it as CSV.

use policy_committee::task_space::{required_sample_size, sample_tasks, GmmComponent, GmmSpec, TaskFormat};
use policy_committee::{load_task_set, TaskSet};

pub fn run_example() -> Result<TaskSet, Box<dyn std::error::Error>> {
    let gmm = GmmSpec {
        components: vec![
            GmmComponent { weight: 0.6, mean: vec![0.0, 0.0], stddev: vec![0.3, 0.3] },
            GmmComponent { weight: 0.4, mean: vec![3.0, 1.0], stddev: vec![0.2, 0.5] },
        ],
    };
    let n = required_sample_size(0.1, 0.2)?;
    let tasks = sample_tasks(&gmm, n as usize, 42)?;
    println!("sampled {} tasks in {} dimensions", tasks.len(), tasks.dim());

    let dir = std::env::temp_dir().join("policy-committee-sample-tasks");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tasks.csv");
    tasks.save(&path, TaskFormat::Csv)?;
    let back = load_task_set(&path, TaskFormat::Csv)?;
    assert_eq!(back, tasks);
    println!("round-tripped through {}", path.display());
    Ok(tasks)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
