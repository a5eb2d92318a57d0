mod sample_tasks_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/sample_tasks.rs"));
}

mod cover_greedy_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cover_greedy.rs"));
}

mod gradient_cover_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gradient_cover.rs"));
}

mod simulation_lemma_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/simulation_lemma.rs"));
}

mod committee_pipeline_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/committee_pipeline.rs"));
}

mod fewshot_selection_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/fewshot_selection.rs"));
}

#[test]
fn sample_tasks_example_runs() {
    let tasks = sample_tasks_example::run_example().unwrap();
    assert_eq!(tasks.len(), 441);
}

#[test]
fn cover_greedy_example_runs() {
    let (points, boxes, best) = cover_greedy_example::run_example().unwrap();
    assert!(points <= boxes && boxes <= best);
    assert_eq!(best, 6);
}

#[test]
fn gradient_cover_example_runs() {
    let out = gradient_cover_example::run_example().unwrap();
    assert_eq!(out.solution.miss_rate, 0.0);
}

#[test]
fn simulation_lemma_example_runs() {
    let ratio = simulation_lemma_example::run_example().unwrap();
    assert!(ratio <= 1.0);
}

#[test]
fn committee_pipeline_example_runs() {
    let runs = committee_pipeline_example::run_example().unwrap();
    let (one, three) = (&runs[0].1, &runs[1].1);
    assert!(three.delta_hat < one.delta_hat);
    assert!(runs[2].1.delta_hat >= three.delta_hat);
}

#[test]
fn fewshot_selection_example_runs() {
    let (chosen, best) = fewshot_selection_example::run_example().unwrap();
    assert_eq!(chosen, best);
}
