use std::path::PathBuf;
use std::time::Instant;
use varcert::pipeline::{run_pipeline, PipelineOptions};
use varcert::problem::load_problem;

fn corpus() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    v.sort();
    v
}

#[test]
fn every_corpus_problem_reproduces_its_expected_verdict() {
    let mut failures = Vec::new();
    for path in corpus() {
        let pf = load_problem(&path).unwrap();
        let start = Instant::now();
        let run = run_pipeline(&pf, &PipelineOptions::default());
        let r = &run.report;
        println!(
            "{:<18} {:?} via {:?} in {:.2}s errors {:?}",
            pf.name,
            r.verdict,
            r.certifying_theorem,
            start.elapsed().as_secs_f64(),
            r.errors
        );
        if r.matches_expected != Some(true) {
            failures.push((pf.name.clone(), varcert::report::render_text(r)));
        }
    }
    for (name, text) in &failures {
        println!("--- {name}\n{text}");
    }
    assert!(failures.is_empty(), "{} corpus problems diverged", failures.len());
}
