//! Runs the observation suite: corpora, baseline, preference rounds and
//! every observation for each seed of a plan. Defaults to the smoke plan;
//! pass `desk` for the full-size run (several minutes in release) or a
//! path to a plan file. An optional second argument writes all artifacts.
//! The smoke plan only exercises the plumbing: one epoch and one tiny round
//! leave the model where it started, so its observations fail.
//!
//! `cargo run --release --example observation_suite -- desk out/`

use std::path::Path;

use dqoforge::experiment::{run_observation_suite, ExperimentPlan};

fn main() -> dqoforge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let plan = match args.first().map(String::as_str) {
        None | Some("smoke") => ExperimentPlan::smoke(),
        Some("desk") => ExperimentPlan::desk(),
        Some(path) => ExperimentPlan::load(Path::new(path))?,
    };
    let out = args.get(1).map(Path::new);
    let started = std::time::Instant::now();
    let report = run_observation_suite(&plan, out)?;
    print!("{}", report.to_text());
    println!("{:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}
