//! Run the synthetic Table-3 style experiment and print the markdown table.

use std::sync::Arc;

use relfeed::corpus::{synthesize_corpus, SynthConfig};
use relfeed::simulator::{run_experiment, ExperimentConfig};

fn main() -> relfeed::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let corpus = Arc::new(synthesize_corpus(&SynthConfig::standard(2000, 8, 0.1, 0))?);
    let cfg = ExperimentConfig {
        runs_per_cell: runs,
        seed: std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0),
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let report = run_experiment(&corpus, &cfg)?;
    println!("{}", report.to_markdown());
    for r in &report.runs {
        println!("{:12} seed {:2} N {:4} conv {} ar {:.2} pr {:?}", r.algorithm.name(), r.seed, r.iterations, r.converged, r.ar, r.pr);
    }
    eprintln!("elapsed {:?}", t.elapsed());
    Ok(())
}
