//! Runs the seen/unseen-noise comparison and prints one line per run.
//!
//! cargo run --release --example robustness -- [experiment.json]

use std::time::Instant;

use tmf_core::experiment::{run, ExperimentConfig};
use tmf_core::synth::NoiseCondition;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg: ExperimentConfig = match std::env::args().nth(1) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let start = Instant::now();
    let results = run(&cfg)?;
    println!("mode seed batches | ter clean/seen/unseen | acc clean/seen/unseen | ratio clean");
    for r in &results {
        let ter: Vec<String> = NoiseCondition::ALL.iter().map(|&c| format!("{:.2}", r.report(c).token_error_rate)).collect();
        let acc: Vec<String> = NoiseCondition::ALL
            .iter()
            .map(|&c| r.report(c).frame_accuracy.map_or("-".into(), |a| format!("{a:.2}")))
            .collect();
        let ratio = r.report(NoiseCondition::Clean).scatter.map_or(f64::NAN, |s| s.scatter_ratio);
        let last = r.metrics.last().map_or(f64::NAN, |m| m.validation_score);
        println!(
            "{:>4} {:>4} {:>6} | {} | {} | {ratio:.4} | val {last:.4}",
            r.mode,
            r.seed,
            r.batches,
            ter.join("/"),
            acc.join("/"),
        );
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
