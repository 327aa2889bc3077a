//! Runs the toy benchmark over a spec file and prints the per-mode summary
//! and the size/distance tables.
//!
//! `cargo run --release --example benchmark -- [spec.json] [seeds]`

use std::path::PathBuf;

use layout_guidance::generator::{ConceptVocabulary, GenerationConfig};
use layout_guidance::harness::{load_samples, run_benchmark, RunConfig};
use layout_guidance::MaskMode;

fn main() -> layout_guidance::Result<()> {
    let mut args = std::env::args().skip(1);
    let spec = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy_corpus.json")
    });
    let seeds = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let samples = load_samples(&spec)?;
    let modes = [MaskMode::None, MaskMode::Flat, MaskMode::Gaussian];
    let report = run_benchmark(
        &samples,
        &ConceptVocabulary::toy(),
        &GenerationConfig::default(),
        &modes,
        seeds,
    )?;
    for run in &report.runs {
        let RunConfig::Toy {
            mask_mode, w_prime, ..
        } = &run.config
        else {
            continue;
        };
        println!(
            "\n{mask_mode} (w' = {w_prime}): IoU {:.3}, R_suc {:.2}% over {} objects",
            run.aggregate.mean_iou, run.aggregate.success_rate, run.aggregate.objects
        );
        print!("{}", run.subsets);
    }
    Ok(())
}
