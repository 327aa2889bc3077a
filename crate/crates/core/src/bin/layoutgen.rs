use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use layout_guidance::evaluation::{fit_gaussian, frechet_distance};
use layout_guidance::generator::{generate, oracle_detect, ConceptVocabulary, GenerationConfig};
use layout_guidance::guidance::{Grid, MaskMode};
use layout_guidance::harness::{self, BenchReport, RunConfig, RunReport};
use layout_guidance::{match_guidance, ConsistencyRecord, DetectionRecord, Error};

/// Layout-guided toy generation and object-wise consistency evaluation.
#[derive(Parser)]
#[command(name = "layoutgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every sample of a spec file with the toy generator.
    Generate(GenerateArgs),
    /// Score external detections against a spec file.
    Eval {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate, detect and score a spec file under several mask modes.
    Bench(BenchArgs),
    /// Fréchet distance between two feature CSV files.
    Fid {
        #[arg(long)]
        features_a: PathBuf,
        #[arg(long)]
        features_b: PathBuf,
    },
    /// Select captioned samples from COCO-style annotation files.
    Filter {
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = layout_guidance::service::DEFAULT_LISTEN)]
        listen: String,
        /// Directory of static files served under `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Tuning {
    #[arg(long, default_value_t = 0.2)]
    weight: f64,
    #[arg(long, default_value_t = layout_guidance::guidance::DEFAULT_SOFTNESS)]
    softness: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Tuning {
    fn config(&self) -> GenerationConfig {
        GenerationConfig {
            steps: self.steps,
            w_prime: self.weight,
            softness: self.softness,
            seed: self.seed,
            ..GenerationConfig::default()
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "gaussian")]
    mode: MaskMode,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: PathBuf,
    /// Pixels per latent cell in the written images.
    #[arg(long, default_value_t = 32)]
    scale: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "none,flat,gaussian")]
    modes: Vec<MaskMode>,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

/// Grid file written next to each generated image.
#[derive(Serialize)]
struct GridExport<'a> {
    image_id: &'a str,
    mask_mode: MaskMode,
    seed: u64,
    grid: Grid,
    concepts: Vec<&'a str>,
    /// Vocabulary index per cell, one inner list per row.
    labels: Vec<Vec<usize>>,
    detections: Vec<DetectionRecord>,
    consistency: Vec<ConsistencyRecord>,
}

fn run_generate(args: &GenerateArgs) -> Result<(), Error> {
    let samples = harness::load_samples(&args.spec)?;
    let vocab = ConceptVocabulary::toy();
    let cfg = args.tuning.config().with_mode(args.mode);
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    for s in &samples {
        let g = s.to_guidance()?;
        let out = generate(&g, &vocab, &cfg)?;
        for w in &out.warnings {
            log::warn!("{}: {w}", s.image_id);
        }
        let grid = out.image.grid();
        let labels: Vec<usize> = out
            .image
            .labels(&vocab)
            .into_iter()
            .map(|l| l.expect("generator paints palette colors"))
            .collect();
        let detections = oracle_detect(&out.image, &vocab);
        let export = GridExport {
            image_id: &s.image_id,
            mask_mode: cfg.mask_mode,
            seed: cfg.seed,
            grid,
            concepts: vocab.concepts().iter().map(|c| c.name.as_str()).collect(),
            labels: labels.chunks(grid.width).map(<[usize]>::to_vec).collect(),
            consistency: match_guidance(&detections, &g),
            detections,
        };
        let stem = sanitize(&s.image_id);
        let ppm = args.out.join(format!("{stem}.ppm"));
        std::fs::write(&ppm, out.image.to_ppm(args.scale)).map_err(|e| io_error(&ppm, e))?;
        harness::write_json(&args.out.join(format!("{stem}.json")), &export)?;
        println!("{}", ppm.display());
    }
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn summary(run: &RunReport) {
    let label = match &run.config {
        RunConfig::Toy { mask_mode, .. } => mask_mode.to_string(),
        RunConfig::External { detections } => detections.clone(),
    };
    println!(
        "{label:<10} objects {:>6}  IoU {:.4}  R_suc {:.2}%",
        run.aggregate.objects, run.aggregate.mean_iou, run.aggregate.success_rate
    );
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(args) => run_generate(&args),
        Command::Eval {
            spec,
            detections,
            report,
        } => {
            let samples = harness::load_samples(&spec)?;
            let dets = harness::read_detections(&detections)?;
            let run =
                harness::evaluate_detections(&samples, &dets, &detections.display().to_string())?;
            harness::write_json(&report, &run)?;
            summary(&run);
            print!("{}", run.subsets);
            Ok(())
        }
        Command::Bench(args) => {
            let samples = harness::load_samples(&args.spec)?;
            let report: BenchReport = harness::run_benchmark(
                &samples,
                &ConceptVocabulary::toy(),
                &args.tuning.config(),
                &args.modes,
                args.seeds,
            )?;
            harness::write_json(&args.report, &report)?;
            report.runs.iter().for_each(summary);
            Ok(())
        }
        Command::Fid {
            features_a,
            features_b,
        } => {
            let (_, a) = harness::read_features(&features_a)?;
            let (_, b) = harness::read_features(&features_b)?;
            println!(
                "{}",
                frechet_distance(&fit_gaussian(&a)?, &fit_gaussian(&b)?)?
            );
            Ok(())
        }
        Command::Filter {
            captions,
            annotations,
            out,
            n1,
            n2,
            seed,
        } => {
            let all = harness::load_coco(&captions, &annotations)?;
            let eligible = harness::filter_samples(&all);
            let picked = harness::split_by_object_count(&eligible, n1, n2, seed)?;
            harness::save_samples(&out, &picked)?;
            println!(
                "{} images, {} eligible, {} selected",
                all.len(),
                eligible.len(),
                picked.len()
            );
            Ok(())
        }
        Command::Serve { listen, assets } => {
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| Error::Config(e.to_string()))?;
            runtime
                .block_on(layout_guidance::service::serve(
                    &listen,
                    ConceptVocabulary::toy(),
                    assets,
                ))
                .map_err(|e| Error::Config(format!("cannot serve on {listen}: {e}")))
        }
    }
}

/// Parses `args` and runs the command: 0 on success, 1 for usage errors,
/// 2 for data errors.
fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    ExitCode::from(execute(std::env::args_os()))
}
