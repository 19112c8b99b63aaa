mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{AnalyzeArgs, EvalArgs, PredictArgs, RasterizeArgs, SliceArgs, SynthArgs, TimestampsArgs, TrainArgs};
use config::Config;
use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "tempsal", version, about = "Temporal saliency datasets, analysis and models")]
struct Cli {
    /// Settings file of `key = value` lines; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-image work
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress to stderr; repeat for more detail
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset: images, gaze samples and fixations
    Synth(SynthArgs),
    /// Recover fixation timestamps from raw gaze samples
    Timestamps(TimestampsArgs),
    /// Assign timestamped fixations to temporal slices
    Slice(SliceArgs),
    /// Turn fixations into blurred saliency maps
    Rasterize(RasterizeArgs),
    /// Slice correlation matrix, deviation scores, average and difference maps
    Analyze(AnalyzeArgs),
    /// Train one stage of the model
    Train(TrainArgs),
    /// Predict slice, image and refined maps for a directory of images
    Predict(PredictArgs),
    /// Score predicted maps against ground truth
    Eval(EvalArgs),
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let jobs = cfg.pick("jobs", cli.jobs, 1usize)?;
    if jobs == 0 {
        return Err(CliError::input("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| CliError::input(e.to_string()))?;
    match &cli.command {
        Command::Synth(a) => commands::synth(a, &cfg),
        Command::Timestamps(a) => commands::timestamps(a, &cfg),
        Command::Slice(a) => commands::slice(a, &cfg),
        Command::Rasterize(a) => commands::rasterize_cmd(a, &cfg),
        Command::Analyze(a) => commands::analyze(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::Predict(a) => commands::predict_cmd(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error: input: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
