use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsefix::cli::{run_experiment, ExperimentConfig, Overrides, Task};

/// Sparse regression, classification and deblurring with l0 and l1 models.
#[derive(Parser)]
#[command(name = "sparsefix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian-kernel regression on libsvm data
    Regress(RunArgs),
    /// Gaussian-kernel classification on libsvm or IDX data
    Classify(RunArgs),
    /// Motion-blur deblurring of a PGM or synthetic image
    Deblur(RunArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(task: Task, args: RunArgs) -> sparsefix::Result<i32> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&Overrides {
        lambda: args.lambda,
        gamma: args.gamma,
        alpha: args.alpha,
        p: args.p,
        seed: args.seed,
        out: args.out,
    });
    cfg.resolve(task)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let outcome = run_experiment(&cfg)?;
    println!("{:?} after {} iterations; metrics: {}", outcome.status, outcome.iterations, outcome.metrics);
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    // usage errors exit with 1; exit code 2 is reserved for the iteration cap
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (task, args) = match cli.command {
        Command::Regress(a) => (Task::Regress, a),
        Command::Classify(a) => (Task::Classify, a),
        Command::Deblur(a) => (Task::Deblur, a),
    };
    match run(task, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
