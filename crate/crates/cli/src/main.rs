use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmlpnp_cli::commands::{
    self, convergence_config, BenchOptions, Failure, InitChoice, Preset, SolveOptions, DEFAULT_SEED,
};

/// Object-space PnP with joint pose and noise-covariance estimation.
#[derive(Parser)]
#[command(name = "gmlpnp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one correspondence file and print the report as JSON.
    Solve(SolveArgs),
    /// Run a synthetic accuracy or timing sweep.
    Bench(BenchArgs),
    /// Run the n = 200, σ = 0.5 outer-loop convergence diagnostic.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    init: Option<InitChoice>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    cov_threshold: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, conflicts_with = "config")]
    preset: Option<Preset>,
    /// Point counts (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    n: Vec<usize>,
    /// Object noise levels in meters (comma separated); image noise is 10 px per meter.
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    sigma: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Defaults to 42.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// JSON experiment configuration replacing the preset and grid flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the first scene of the sweep as a `solve` input file and exit.
    #[arg(long)]
    emit_case: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Solve(args) => {
            let opts = SolveOptions { init: args.init, max_outer: args.max_outer, cov_threshold: args.cov_threshold };
            let report = commands::solve_file(&args.file, &opts)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.into()))?;
            writeln!(out, "{text}").map_err(|e| Failure::Input(e.into()))
        }
        Command::Bench(args) => {
            let opts = BenchOptions {
                preset: args.preset,
                n: args.n,
                sigma: args.sigma,
                trials: args.trials,
                seed: args.seed,
                threads: args.threads,
                config: args.config,
            };
            match args.emit_case {
                Some(path) => commands::emit_case(&opts, &path),
                None => commands::bench(&opts, &args.out, &mut out),
            }
        }
        Command::Convergence(args) => {
            let cfg = convergence_config(args.trials, args.seed, args.threads);
            commands::convergence(&cfg, &args.out, &mut out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
