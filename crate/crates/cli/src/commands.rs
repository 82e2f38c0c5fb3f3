//! The `solve`, `bench` and `convergence` subcommands, minus argument parsing.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::ValueEnum;
use gmlpnp::bench::{
    generate_scene, mean_iteration_trace, run_experiment, stats, summarize, write_iterations_csv,
    write_trials_csv, ExperimentConfig, ExperimentOutput, GridPoint, Method, Summary, TrialRecord,
};
use gmlpnp::gml::{self, OuterLoopConfig};
use gmlpnp::linear::solve_linear_init;

use crate::schema::{CorrespondenceJson, PoseJson, SolveInput, SolveReportJson};

pub const DEFAULT_SEED: u64 = 42;
/// Image noise in pixels per meter of object noise.
pub const IMAGE_NOISE_RATIO: f64 = 10.0;
pub const TRIALS_CSV: &str = "trials.csv";
pub const ITERATIONS_CSV: &str = "iterations.csv";

/// Why a command failed; selects the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// I/O, schema or configuration problem (exit 1).
    Input(anyhow::Error),
    /// The solver rejected the data (exit 2).
    Solver(gmlpnp::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Solver(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "{e:#}"),
            Failure::Solver(e) => write!(f, "solver failed: {e}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitChoice {
    /// Linear resection from the correspondences.
    Linear,
    /// The `initial_pose` of the input file.
    File,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// `None` uses `initial_pose` when present, the linear estimate otherwise.
    pub init: Option<InitChoice>,
    pub max_outer: Option<usize>,
    pub cov_threshold: Option<f64>,
}

pub fn solve_input(input: &SolveInput, opts: &SolveOptions) -> Result<SolveReportJson, Failure> {
    if input.correspondences.is_empty() {
        let err = gmlpnp::Error::InsufficientPoints { needed: gml::MIN_POINTS, got: 0 };
        return Err(anyhow!("correspondences: {err}").into());
    }
    let corrs = input.to_correspondences()?;
    let ground_truth = input.ground_truth.as_ref().map(|p| p.to_pose().context("ground_truth")).transpose()?;
    let file_init = input.initial_pose.as_ref().map(|p| p.to_pose().context("initial_pose")).transpose()?;
    let init = match (opts.init, file_init) {
        (Some(InitChoice::Linear), _) | (None, None) => solve_linear_init(&corrs).map_err(Failure::Solver)?,
        (Some(InitChoice::File), None) => return Err(anyhow!("--init file needs an `initial_pose` field").into()),
        (_, Some(pose)) => pose,
    };

    let mut cfg = OuterLoopConfig::default();
    if let Some(n) = opts.max_outer {
        cfg.max_outer_iterations = n;
    }
    if let Some(x) = opts.cov_threshold {
        cfg.covariance_threshold = x;
    }
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let report = gml::solve(&corrs, Some(&init), &cfg).map_err(Failure::Solver)?;
    Ok(SolveReportJson::new(&report, ground_truth.as_ref()))
}

pub fn solve_file(path: &Path, opts: &SolveOptions) -> Result<SolveReportJson, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let input = SolveInput::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    solve_input(&input, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// n = 20…200, σ = 0.1 m, 1 px.
    Fig2,
    /// n = 50, σ = 0.02…0.5 m, σ_img = 10·σ px.
    Fig3,
    /// Single-threaded gmlpnp runtime sweep over n = 20…200.
    Timing,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    pub preset: Option<Preset>,
    pub n: Vec<usize>,
    pub sigma: Vec<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub config: Option<PathBuf>,
}

fn grid(ns: &[usize], sigmas: &[f64]) -> Vec<GridPoint> {
    ns.iter()
        .flat_map(|&n| {
            sigmas
                .iter()
                .map(move |&s| GridPoint { n_points: n, sigma_obj: s, sigma_img: IMAGE_NOISE_RATIO * s })
        })
        .collect()
}

/// Sweep described by a config file, or by a preset refined with flags.
pub fn bench_config(opts: &BenchOptions) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize::<_, ExperimentConfig>(de)
                .map_err(|e| anyhow!("{}: {}: {}", path.display(), e.path(), e.inner()))?
        }
        None => {
            let (ns, sigmas, trials): (Vec<usize>, Vec<f64>, usize) = match opts.preset {
                Some(Preset::Fig2) => ((1..=10).map(|k| 20 * k).collect(), vec![0.1], 500),
                Some(Preset::Fig3) => (vec![50], vec![0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5], 500),
                Some(Preset::Timing) => ((1..=10).map(|k| 20 * k).collect(), vec![0.1], 100),
                None => (vec![50], vec![0.1], 500),
            };
            let ns = if opts.n.is_empty() { ns } else { opts.n.clone() };
            let sigmas = if opts.sigma.is_empty() { sigmas } else { opts.sigma.clone() };
            let mut cfg = ExperimentConfig::new(grid(&ns, &sigmas), trials, DEFAULT_SEED);
            if opts.preset == Some(Preset::Timing) {
                cfg.methods = vec![Method::Gmlpnp];
                cfg.threads = Some(1);
            }
            cfg
        }
    };
    if let Some(t) = opts.trials {
        cfg.trials = t;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if opts.threads.is_some() {
        cfg.threads = opts.threads;
    }
    if cfg.grid.iter().any(|g| g.n_points < gml::MIN_POINTS) {
        return Err(anyhow!("every grid point needs at least {} points", gml::MIN_POINTS).into());
    }
    Ok(cfg)
}

fn create_csv(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, Failure> {
    run_experiment(cfg).map_err(|e| anyhow!("{e}").into())
}

fn write_header<W: Write>(out: &mut W, command: &str, cfg: &ExperimentConfig) -> std::io::Result<()> {
    let methods: Vec<&str> = cfg.methods.iter().map(Method::name).collect();
    writeln!(
        out,
        "# gmlpnp {command} seed={} trials={} grid_points={} methods={}",
        cfg.seed,
        cfg.trials,
        cfg.grid.len(),
        methods.join(",")
    )
}

/// Runs the sweep, writes both CSVs into `out_dir` and prints a summary.
pub fn bench<W: Write>(opts: &BenchOptions, out_dir: &Path, out: &mut W) -> Result<(), Failure> {
    let cfg = bench_config(opts)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut trials_csv = create_csv(out_dir, TRIALS_CSV)?;
    let mut iterations_csv = create_csv(out_dir, ITERATIONS_CSV)?;
    write_header(out, "bench", &cfg).context("writing summary")?;

    let result = run(&cfg)?;
    write_trials_csv(&mut trials_csv, &result.trials).context("writing trials.csv")?;
    write_iterations_csv(&mut iterations_csv, &result.iterations).context("writing iterations.csv")?;

    print_summary(out, &summarize(&result.trials), opts.preset == Some(Preset::Timing)).context("writing summary")?;
    Ok(())
}

fn print_summary<W: Write>(out: &mut W, summary: &[Summary], timing_fit: bool) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<12} {:>6} {:>9} {:>9} {:>12} {:>12} {:>12} {:>12} {:>11} {:>5}",
        "method", "n", "sigma", "sigma_img", "mean_rot", "median_rot", "mean_trans", "median_trans", "mean_us", "fail"
    )?;
    for s in summary {
        writeln!(
            out,
            "{:<12} {:>6} {:>9.4} {:>9.3} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>11.1} {:>5}",
            s.method.name(),
            s.n_points,
            s.sigma_obj,
            s.sigma_img,
            s.mean_e_rot,
            s.median_e_rot,
            s.mean_e_trans,
            s.median_e_trans,
            s.mean_time_us,
            s.failures
        )?;
    }
    if timing_fit {
        let xs: Vec<f64> = summary.iter().map(|s| s.n_points as f64).collect();
        let ys: Vec<f64> = summary.iter().map(|s| s.mean_time_us).collect();
        let (slope, intercept, r2) = stats::linear_fit(&xs, &ys);
        writeln!(out, "# time_us ≈ {slope:.3}·n + {intercept:.1}  (R² = {r2:.4})")?;
    }
    Ok(())
}

/// Writes the first scene of the sweep as a `solve` input file.
pub fn emit_case(opts: &BenchOptions, path: &Path) -> Result<(), Failure> {
    let cfg = bench_config(opts)?;
    let scene = generate_scene(&cfg.scene_config(0, 0), &cfg.noise_config(0)).map_err(|e| anyhow!("{e}"))?;
    let input = SolveInput {
        camera: Some(cfg.camera),
        correspondences: scene
            .correspondences
            .iter()
            .zip(&scene.pixels)
            .map(|(c, u)| CorrespondenceJson {
                object: c.object.into(),
                pixel: Some((*u).into()),
                ray: Some((*c.ray.as_vector()).into()),
            })
            .collect(),
        ground_truth: Some(PoseJson::from_pose(&scene.truth.pose)),
        initial_pose: None,
    };
    let text = serde_json::to_string_pretty(&input).context("serializing case")?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn convergence_config(trials: usize, seed: u64, threads: Option<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(vec![GridPoint { n_points: 200, sigma_obj: 0.5, sigma_img: 5.0 }], trials, seed);
    cfg.methods = vec![Method::Gmlpnp];
    cfg.threads = threads;
    cfg
}

/// Runs the n = 200, σ = 0.5 diagnostic and writes the per-iteration CSV.
pub fn convergence<W: Write>(cfg: &ExperimentConfig, out_dir: &Path, out: &mut W) -> Result<(), Failure> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut iterations_csv = create_csv(out_dir, ITERATIONS_CSV)?;
    write_header(out, "convergence", cfg).context("writing summary")?;

    let result = run(cfg)?;
    write_iterations_csv(&mut iterations_csv, &result.iterations).context("writing iterations.csv")?;

    print_trace(out, &result.trials).context("writing summary")?;
    Ok(())
}

fn print_trace<W: Write>(out: &mut W, trials: &[TrialRecord]) -> std::io::Result<()> {
    let len = trials.iter().map(|r| r.det_v_trace.len()).max().unwrap_or(0);
    writeln!(out, "{:>9} {:>14} {:>12}", "iteration", "mean_det_V", "mean_frob")?;
    for (k, (det, frob)) in mean_iteration_trace(trials, Method::Gmlpnp, len).iter().enumerate() {
        writeln!(out, "{k:>9} {det:>14.6e} {frob:>12.6}")?;
    }
    let iters: Vec<f64> = trials.iter().filter(|r| !r.failed).map(|r| r.outer_iters as f64).collect();
    let converged = trials.iter().filter(|r| r.converged).count();
    writeln!(out, "# median outer iterations {}, converged {}/{}", stats::median(&iters), converged, trials.len())
}
