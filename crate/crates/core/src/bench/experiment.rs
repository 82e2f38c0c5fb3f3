use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{frobenius_error, rotation_error, translation_error};
use super::scene::{generate_scene, BoxRange, NoiseConfig, Scene, SceneConfig};
use super::stats;
use crate::camera::Camera;
use crate::geometry::{NoiseCovariance, Pose};
use crate::gml::{self, OuterLoopConfig};
use crate::linear::solve_linear_init;
use crate::ml::solve_fixed_covariance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Joint pose and covariance estimation.
    Gmlpnp,
    /// Fixed-covariance solve with the true covariance.
    GmlpnpStar,
    /// Fixed-covariance solve with `Σ = I`.
    MlIdentity,
    LinearInit,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gmlpnp, Method::GmlpnpStar, Method::MlIdentity, Method::LinearInit];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gmlpnp => "gmlpnp",
            Method::GmlpnpStar => "gmlpnp_star",
            Method::MlIdentity => "ml_identity",
            Method::LinearInit => "linear_init",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_points: usize,
    pub sigma_obj: f64,
    pub sigma_img: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: Vec<GridPoint>,
    pub trials: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default)]
    pub bounds: BoxRange,
    #[serde(default = "default_true")]
    pub anisotropic: bool,
    #[serde(skip)]
    pub solver: OuterLoopConfig,
    /// Worker threads; `None` uses the available parallelism.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(grid: Vec<GridPoint>, trials: usize, seed: u64) -> Self {
        Self {
            grid,
            trials,
            methods: all_methods(),
            seed,
            camera: Camera::default(),
            bounds: BoxRange::default(),
            anisotropic: true,
            solver: OuterLoopConfig::default(),
            threads: None,
        }
    }

    pub fn scene_config(&self, grid_index: usize, trial: usize) -> SceneConfig {
        SceneConfig {
            n_points: self.grid[grid_index].n_points,
            bounds: self.bounds,
            camera: self.camera,
            rng_seed: trial_seed(self.seed, grid_index, trial),
        }
    }

    pub fn noise_config(&self, grid_index: usize) -> NoiseConfig {
        let g = &self.grid[grid_index];
        NoiseConfig { anisotropic: self.anisotropic, ..NoiseConfig::new(g.sigma_obj, g.sigma_img) }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-trial RNG seed derived from the sweep seed, grid point and
/// trial index.
pub fn trial_seed(seed: u64, grid_index: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ grid_index as u64) ^ trial as u64)
}

/// One method run on one synthetic scene.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub method: Method,
    pub n_points: usize,
    pub sigma_obj: f64,
    pub sigma_img: f64,
    pub trial: usize,
    pub e_rot_deg: f64,
    pub e_trans_rel: f64,
    pub time_us: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub failed: bool,
    #[serde(skip)]
    pub det_v_trace: Vec<f64>,
    #[serde(skip)]
    pub frob_err_trace: Vec<f64>,
    #[serde(skip)]
    pub cost_trace: Vec<f64>,
}

/// One outer iteration of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub method: Method,
    pub trial: usize,
    pub iteration: usize,
    #[serde(rename = "det_V")]
    pub det_v: f64,
    pub frob_err: f64,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials: Vec<TrialRecord>,
    pub iterations: Vec<IterationRecord>,
}

/// Result of running a method once, before metrics.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub pose: Pose,
    pub converged: bool,
    pub report: Option<gml::SolveReport>,
}

/// Runs `method` on the scene's noisy correspondences. `init` overrides the
/// linear initialization.
pub fn run_method(
    method: Method,
    scene: &Scene,
    init: Option<&Pose>,
    solver: &OuterLoopConfig,
) -> Result<MethodOutcome> {
    let corrs = &scene.correspondences;
    let init_pose = |corrs| match init {
        Some(p) => Ok(*p),
        None => solve_linear_init(corrs),
    };
    match method {
        Method::LinearInit => Ok(MethodOutcome { pose: init_pose(corrs)?, converged: true, report: None }),
        Method::MlIdentity | Method::GmlpnpStar => {
            let cov = if method == Method::MlIdentity {
                NoiseCovariance::identity()
            } else {
                // zero object noise leaves Σ* singular; any SPD weight has the same minimizer then
                scene.truth.noise_covariance().unwrap_or_else(|_| NoiseCovariance::identity())
            };
            let start = init_pose(corrs)?;
            let inner = solve_fixed_covariance(corrs, &cov, &start, &solver.inner)?;
            Ok(MethodOutcome { pose: inner.pose, converged: inner.converged, report: None })
        }
        Method::Gmlpnp => {
            let report = gml::solve(corrs, init, solver)?;
            Ok(MethodOutcome { pose: report.pose, converged: report.converged, report: Some(report) })
        }
    }
}

fn record_trial(
    method: Method,
    grid: &GridPoint,
    trial: usize,
    scene: &Scene,
    solver: &OuterLoopConfig,
) -> TrialRecord {
    let start = Instant::now();
    let outcome = run_method(method, scene, None, solver);
    let time_us = start.elapsed().as_secs_f64() * 1e6;

    let mut record = TrialRecord {
        method,
        n_points: grid.n_points,
        sigma_obj: grid.sigma_obj,
        sigma_img: grid.sigma_img,
        trial,
        e_rot_deg: f64::NAN,
        e_trans_rel: f64::NAN,
        time_us,
        outer_iters: 0,
        converged: false,
        failed: true,
        det_v_trace: Vec::new(),
        frob_err_trace: Vec::new(),
        cost_trace: Vec::new(),
    };
    let Ok(outcome) = outcome else {
        return record;
    };
    let truth = &scene.truth.pose;
    let Ok(e_trans) = translation_error(&truth.translation, &outcome.pose.translation) else {
        return record;
    };
    record.e_rot_deg = rotation_error(&truth.rotation, &outcome.pose.rotation);
    record.e_trans_rel = e_trans;
    record.converged = outcome.converged;
    record.failed = !(record.e_rot_deg.is_finite() && record.e_trans_rel.is_finite());
    if let Some(report) = outcome.report {
        record.outer_iters = report.outer_iterations();
        record.det_v_trace = report.iterations.iter().map(|it| it.det_v).collect();
        record.frob_err_trace = report
            .iterations
            .iter()
            .map(|it| frobenius_error(it.covariance.matrix(), &scene.truth.covariance))
            .collect();
        record.cost_trace = report.iterations.iter().map(|it| it.cost).collect();
    }
    record
}

fn run_cell(cfg: &ExperimentConfig, grid_index: usize, trial: usize) -> Result<Vec<TrialRecord>> {
    let scene = generate_scene(&cfg.scene_config(grid_index, trial), &cfg.noise_config(grid_index))?;
    Ok(cfg
        .methods
        .iter()
        .map(|&m| record_trial(m, &cfg.grid[grid_index], trial, &scene, &cfg.solver))
        .collect())
}

/// Runs every method on every (grid point, trial) scene.
///
/// Methods at the same grid point and trial index share one scene. Solver
/// failures are recorded, not propagated; only invalid configurations error.
/// Output order is grid point, then trial, then method, regardless of the
/// number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.grid.is_empty() || cfg.trials == 0 || cfg.methods.is_empty() {
        return Err(Error::InvalidInput("experiment needs grid points, trials and methods".into()));
    }
    cfg.solver.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|g| (0..cfg.trials).map(move |t| (g, t)))
        .collect();

    let run = || -> Result<Vec<Vec<TrialRecord>>> {
        cells.par_iter().map(|&(g, t)| run_cell(cfg, g, t)).collect()
    };
    let nested = match cfg.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let trials: Vec<TrialRecord> = nested.into_iter().flatten().collect();

    let iterations = trials
        .iter()
        .filter(|r| r.method == Method::Gmlpnp)
        .flat_map(|r| {
            (0..r.det_v_trace.len()).map(move |k| IterationRecord {
                method: r.method,
                trial: r.trial,
                iteration: k,
                det_v: r.det_v_trace[k],
                frob_err: r.frob_err_trace[k],
                cost: r.cost_trace[k],
            })
        })
        .collect();
    Ok(ExperimentOutput { trials, iterations })
}

pub fn write_trials_csv<W: Write>(writer: W, records: &[TrialRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iterations_csv<W: Write>(writer: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["method", "trial", "iteration", "det_V", "frob_err", "cost"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate of one method at one grid point, over non-failed trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub n_points: usize,
    pub sigma_obj: f64,
    pub sigma_img: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_e_rot: f64,
    pub median_e_rot: f64,
    pub mean_e_trans: f64,
    pub median_e_trans: f64,
    pub mean_time_us: f64,
    pub median_outer_iters: f64,
}

/// Groups records by (grid point, method) in order of first appearance.
pub fn summarize(records: &[TrialRecord]) -> Vec<Summary> {
    let mut keys: Vec<(usize, u64, u64, Method)> = Vec::new();
    for r in records {
        let key = (r.n_points, r.sigma_obj.to_bits(), r.sigma_img.to_bits(), r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, so, si, method)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| {
                    r.n_points == n && r.sigma_obj.to_bits() == so && r.sigma_img.to_bits() == si && r.method == method
                })
                .collect();
            let ok: Vec<&&TrialRecord> = group.iter().filter(|r| !r.failed).collect();
            let col = |f: fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let rot = col(|r| r.e_rot_deg);
            let trans = col(|r| r.e_trans_rel);
            Summary {
                method,
                n_points: n,
                sigma_obj: f64::from_bits(so),
                sigma_img: f64::from_bits(si),
                trials: group.len(),
                failures: group.len() - ok.len(),
                mean_e_rot: stats::mean(&rot),
                median_e_rot: stats::median(&rot),
                mean_e_trans: stats::mean(&trans),
                median_e_trans: stats::median(&trans),
                mean_time_us: stats::mean(&col(|r| r.time_us)),
                median_outer_iters: stats::median(&col(|r| r.outer_iters as f64)),
            }
        })
        .collect()
}

/// Mean `(det_V, frob_err)` per outer iteration over the non-failed records of
/// `method`, for iterations `0..len`. Traces that stopped early are padded
/// with their last value.
pub fn mean_iteration_trace(records: &[TrialRecord], method: Method, len: usize) -> Vec<(f64, f64)> {
    let traces: Vec<&TrialRecord> = records
        .iter()
        .filter(|r| r.method == method && !r.failed && !r.det_v_trace.is_empty())
        .collect();
    (0..len)
        .map(|k| {
            let at = |t: &Vec<f64>| t[k.min(t.len() - 1)];
            let det: Vec<f64> = traces.iter().map(|r| at(&r.det_v_trace)).collect();
            let frob: Vec<f64> = traces.iter().map(|r| at(&r.frob_err_trace)).collect();
            (stats::mean(&det), stats::mean(&frob))
        })
        .collect()
}
