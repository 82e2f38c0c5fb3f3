//! Joint pose and noise-covariance estimation by iterated generalized least
//! squares.
//!
//! Each outer iteration estimates `Σ̂ = (1/n) Σᵢ eᵢeᵢᵀ` from the current
//! residuals, re-solves the depths and the pose under `Σ̂`, and recomputes the
//! residuals. The procedure minimizes the determinant criterion
//! `|Σᵢ eᵢeᵢᵀ|`; every outer iteration is non-increasing in it.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{self, Correspondence, NoiseCovariance, Pose};
use crate::linear::solve_linear_init;
use crate::ml::{self, InnerSolveConfig};
use crate::{Error, Result};

pub const MIN_POINTS: usize = 6;
/// Absolute floor (squared world units) of the covariance regularization.
pub const COVARIANCE_ABSOLUTE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterLoopConfig {
    /// Stop once the elementwise max-abs change of `Σ̂` drops below this.
    pub covariance_threshold: f64,
    pub max_outer_iterations: usize,
    /// Relative diagonal loading applied to every covariance estimate.
    pub regularization_floor: f64,
    pub inner: InnerSolveConfig,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        Self {
            covariance_threshold: 1e-5,
            max_outer_iterations: 10,
            regularization_floor: 1e-9,
            inner: InnerSolveConfig::default(),
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.covariance_threshold > 0.0) || self.max_outer_iterations < 1 {
            return Err(Error::InvalidInput(
                "covariance threshold must be positive and max outer iterations ≥ 1".into(),
            ));
        }
        if !(self.regularization_floor >= 0.0) {
            return Err(Error::InvalidInput("regularization floor must be non-negative".into()));
        }
        self.inner.validate()
    }
}

/// State after one outer iteration. Index 0 describes the bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// Covariance estimated from this iteration's residuals.
    pub covariance: NoiseCovariance,
    /// `|Σᵢ eᵢeᵢᵀ|` of this iteration's residuals.
    pub det_v: f64,
    /// Weighted cost reached under the covariance the iteration solved with.
    pub cost: f64,
    pub negative_scale_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub pose: Pose,
    pub covariance: NoiseCovariance,
    pub scales: Vec<f64>,
    pub iterations: Vec<IterationDiagnostics>,
    pub converged: bool,
}

impl SolveReport {
    /// Number of outer iterations run (the bootstrap entry excluded).
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }
}

/// Second moment of the residuals about zero, loaded to be positive-definite:
/// `Σ̂ + ε·max(tr Σ̂ / 3, ε₀)·I`.
pub fn estimate_covariance_with_floor(
    residuals: &[Vector3<f64>],
    regularization_floor: f64,
) -> Result<NoiseCovariance> {
    if residuals.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    let moment = residuals
        .iter()
        .fold(Matrix3::zeros(), |acc, e| acc + e * e.transpose())
        / residuals.len() as f64;
    let load = regularization_floor * (moment.trace() / 3.0).max(COVARIANCE_ABSOLUTE_FLOOR);
    NoiseCovariance::new(moment + Matrix3::identity() * load)
}

/// [`estimate_covariance_with_floor`] with the default regularization.
pub fn estimate_covariance(residuals: &[Vector3<f64>]) -> Result<NoiseCovariance> {
    estimate_covariance_with_floor(residuals, OuterLoopConfig::default().regularization_floor)
}

/// `|V|` with `V = Σᵢ eᵢeᵢᵀ`, the squared volume spanned by the residuals.
pub fn determinant_criterion(residuals: &[Vector3<f64>]) -> f64 {
    residuals
        .iter()
        .fold(Matrix3::zeros(), |acc, e| acc + e * e.transpose())
        .determinant()
        .max(0.0)
}

fn max_abs_difference(a: &NoiseCovariance, b: &NoiseCovariance) -> f64 {
    (a.matrix() - b.matrix()).abs().max()
}

/// Estimates pose and noise covariance from the correspondences.
///
/// Without `init` the pose is bootstrapped from [`solve_linear_init`]; the
/// first residuals use identity-covariance depths.
pub fn solve(
    corrs: &[Correspondence],
    init: Option<&Pose>,
    cfg: &OuterLoopConfig,
) -> Result<SolveReport> {
    solve_with_bootstrap(corrs, init, &NoiseCovariance::identity(), cfg)
}

/// [`solve`] with an explicit covariance for the bootstrap depths.
pub fn solve_with_bootstrap(
    corrs: &[Correspondence],
    init: Option<&Pose>,
    bootstrap: &NoiseCovariance,
    cfg: &OuterLoopConfig,
) -> Result<SolveReport> {
    if corrs.len() < MIN_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_POINTS, got: corrs.len() });
    }
    cfg.validate()?;
    let mut pose = match init {
        Some(p) => *p,
        None => solve_linear_init(corrs)?,
    };

    let (mut scales, residuals) = ml::concentrated_residuals(corrs, &pose, bootstrap);
    let mut covariance = estimate_covariance_with_floor(&residuals, cfg.regularization_floor)?;
    let bootstrap_cost = geometry::cost(corrs, &pose, &scales, bootstrap)?;
    if !bootstrap_cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut iterations = vec![IterationDiagnostics {
        iteration: 0,
        covariance: covariance.clone(),
        det_v: determinant_criterion(&residuals),
        cost: bootstrap_cost,
        negative_scale_count: scales.iter().filter(|s| **s < 0.0).count(),
    }];
    let mut converged = false;

    for k in 1..=cfg.max_outer_iterations {
        // depths under Σ̂⁽ᵏ⁻¹⁾ are recomputed first inside the inner solve
        let inner = ml::solve_fixed_covariance(corrs, &covariance, &pose, &cfg.inner)?;
        pose = inner.pose;
        scales = inner.scales;
        let residuals = geometry::residuals(corrs, &pose, &scales);
        let next = estimate_covariance_with_floor(&residuals, cfg.regularization_floor)?;
        let change = max_abs_difference(&next, &covariance);
        iterations.push(IterationDiagnostics {
            iteration: k,
            covariance: next.clone(),
            det_v: determinant_criterion(&residuals),
            cost: inner.final_cost,
            negative_scale_count: inner.negative_scale_count,
        });
        covariance = next;
        if change < cfg.covariance_threshold {
            converged = true;
            break;
        }
    }

    Ok(SolveReport { pose, covariance, scales, iterations, converged })
}
