//! Maximum-likelihood pose estimation under a known noise covariance.
//!
//! The cost `½ Σᵢ ‖pᵢ − (sᵢRmᵢ + t)‖²_Σ` is minimized by block relaxation:
//! the depths `sᵢ` have a closed form for a fixed pose, and the pose is
//! updated by damped Gauss-Newton steps on `(δφ, δt)` with the rotation
//! perturbed on the right, `R ← R·exp(δφ)`.

use nalgebra::{Matrix3x6, Matrix6, Vector3, Vector6};

use crate::geometry::{self, skew, Correspondence, NoiseCovariance, Pose};
use crate::{Error, Result};

pub const MIN_POINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolveConfig {
    pub max_gn_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub damping_initial: f64,
}

impl Default for InnerSolveConfig {
    fn default() -> Self {
        Self {
            max_gn_iterations: 20,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            damping_initial: 1e-6,
        }
    }
}

impl InnerSolveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_gn_iterations > 0
            && self.gradient_tolerance > 0.0
            && self.step_tolerance > 0.0
            && self.damping_initial > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("inner solver settings must be positive".into()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolveResult {
    pub pose: Pose,
    /// Depths along each ray, optimal for `pose`.
    pub scales: Vec<f64>,
    pub final_cost: f64,
    pub gn_iterations: usize,
    pub converged: bool,
    pub negative_scale_count: usize,
    /// Cost at the start and after every accepted step.
    pub cost_trace: Vec<f64>,
}

/// Closed-form depth minimizing the single-term cost for a fixed pose:
/// `s = (p − t)ᵀΣ⁻¹Rm / (Rm)ᵀΣ⁻¹Rm`.
pub fn optimal_scale(c: &Correspondence, pose: &Pose, cov: &NoiseCovariance) -> f64 {
    let a = cov.whiten(&(pose.rotation * c.ray.as_vector()));
    let b = cov.whiten(&(c.object - pose.translation));
    a.dot(&b) / a.norm_squared()
}

pub fn optimal_scales(corrs: &[Correspondence], pose: &Pose, cov: &NoiseCovariance) -> Vec<f64> {
    corrs.iter().map(|c| optimal_scale(c, pose, cov)).collect()
}

/// Jacobian of the residual w.r.t. `[δφ, δt]`: `[s·R·⌊m⌋ₓ, −I]`.
fn residual_jacobian(c: &Correspondence, pose: &Pose, scale: f64) -> Matrix3x6<f64> {
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(scale * pose.rotation.matrix() * skew(c.ray.as_vector())));
    j.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-nalgebra::Matrix3::identity()));
    j
}

/// Gradient of the cost with scales held fixed, as `[rotation; translation]`.
///
/// The rotation block is taken w.r.t. the right perturbation `R·exp(δφ)`:
/// `−Σᵢ sᵢ⌊mᵢ⌋ₓRᵀΣ⁻¹eᵢ`, which equals `−Rᵀ Σᵢ ⌊sᵢRmᵢ⌋ₓΣ⁻¹eᵢ`. The
/// translation block is `−Σᵢ Σ⁻¹eᵢ`.
pub fn pose_gradient(
    corrs: &[Correspondence],
    pose: &Pose,
    scales: &[f64],
    cov: &NoiseCovariance,
) -> Result<Vector6<f64>> {
    check_scales(corrs, scales)?;
    let mut g = Vector6::zeros();
    for (c, &s) in corrs.iter().zip(scales) {
        let we = cov.solve(&geometry::residual(c, pose, s));
        g += residual_jacobian(c, pose, s).transpose() * we;
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteCost);
    }
    Ok(g)
}

fn check_scales(corrs: &[Correspondence], scales: &[f64]) -> Result<()> {
    if corrs.len() != scales.len() {
        return Err(Error::InvalidInput(format!(
            "{} scales for {} correspondences",
            scales.len(),
            corrs.len()
        )));
    }
    Ok(())
}

/// Gauss-Newton system with the depths eliminated.
///
/// Each whitened 3×6 Jacobian is projected onto the complement of the
/// whitened depth direction `L⁻¹Rm` (a per-point Schur complement), so the
/// 6×6 system models the cost with depths re-optimized after the step.
fn normal_equations(
    corrs: &[Correspondence],
    pose: &Pose,
    scales: &[f64],
    cov: &NoiseCovariance,
) -> (Matrix6<f64>, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for (c, &s) in corrs.iter().zip(scales) {
        let r = cov.whiten(&geometry::residual(c, pose, s));
        let jw = cov.whiten_matrix(&residual_jacobian(c, pose, s));
        let a = cov.whiten(&(pose.rotation * c.ray.as_vector()));
        let reduced = jw - a * (a.transpose() * jw) / a.norm_squared();
        h += reduced.transpose() * reduced;
        g += jw.transpose() * r;
    }
    (h, g)
}

fn count_negative(scales: &[f64]) -> usize {
    scales.iter().filter(|s| **s < 0.0).count()
}

/// Minimizes the cost over pose and depths for a fixed covariance, starting
/// from `init`.
///
/// Every iteration re-solves the depths in closed form and attempts one
/// Levenberg-Marquardt step (Marquardt scaling of the diagonal, damping ×10 on
/// rejection and ÷10 on acceptance), so accepted costs never increase.
pub fn solve_fixed_covariance(
    corrs: &[Correspondence],
    cov: &NoiseCovariance,
    init: &Pose,
    cfg: &InnerSolveConfig,
) -> Result<InnerSolveResult> {
    if corrs.len() < MIN_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_POINTS, got: corrs.len() });
    }
    cfg.validate()?;

    let mut pose = *init;
    let mut scales = optimal_scales(corrs, &pose, cov);
    let mut cost = geometry::cost(corrs, &pose, &scales, cov)?;
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut trace = vec![cost];
    let mut lambda = cfg.damping_initial;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_gn_iterations {
        iterations += 1;
        let (h, g) = normal_equations(corrs, &pose, &scales, cov);
        if !h.iter().chain(g.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteCost);
        }
        if g.norm() < cfg.gradient_tolerance {
            converged = true;
            break;
        }

        let mut damped = h;
        for i in 0..6 {
            damped[(i, i)] += lambda * h[(i, i)];
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = chol.solve(&(-g));
        if step.norm() < cfg.step_tolerance {
            converged = true;
            break;
        }

        let candidate = pose.retract(&step);
        let candidate_scales = optimal_scales(corrs, &candidate, cov);
        let candidate_cost = geometry::cost(corrs, &candidate, &candidate_scales, cov)?;
        if candidate_cost.is_finite() && candidate_cost <= cost {
            pose = candidate;
            scales = candidate_scales;
            cost = candidate_cost;
            trace.push(cost);
            lambda = (lambda / 10.0).max(f64::MIN_POSITIVE);
        } else {
            lambda *= 10.0;
        }
    }

    Ok(InnerSolveResult {
        negative_scale_count: count_negative(&scales),
        pose,
        scales,
        final_cost: cost,
        gn_iterations: iterations,
        converged,
        cost_trace: trace,
    })
}

/// Residuals at `pose` with depths optimal under `cov`.
pub fn concentrated_residuals(
    corrs: &[Correspondence],
    pose: &Pose,
    cov: &NoiseCovariance,
) -> (Vec<f64>, Vec<Vector3<f64>>) {
    let scales = optimal_scales(corrs, pose, cov);
    let residuals = geometry::residuals(corrs, pose, &scales);
    (scales, residuals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_so3, UnitRay};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn along_z(p: Vector3<f64>) -> Correspondence {
        Correspondence::new(p, UnitRay::new(Vector3::z()).unwrap())
    }

    #[test]
    fn optimal_scale_examples() {
        let id = Pose::identity();
        let eye = NoiseCovariance::identity();
        assert_eq!(optimal_scale(&along_z(Vector3::new(0.0, 0.0, 5.0)), &id, &eye), 5.0);

        let shifted = Pose::new(nalgebra::Rotation3::identity(), Vector3::new(1.0, 1.0, 0.0));
        assert_eq!(optimal_scale(&along_z(Vector3::new(1.0, 1.0, 3.0)), &shifted, &eye), 3.0);

        // numerator (0.1,0,2)·diag(1,1,1/4)·(0,0,1) = 0.5, denominator 0.25
        let cov = NoiseCovariance::new(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 4.0))).unwrap();
        assert_relative_eq!(optimal_scale(&along_z(Vector3::new(0.1, 0.0, 2.0)), &id, &cov), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_of_zero_residual_is_zero() {
        let id = Pose::identity();
        let corrs: Vec<_> = (1..8).map(|i| along_z(Vector3::new(0.0, 0.0, i as f64))).collect();
        let scales: Vec<f64> = (1..8).map(|i| i as f64).collect();
        let g = pose_gradient(&corrs, &id, &scales, &NoiseCovariance::identity()).unwrap();
        assert_eq!(g, Vector6::zeros());
    }

    #[test]
    fn translation_gradient_single_point() {
        let id = Pose::identity();
        let c = along_z(Vector3::new(0.3, -0.2, 5.0));
        let e = geometry::residual(&c, &id, 4.5);
        let g = pose_gradient(&[c], &id, &[4.5], &NoiseCovariance::identity()).unwrap();
        assert_relative_eq!(g.fixed_rows::<3>(3).into_owned(), -e, epsilon = 1e-15);
    }

    #[test]
    fn rotation_gradient_is_world_form_in_body_frame() {
        let pose = Pose::new(exp_so3(&Vector3::new(0.2, 0.5, -0.3)), Vector3::new(0.1, 0.2, 0.3));
        let cov = NoiseCovariance::new(Matrix3::new(2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5)).unwrap();
        let corrs: Vec<_> = (0..7)
            .map(|i| {
                let f = i as f64;
                Correspondence::new(
                    Vector3::new(f.sin(), f.cos(), 4.0 + f),
                    UnitRay::new(Vector3::new(0.1 * f, -0.05 * f, 1.0)).unwrap(),
                )
            })
            .collect();
        let scales: Vec<f64> = (0..7).map(|i| 4.0 + i as f64).collect();
        let world_form: Vector3<f64> = corrs
            .iter()
            .zip(&scales)
            .map(|(c, &s)| {
                let e = geometry::residual(c, &pose, s);
                skew(&(s * (pose.rotation * c.ray.as_vector()))) * cov.solve(&e)
            })
            .sum();
        let g = pose_gradient(&corrs, &pose, &scales, &cov).unwrap();
        let expected = -(pose.rotation.inverse() * world_form);
        assert_relative_eq!(g.fixed_rows::<3>(0).into_owned(), expected, epsilon = 1e-12);
    }

    #[test]
    fn rejects_small_input() {
        let corrs: Vec<_> = (1..4).map(|i| along_z(Vector3::new(0.0, 0.0, i as f64))).collect();
        let err = solve_fixed_covariance(&corrs, &NoiseCovariance::identity(), &Pose::identity(), &InnerSolveConfig::default());
        assert_eq!(err.unwrap_err(), Error::InsufficientPoints { needed: 6, got: 3 });
    }
}
