//! Rotations, poses, rays and the Mahalanobis-weighted object-space cost.

use nalgebra::{Cholesky, Matrix3, Rotation3, Vector3, Vector6, U3};

use crate::{Error, Result};

/// Maximum elementwise deviation of `RᵀR` from identity (and of `det R` from 1)
/// accepted for a valid rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-12;
/// Norm deviation accepted for a unit ray.
pub const UNIT_RAY_TOLERANCE: f64 = 1e-12;
/// Maximum elementwise asymmetry accepted for a covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Distance from π below which `log_so3` switches to the symmetric-part branch.
pub const LOG_NEAR_PI_THRESHOLD: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric matrix with `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues exponential of an axis-angle vector.
pub fn exp_so3(phi: &Vector3<f64>) -> Rotation3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let m = if theta < SMALL_ANGLE {
        Matrix3::identity() + k + 0.5 * k * k
    } else {
        let half = 0.5 * theta;
        let a = theta.sin() / theta;
        let b = 2.0 * (half.sin() / theta).powi(2);
        Matrix3::identity() + a * k + b * k * k
    };
    Rotation3::from_matrix_unchecked(m)
}

/// Logarithm of a rotation, returned as the canonical axis-angle with `‖φ‖ ≤ π`.
///
/// Within [`LOG_NEAR_PI_THRESHOLD`] of π the axis is read from the symmetric
/// part `(R + I) / 2`; its sign follows the antisymmetric part when that is
/// still informative, otherwise the largest axis component is made positive.
pub fn log_so3(r: &Rotation3<f64>) -> Vector3<f64> {
    let m = r.matrix();
    let w = vee(&(m - m.transpose()));
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5 * w.norm();
    let theta = sin.atan2(cos);

    if theta < SMALL_ANGLE {
        return 0.5 * w * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta < LOG_NEAR_PI_THRESHOLD {
        let b = (m + Matrix3::identity()) * 0.5;
        let col = (0..3)
            .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
            .unwrap_or(0);
        let mut axis = b.column(col).into_owned() / b[(col, col)].max(f64::MIN_POSITIVE).sqrt();
        axis.normalize_mut();
        let reference = if w.norm() > 0.0 { w.dot(&axis) } else { axis[col] };
        if reference < 0.0 {
            axis = -axis;
        }
        return theta * axis;
    }
    (theta / (2.0 * sin)) * w
}

/// Max elementwise deviation of `RᵀR` from identity, and of `det R` from 1.
pub fn rotation_defect(m: &Matrix3<f64>) -> f64 {
    let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
    ortho.max((m.determinant() - 1.0).abs())
}

pub fn is_valid_rotation(m: &Matrix3<f64>) -> bool {
    m.iter().all(|x| x.is_finite()) && rotation_defect(m) <= ROTATION_TOLERANCE
}

/// Closest rotation to `m` in Frobenius norm (orthogonal Procrustes with
/// determinant-sign correction).
pub fn project_to_so3(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("3x3 SVD with u requested");
    let v_t = svd.v_t.expect("3x3 SVD with v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fix = u;
        u_fix.column_mut(2).neg_mut();
        r = u_fix * v_t;
    }
    Rotation3::from_matrix_unchecked(r)
}

/// Rigid transform mapping camera-frame vectors into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation3::identity(), Vector3::zeros())
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Manifold update: `R ← R·exp(δφ)`, `t ← t + δt` with `delta = [δφ, δt]`.
    /// The rotation is re-projected onto SO(3) when drift exceeds tolerance.
    pub fn retract(&self, delta: &Vector6<f64>) -> Self {
        let dphi = delta.fixed_rows::<3>(0).into_owned();
        let dt = delta.fixed_rows::<3>(3).into_owned();
        let rotation = (self.rotation * exp_so3(&dphi)).renormalized();
        Self::new(rotation, self.translation + dt)
    }
}

/// Re-orthonormalization policy shared by every rotation update.
pub trait Renormalize {
    fn renormalized(self) -> Self;
}

impl Renormalize for Rotation3<f64> {
    fn renormalized(self) -> Self {
        if rotation_defect(self.matrix()) <= 0.25 * ROTATION_TOLERANCE {
            self
        } else {
            project_to_so3(self.matrix())
        }
    }
}

/// Unit-norm projection ray in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRay(Vector3<f64>);

impl UnitRay {
    /// Normalizes `v`; fails on zero or non-finite input. Vectors already of
    /// unit length within [`UNIT_RAY_TOLERANCE`] are kept bit-for-bit.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput("ray must be finite and non-zero".into()));
        }
        if (norm - 1.0).abs() <= UNIT_RAY_TOLERANCE {
            return Ok(Self(v));
        }
        Ok(Self(v / norm))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// An object point paired with its projection ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub object: Vector3<f64>,
    pub ray: UnitRay,
}

impl Correspondence {
    pub fn new(object: Vector3<f64>, ray: UnitRay) -> Self {
        Self { object, ray }
    }
}

/// Symmetric positive-definite 3×3 covariance of object-space noise.
///
/// The Cholesky factor is computed once at construction; all weighted
/// quantities go through it instead of an explicit inverse.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    matrix: Matrix3<f64>,
    chol: Cholesky<f64, U3>,
}

impl PartialEq for NoiseCovariance {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl NoiseCovariance {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::DegenerateCovariance);
        }
        if (matrix - matrix.transpose()).abs().max() > SYMMETRY_TOLERANCE {
            return Err(Error::DegenerateCovariance);
        }
        let chol = Cholesky::new(matrix).ok_or(Error::DegenerateCovariance)?;
        if !chol.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(Error::DegenerateCovariance);
        }
        Ok(Self { matrix, chol })
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is SPD")
    }

    pub fn isotropic(variance: f64) -> Result<Self> {
        Self::new(Matrix3::identity() * variance)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// `L⁻¹ v` where `Σ = L Lᵀ`; `‖whiten(v)‖² = vᵀΣ⁻¹v`.
    pub fn whiten(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky diagonal is positive")
    }

    /// Applies `L⁻¹` to every column of `m`.
    pub fn whiten_matrix<const C: usize>(
        &self,
        m: &nalgebra::SMatrix<f64, 3, C>,
    ) -> nalgebra::SMatrix<f64, 3, C> {
        let mut out = *m;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `Σ⁻¹ v`.
    pub fn solve(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.chol.solve(v)
    }

    pub fn mahalanobis_sq(&self, e: &Vector3<f64>) -> f64 {
        self.whiten(e).norm_squared()
    }

    pub fn determinant(&self) -> f64 {
        self.chol.determinant()
    }
}

/// `e = p − (s·R·m + t)`.
pub fn residual(c: &Correspondence, pose: &Pose, scale: f64) -> Vector3<f64> {
    c.object - (scale * (pose.rotation * c.ray.as_vector()) + pose.translation)
}

pub fn residuals(corrs: &[Correspondence], pose: &Pose, scales: &[f64]) -> Vec<Vector3<f64>> {
    corrs
        .iter()
        .zip(scales)
        .map(|(c, &s)| residual(c, pose, s))
        .collect()
}

/// `eᵀ Σ⁻¹ e`.
pub fn mahalanobis_sq(e: &Vector3<f64>, cov: &NoiseCovariance) -> f64 {
    cov.mahalanobis_sq(e)
}

/// `½ Σᵢ ‖eᵢ‖²_Σ`.
pub fn cost(
    corrs: &[Correspondence],
    pose: &Pose,
    scales: &[f64],
    cov: &NoiseCovariance,
) -> Result<f64> {
    if scales.len() != corrs.len() {
        return Err(Error::InvalidInput(format!(
            "{} scales for {} correspondences",
            scales.len(),
            corrs.len()
        )));
    }
    Ok(0.5
        * corrs
            .iter()
            .zip(scales)
            .map(|(c, &s)| cov.mahalanobis_sq(&residual(c, pose, s)))
            .sum::<f64>())
}
