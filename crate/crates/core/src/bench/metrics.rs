use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::{Error, Result};

/// Largest angle, in degrees, between corresponding columns of the two
/// rotation matrices.
///
/// The column angle `arccos(aᵀb)` is evaluated as `atan2(‖a×b‖, aᵀb)`, which
/// keeps full precision for nearly parallel columns (plain `acos` bottoms
/// out around 1e-6° in double precision).
pub fn rotation_error(gt: &Rotation3<f64>, est: &Rotation3<f64>) -> f64 {
    (0..3)
        .map(|k| {
            let a = gt.matrix().column(k);
            let b = est.matrix().column(k);
            let cos = a.dot(&b).clamp(-1.0, 1.0);
            a.cross(&b).norm().atan2(cos).to_degrees()
        })
        .fold(0.0, f64::max)
}

/// `‖t_gt − t_est‖ / ‖t_gt‖`.
pub fn translation_error(gt: &Vector3<f64>, est: &Vector3<f64>) -> Result<f64> {
    let norm = gt.norm();
    if !(norm >= 1e-12) {
        return Err(Error::DegenerateGroundTruth);
    }
    Ok((gt - est).norm() / norm)
}

pub fn frobenius_error(est: &Matrix3<f64>, truth: &Matrix3<f64>) -> f64 {
    (est - truth).norm()
}
