//! Linear object-space resection used to initialize the iterative solvers.
//!
//! Each ray contributes two equations stating that the camera-frame point
//! `R'p + t'` has no component orthogonal to the ray. The 12 entries of
//! `[R' | t']` are recovered up to scale from the null vector of the stacked
//! system and then projected onto SO(3).

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};

use crate::geometry::{project_to_so3, Correspondence, Pose};
use crate::{Error, Result};

pub const MIN_POINTS: usize = 6;
/// Object points closer than this to a common plane are rejected.
pub const COPLANARITY_TOLERANCE: f64 = 1e-9;
/// Ratio of the second-smallest to the largest singular value below which the
/// system is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Two unit vectors spanning the orthogonal complement of `m`, taken from the
/// first two columns of the Householder reflection sending `m` to `∓e_z`.
pub fn orthogonal_complement(m: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let sign = if m.z >= 0.0 { 1.0 } else { -1.0 };
    let v: Vector3<f64> = m + sign * Vector3::z();
    let k = 2.0 / v.norm_squared();
    let r = Vector3::x() - k * v.x * v;
    let s = Vector3::y() - k * v.y * v;
    (r, s)
}

fn check_not_coplanar(corrs: &[Correspondence], centroid: &Vector3<f64>) -> Result<()> {
    let scatter = corrs.iter().fold(Matrix3::zeros(), |acc, c| {
        let d = c.object - centroid;
        acc + d * d.transpose()
    });
    let eig = SymmetricEigen::new(scatter);
    let min = eig.eigenvalues.imin();
    let normal = eig.eigenvectors.column(min);
    let spread = corrs
        .iter()
        .map(|c| normal.dot(&(c.object - centroid)).abs())
        .fold(0.0, f64::max);
    if spread < COPLANARITY_TOLERANCE {
        return Err(Error::DegenerateGeometry);
    }
    Ok(())
}

/// Linear pose estimate (camera-in-world) from at least six non-coplanar
/// correspondences.
pub fn solve_linear_init(corrs: &[Correspondence]) -> Result<Pose> {
    let n = corrs.len();
    if n < MIN_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_POINTS, got: n });
    }

    let centroid = corrs.iter().map(|c| c.object).sum::<Vector3<f64>>() / n as f64;
    check_not_coplanar(corrs, &centroid)?;
    let spread = corrs.iter().map(|c| (c.object - centroid).norm()).sum::<f64>() / n as f64;
    let normalized: Vec<Vector3<f64>> = corrs.iter().map(|c| (c.object - centroid) / spread).collect();

    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, (c, p)) in corrs.iter().zip(&normalized).enumerate() {
        let (r, s) = orthogonal_complement(c.ray.as_vector());
        for (k, d) in [r, s].iter().enumerate() {
            let row = 2 * i + k;
            for j in 0..3 {
                for l in 0..3 {
                    a[(row, 3 * j + l)] = d[j] * p[l];
                }
                a[(row, 9 + j)] = d[j];
            }
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateGeometry)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = |k: usize| svd.singular_values[order[k]];
    if sv(10) <= RANK_TOLERANCE * sv(0) {
        return Err(Error::DegenerateGeometry);
    }
    let null = v_t.row(order[11]).transpose();

    let mut m = Matrix3::from_row_slice(&null.as_slice()[..9]);
    let mut tau = Vector3::new(null[9], null[10], null[11]);

    let mut depths: Vec<f64> = corrs
        .iter()
        .zip(&normalized)
        .map(|(c, p)| c.ray.as_vector().dot(&(m * p + tau)))
        .collect();
    depths.sort_by(f64::total_cmp);
    if depths[n / 2] < 0.0 {
        m = -m;
        tau = -tau;
    }

    let scale = m.singular_values().sum() / 3.0;
    if !(scale > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let r_wc = project_to_so3(&m);
    // camera-frame point: x = R'p + t' with t' = spread·τ/λ − R'c
    let t_wc = spread * tau / scale - r_wc * centroid;
    Ok(Pose::new(r_wc, t_wc).inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_so3, UnitRay};

    fn scene(pose: &Pose, n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                let x = Vector3::new((f * 0.37).sin() * 1.5, (f * 0.91).cos() * 1.2, 4.0 + (f * 0.53).sin().abs() * 3.0);
                Correspondence::new(pose.transform_point(&x), UnitRay::new(x).unwrap())
            })
            .collect()
    }

    #[test]
    fn complement_is_orthonormal() {
        for m in [Vector3::z(), -Vector3::z(), Vector3::x(), Vector3::new(0.3, -0.4, 0.2).normalize()] {
            let (r, s) = orthogonal_complement(&m);
            assert!(r.dot(&m).abs() < 1e-15 && s.dot(&m).abs() < 1e-15);
            assert!(r.dot(&s).abs() < 1e-15);
            assert!((r.norm() - 1.0).abs() < 1e-15 && (s.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_pose_recovered() {
        let corrs = scene(&Pose::identity(), 12);
        let est = solve_linear_init(&corrs).unwrap();
        assert!((est.rotation.matrix() - Matrix3::identity()).abs().max() < 1e-10);
        assert!(est.translation.norm() < 1e-9);
    }

    #[test]
    fn exact_pose_recovered() {
        let truth = Pose::new(exp_so3(&Vector3::new(0.4, -1.1, 2.0)), Vector3::new(3.0, -1.0, 0.5));
        let est = solve_linear_init(&scene(&truth, 20)).unwrap();
        assert!((est.rotation.matrix() - truth.rotation.matrix()).abs().max() < 1e-10);
        assert!((est.translation - truth.translation).norm() / truth.translation.norm() < 1e-10);
    }

    #[test]
    fn rejects_few_and_planar_points() {
        let corrs = scene(&Pose::identity(), 5);
        assert_eq!(
            solve_linear_init(&corrs),
            Err(Error::InsufficientPoints { needed: 6, got: 5 })
        );
        let planar: Vec<Correspondence> = (0..10)
            .map(|i| {
                let f = i as f64;
                let x = Vector3::new(f.sin(), (2.0 * f).cos(), 5.0);
                Correspondence::new(x, UnitRay::new(x).unwrap())
            })
            .collect();
        assert_eq!(solve_linear_init(&planar), Err(Error::DegenerateGeometry));
    }
}
