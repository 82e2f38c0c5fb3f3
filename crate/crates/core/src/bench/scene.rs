use nalgebra::{Matrix2, Matrix3, Quaternion, Rotation2, Rotation3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, CameraModel};
use crate::geometry::{exp_so3, Correspondence, NoiseCovariance, Pose};
use crate::{Error, Result};

/// Axis-aligned sampling box in the camera frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRange {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for BoxRange {
    /// `[-2, 2] × [-2, 2] × [4, 8]`.
    fn default() -> Self {
        Self { min: [-2.0, -2.0, 4.0], max: [2.0, 2.0, 8.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    pub bounds: BoxRange,
    pub camera: Camera,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Dominant standard deviation of object-point noise (meters).
    pub sigma_obj: f64,
    /// Dominant standard deviation of image-point noise (pixels).
    pub sigma_img: f64,
    pub anisotropic: bool,
    /// Replaces the randomly drawn object-noise covariance (world frame).
    pub fixed_covariance: Option<Matrix3<f64>>,
}

impl NoiseConfig {
    pub fn new(sigma_obj: f64, sigma_img: f64) -> Self {
        Self { sigma_obj, sigma_img, anisotropic: true, fixed_covariance: None }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub pose: Pose,
    /// True object-noise covariance; zero when `sigma_obj == 0`.
    pub covariance: Matrix3<f64>,
    pub clean: Vec<Correspondence>,
    pub clean_pixels: Vec<Vector2<f64>>,
}

impl GroundTruth {
    pub fn noise_covariance(&self) -> Result<NoiseCovariance> {
        NoiseCovariance::new(self.covariance)
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub truth: GroundTruth,
    pub correspondences: Vec<Correspondence>,
    /// Noisy pixels the rays of `correspondences` were unprojected from.
    pub pixels: Vec<Vector2<f64>>,
}

/// Uniform rotation from a normalized 4-D Gaussian (uniform on S³).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if q.norm() > 1e-12 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        }
    }
}

fn secondary_sigma<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        rng.random_range(1e-6 * sigma..sigma)
    } else {
        0.0
    }
}

/// `Σ = R_o·diag(σ², σ₁², σ₂²)·R_oᵀ` with `R_o` uniform and
/// `σ₁, σ₂ ~ U(10⁻⁶σ, σ)`. Returns `(Σ, R_o·diag(σ, σ₁, σ₂))`, the second
/// being a square-root factor for sampling.
pub fn anisotropic_covariance<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> (Matrix3<f64>, Matrix3<f64>) {
    let r_o = random_rotation(rng);
    let s1 = secondary_sigma(sigma, rng);
    let s2 = secondary_sigma(sigma, rng);
    let factor = r_o.matrix() * Matrix3::from_diagonal(&Vector3::new(sigma, s1, s2));
    let cov = factor * factor.transpose();
    (0.5 * (cov + cov.transpose()), factor)
}

fn image_noise_factor<R: Rng + ?Sized>(sigma: f64, anisotropic: bool, rng: &mut R) -> Matrix2<f64> {
    if !anisotropic {
        return Matrix2::identity() * sigma;
    }
    let alpha = rng.random_range(0.0..std::f64::consts::TAU);
    let s1 = secondary_sigma(sigma, rng);
    Rotation2::new(alpha).matrix() * Matrix2::from_diagonal(&Vector2::new(sigma, s1))
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Random volumetric scene seen by the configured camera, with object noise
/// `N(0, Σ*)` added to the world points and 2-D noise added to the pixels
/// before unprojection.
pub fn generate_scene(cfg: &SceneConfig, noise: &NoiseConfig) -> Result<Scene> {
    if cfg.n_points < 6 {
        return Err(Error::InsufficientPoints { needed: 6, got: cfg.n_points });
    }
    if (0..3).any(|k| !(cfg.bounds.max[k] > cfg.bounds.min[k])) {
        return Err(Error::InvalidInput("sampling box is degenerate".into()));
    }
    if !(noise.sigma_obj >= 0.0 && noise.sigma_img >= 0.0) {
        return Err(Error::InvalidInput("noise levels must be non-negative".into()));
    }
    cfg.camera.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let rotation = random_rotation(&mut rng);
    let (covariance, obj_factor) = match noise.fixed_covariance {
        Some(cov) => {
            let factor = cov.cholesky().ok_or(Error::DegenerateCovariance)?.l();
            (cov, factor)
        }
        None if noise.anisotropic => anisotropic_covariance(noise.sigma_obj, &mut rng),
        None => {
            let s = noise.sigma_obj;
            (Matrix3::identity() * s * s, Matrix3::identity() * s)
        }
    };
    let img_factor = image_noise_factor(noise.sigma_img, noise.anisotropic, &mut rng);

    let camera_points: Vec<Vector3<f64>> = (0..cfg.n_points)
        .map(|_| Vector3::from_fn(|k, _| rng.random_range(cfg.bounds.min[k]..cfg.bounds.max[k])))
        .collect();
    let centroid = camera_points.iter().sum::<Vector3<f64>>() / cfg.n_points as f64;
    let pose = Pose::new(rotation, -(rotation * centroid));

    let mut clean = Vec::with_capacity(cfg.n_points);
    let mut clean_pixels = Vec::with_capacity(cfg.n_points);
    let mut noisy = Vec::with_capacity(cfg.n_points);
    let mut pixels = Vec::with_capacity(cfg.n_points);
    for x in &camera_points {
        let world = pose.transform_point(x);
        let pixel = cfg.camera.project(x)?;
        clean.push(Correspondence::new(world, cfg.camera.unproject(&pixel)?));
        clean_pixels.push(pixel);

        let obj_noise = obj_factor * gaussian3(&mut rng);
        let img_noise = img_factor * Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let noisy_pixel = pixel + img_noise;
        noisy.push(Correspondence::new(world + obj_noise, cfg.camera.unproject(&noisy_pixel)?));
        pixels.push(noisy_pixel);
    }

    Ok(Scene {
        truth: GroundTruth { pose, covariance, clean, clean_pixels },
        correspondences: noisy,
        pixels,
    })
}

/// Perturbs `pose` by a rotation of uniform random axis and angle in
/// `[0, max_angle_deg]`, and a translation offset of uniform random direction
/// and length in `[0, max_translation_fraction·‖t‖]`.
pub fn perturb_pose<R: Rng + ?Sized>(
    pose: &Pose,
    max_angle_deg: f64,
    max_translation_fraction: f64,
    rng: &mut R,
) -> Pose {
    let axis = loop {
        let v = gaussian3(rng);
        if v.norm() > 1e-12 {
            break v.normalize();
        }
    };
    let angle = rng.random_range(0.0..=max_angle_deg.to_radians());
    let dir = loop {
        let v = gaussian3(rng);
        if v.norm() > 1e-12 {
            break v.normalize();
        }
    };
    let offset = rng.random_range(0.0..=max_translation_fraction) * pose.translation.norm();
    Pose::new(pose.rotation * exp_so3(&(angle * axis)), pose.translation + offset * dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::is_valid_rotation;

    fn cfg(seed: u64) -> SceneConfig {
        SceneConfig { n_points: 30, bounds: BoxRange::default(), camera: Camera::default(), rng_seed: seed }
    }

    #[test]
    fn zero_noise_gives_clean_data() {
        let noise = NoiseConfig::new(0.0, 0.0);
        let scene = generate_scene(&cfg(1), &noise).unwrap();
        assert_eq!(scene.correspondences, scene.truth.clean);
        assert_eq!(scene.pixels, scene.truth.clean_pixels);
        for c in &scene.truth.clean {
            let x = scene.truth.pose.inverse().transform_point(&c.object);
            assert!((x.normalize() - c.ray.as_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let noise = NoiseConfig::new(0.1, 1.0);
        let a = generate_scene(&cfg(42), &noise).unwrap();
        let b = generate_scene(&cfg(42), &noise).unwrap();
        assert_eq!(a.correspondences, b.correspondences);
        assert_eq!(a.truth.covariance, b.truth.covariance);
        let c = generate_scene(&cfg(43), &noise).unwrap();
        assert_ne!(a.correspondences, c.correspondences);
    }

    #[test]
    fn orientation_and_noise_model_independent_of_point_count() {
        let noise = NoiseConfig::new(0.1, 1.0);
        let a = generate_scene(&cfg(9), &noise).unwrap();
        let b = generate_scene(&SceneConfig { n_points: 300, ..cfg(9) }, &noise).unwrap();
        assert_eq!(a.truth.pose.rotation, b.truth.pose.rotation);
        assert_eq!(a.truth.covariance, b.truth.covariance);
    }

    #[test]
    fn fixed_covariance_is_used() {
        let cov = Matrix3::from_diagonal(&Vector3::new(0.04, 0.01, 0.0025));
        let noise = NoiseConfig { fixed_covariance: Some(cov), ..NoiseConfig::new(0.2, 1.0) };
        let scene = generate_scene(&cfg(5), &noise).unwrap();
        assert_eq!(scene.truth.covariance, cov);
    }

    #[test]
    fn world_origin_at_centroid() {
        let noise = NoiseConfig::new(0.0, 0.0);
        let scene = generate_scene(&cfg(2), &noise).unwrap();
        let centroid: Vector3<f64> =
            scene.truth.clean.iter().map(|c| c.object).sum::<Vector3<f64>>() / 30.0;
        assert!(centroid.norm() < 1e-12);
        assert!(is_valid_rotation(scene.truth.pose.rotation.matrix()));
    }

    #[test]
    fn noise_sample_covariance_matches_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (cov, factor) = anisotropic_covariance(0.1, &mut rng);
        let n = 100_000;
        let mut acc = Matrix3::zeros();
        for _ in 0..n {
            let e = factor * gaussian3(&mut rng);
            acc += e * e.transpose();
        }
        let sample = acc / n as f64;
        assert!((sample - cov).norm() < 0.02 * cov.norm());
    }

    #[test]
    fn covariance_is_spd_for_positive_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let (cov, _) = anisotropic_covariance(0.3, &mut rng);
            assert!(NoiseCovariance::new(cov).is_ok());
            let eig = cov.symmetric_eigenvalues();
            assert!(eig.max() <= 0.09 + 1e-12);
        }
    }

    #[test]
    fn perturbation_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pose = Pose::new(random_rotation(&mut rng), Vector3::new(3.0, 4.0, 0.0));
        for _ in 0..200 {
            let p = perturb_pose(&pose, 10.0, 0.1, &mut rng);
            let angle = crate::geometry::log_so3(&(pose.rotation.inverse() * p.rotation)).norm();
            assert!(angle.to_degrees() <= 10.0 + 1e-9);
            assert!((p.translation - pose.translation).norm() <= 0.5 + 1e-12);
        }
    }
}
