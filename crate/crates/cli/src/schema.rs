//! JSON formats read and written by `gmlpnp solve`.
//!
//! Input:
//!
//! ```json
//! {
//!   "camera": { "model": "pinhole", "fx": 800, "fy": 800, "cx": 320, "cy": 240 },
//!   "correspondences": [ { "object": [0.1, 0.2, 5.0], "pixel": [330.1, 251.4] } ],
//!   "ground_truth": { "rotation": [1, 0, 0, 0], "translation": [0, 0, 0] },
//!   "initial_pose": { "rotation": [1, 0, 0, 0], "translation": [0, 0, 0] }
//! }
//! ```
//!
//! Each correspondence carries a `ray` or a `pixel`; a ray wins when both are
//! present, and pixels require `camera`. Rotations are unit quaternions
//! `[w, x, y, z]`, written with `w ≥ 0`.

use anyhow::{anyhow, bail, Context};
use gmlpnp::bench::{rotation_error, translation_error};
use gmlpnp::camera::{Camera, CameraModel};
use gmlpnp::gml::{IterationDiagnostics, SolveReport};
use gmlpnp::{Correspondence, Pose, UnitRay};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseJson {
    pub fn from_pose(pose: &Pose) -> Self {
        let q = UnitQuaternion::from_rotation_matrix(&pose.rotation);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        Self { rotation: [q.w, q.i, q.j, q.k], translation: pose.translation.into() }
    }

    pub fn to_pose(&self) -> anyhow::Result<Pose> {
        let [w, x, y, z] = self.rotation;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() > 1e-12) || !self.translation.iter().all(|v| v.is_finite()) {
            bail!("pose needs a non-zero finite quaternion and a finite translation");
        }
        let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Ok(Pose::new(r, Vector3::from(self.translation)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceJson {
    pub object: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ray: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Camera>,
    pub correspondences: Vec<CorrespondenceJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PoseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_pose: Option<PoseJson>,
}

impl SolveInput {
    /// Parses the input, naming the offending field on failure.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| anyhow!("{}: {}", e.path(), e.inner()))
    }

    /// Observations as rays, unprojecting pixels through `camera`.
    pub fn to_correspondences(&self) -> anyhow::Result<Vec<Correspondence>> {
        if let Some(camera) = &self.camera {
            camera.validate().context("camera")?;
        }
        self.correspondences
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let at = || format!("correspondences[{i}]");
                let object = Vector3::from(c.object);
                if !object.iter().all(|v| v.is_finite()) {
                    bail!("{}.object: coordinates must be finite", at());
                }
                let ray = match (c.ray, c.pixel, &self.camera) {
                    (Some(r), _, _) => UnitRay::new(Vector3::from(r)).with_context(|| format!("{}.ray", at()))?,
                    (None, Some(u), Some(camera)) => camera
                        .unproject(&Vector2::from(u))
                        .with_context(|| format!("{}.pixel", at()))?,
                    (None, Some(_), None) => bail!("{}.pixel: pixel observations need a `camera`", at()),
                    (None, None, _) => bail!("{}: missing field `ray` or `pixel`", at()),
                };
                Ok(Correspondence::new(object, ray))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationJson {
    pub iteration: usize,
    /// Row-major.
    pub covariance: [f64; 9],
    pub det_v: f64,
    pub cost: f64,
    pub negative_scale_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorJson {
    pub rotation_deg: f64,
    #[serde(default)]
    pub translation_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReportJson {
    pub pose: PoseJson,
    /// Row-major.
    pub covariance: [f64; 9],
    pub scales: Vec<f64>,
    pub iterations: Vec<IterationJson>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<PoseErrorJson>,
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (k, v) in out.iter_mut().enumerate() {
        *v = m[(k / 3, k % 3)];
    }
    out
}

impl From<&IterationDiagnostics> for IterationJson {
    fn from(it: &IterationDiagnostics) -> Self {
        Self {
            iteration: it.iteration,
            covariance: row_major(it.covariance.matrix()),
            det_v: it.det_v,
            cost: it.cost,
            negative_scale_count: it.negative_scale_count,
        }
    }
}

impl SolveReportJson {
    pub fn new(report: &SolveReport, ground_truth: Option<&Pose>) -> Self {
        let errors = ground_truth.map(|gt| PoseErrorJson {
            rotation_deg: rotation_error(&gt.rotation, &report.pose.rotation),
            translation_rel: translation_error(&gt.translation, &report.pose.translation).ok(),
        });
        Self {
            pose: PoseJson::from_pose(&report.pose),
            covariance: row_major(report.covariance.matrix()),
            scales: report.scales.clone(),
            iterations: report.iterations.iter().map(IterationJson::from).collect(),
            converged: report.converged,
            errors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gmlpnp::geometry::exp_so3;

    #[test]
    fn quaternion_has_non_negative_w() {
        let pose = Pose::new(exp_so3(&Vector3::new(0.0, 0.0, 3.0)), Vector3::zeros());
        let json = PoseJson::from_pose(&pose);
        assert!(json.rotation[0] >= 0.0);
        let back = json.to_pose().unwrap();
        assert!((back.rotation.matrix() - pose.rotation.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn missing_fields_are_named() {
        let cases = [
            (r#"{}"#, "missing field `correspondences`"),
            (r#"{"correspondences": [{"ray": [0, 0, 1]}]}"#, "correspondences[0]: missing field `object`"),
            (
                r#"{"correspondences": [], "ground_truth": {"rotation": [1, 0, 0, 0]}}"#,
                "ground_truth: missing field `translation`",
            ),
            (
                r#"{"correspondences": [], "ground_truth": {"translation": [0, 0, 0]}}"#,
                "ground_truth: missing field `rotation`",
            ),
            (r#"{"camera": {"model": "pinhole", "fx": 1, "fy": 1, "cx": 0}, "correspondences": []}"#, "missing field `cy`"),
            (r#"{"correspondences": [{"object": [1, 2]}]}"#, "correspondences[0].object"),
        ];
        for (text, expected) in cases {
            let err = SolveInput::from_json(text).unwrap_err().to_string();
            assert!(err.contains(expected), "`{err}` lacks `{expected}`");
        }
        let input = SolveInput::from_json(r#"{"correspondences": [{"object": [1, 2, 3]}]}"#).unwrap();
        let err = input.to_correspondences().unwrap_err().to_string();
        assert!(err.contains("correspondences[0]: missing field `ray` or `pixel`"), "{err}");
    }

    #[test]
    fn ray_takes_precedence_over_pixel() {
        let input = SolveInput::from_json(
            r#"{"camera": {"model": "pinhole", "fx": 100, "fy": 100, "cx": 0, "cy": 0},
                "correspondences": [{"object": [0, 0, 1], "pixel": [50, 0], "ray": [0, 0, 2]}]}"#,
        )
        .unwrap();
        let corrs = input.to_correspondences().unwrap();
        assert_eq!(*corrs[0].ray.as_vector(), Vector3::z());
    }

    #[test]
    fn pixels_need_a_camera() {
        let input = SolveInput::from_json(r#"{"correspondences": [{"object": [0, 0, 1], "pixel": [1, 2]}]}"#).unwrap();
        assert!(input.to_correspondences().unwrap_err().to_string().contains("need a `camera`"));
    }
}
