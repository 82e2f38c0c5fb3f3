use std::path::Path;
use std::process::{Command, Output};

use gmlpnp::bench::{generate_scene, BoxRange, NoiseConfig, SceneConfig};
use gmlpnp::camera::{Camera, CameraModel};
use gmlpnp_cli::commands::{solve_input, SolveOptions};
use gmlpnp_cli::schema::{CorrespondenceJson, PoseJson, SolveInput, SolveReportJson};

fn gmlpnp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmlpnp")).args(args).current_dir(dir).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn noisy_input(n: usize, seed: u64) -> (SolveInput, SolveInput) {
    let camera = Camera::default();
    let cfg = SceneConfig { n_points: n, bounds: BoxRange::default(), camera, rng_seed: seed };
    let scene = generate_scene(&cfg, &NoiseConfig::new(0.1, 1.0)).unwrap();
    let objects: Vec<[f64; 3]> = scene.correspondences.iter().map(|c| c.object.into()).collect();
    let pixels = SolveInput {
        camera: Some(camera),
        correspondences: objects
            .iter()
            .zip(&scene.pixels)
            .map(|(o, u)| CorrespondenceJson { object: *o, pixel: Some((*u).into()), ray: None })
            .collect(),
        ground_truth: Some(PoseJson::from_pose(&scene.truth.pose)),
        initial_pose: None,
    };
    let rays = SolveInput {
        camera: None,
        correspondences: objects
            .iter()
            .zip(&scene.pixels)
            .map(|(o, u)| CorrespondenceJson {
                object: *o,
                pixel: None,
                ray: Some((*camera.unproject(u).unwrap().as_vector()).into()),
            })
            .collect(),
        ..pixels.clone()
    };
    (pixels, rays)
}

#[test]
fn emitted_noise_free_case_is_solved_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmlpnp(&["bench", "--n", "20", "--sigma", "0", "--seed", "3", "--emit-case", "case.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));

    let out = gmlpnp(&["solve", "case.json", "--init", "linear"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: SolveReportJson = serde_json::from_slice(&out.stdout).unwrap();
    let errors = report.errors.unwrap();
    assert!(errors.rotation_deg < 1e-6);
    assert!(errors.translation_rel.unwrap() < 1e-8);
    assert!(report.pose.rotation[0] >= 0.0);
    assert_eq!(report.scales.len(), 20);
}

#[test]
fn pixel_and_ray_inputs_agree() {
    let (pixels, rays) = noisy_input(40, 5);
    let a = solve_input(&pixels, &SolveOptions::default()).unwrap();
    let b = solve_input(&rays, &SolveOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_round_trips_through_json() {
    let (input, _) = noisy_input(30, 6);
    let report = solve_input(&input, &SolveOptions::default()).unwrap();
    let text = serde_json::to_string(&report).unwrap();
    let back: SolveReportJson = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
}

#[test]
fn exit_codes_distinguish_input_and_solver_failures() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| std::fs::write(dir.path().join(name), text).unwrap();

    write("empty.json", r#"{"correspondences": []}"#);
    let out = gmlpnp(&["solve", "empty.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("insufficient points"), "{}", stderr(&out));

    let few: Vec<String> = (0..4)
        .map(|i| format!(r#"{{"object": [{i}, {}, 5], "ray": [0, 0, 1]}}"#, i * i))
        .collect();
    write("few.json", &format!(r#"{{"correspondences": [{}]}}"#, few.join(",")));
    let out = gmlpnp(&["solve", "few.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("insufficient points"));

    write("bad.json", r#"{"correspondences": [{"object": [1, 2, 3], "ray": [0, "a", 1]}]}"#);
    let out = gmlpnp(&["solve", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("correspondences[0].ray"), "{}", stderr(&out));

    let out = gmlpnp(&["solve", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    write("no_init.json", r#"{"correspondences": [{"object": [1, 2, 3], "ray": [0, 0, 1]}]}"#);
    let out = gmlpnp(&["solve", "no_init.json", "--init", "file"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_output_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = gmlpnp(&["bench", "--trials", "1", "--out", "blocker/sub"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_convergence_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmlpnp(&["convergence", "--trials", "1", "--seed", "1", "--out", "."], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed=1"));

    let mut reader = csv::Reader::from_path(dir.path().join("iterations.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty() && rows.len() <= 10);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(&row[1], "0");
        assert_eq!(row[2].parse::<usize>().unwrap(), k);
        assert!((3..6).all(|c| row[c].parse::<f64>().unwrap().is_finite()));
    }
}
