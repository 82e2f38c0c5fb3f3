use gmlpnp::bench::{
    generate_scene, random_rotation, rotation_error, run_experiment, run_method, translation_error,
    ExperimentConfig, GridPoint, Method,
};
use gmlpnp::gml::OuterLoopConfig;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        vec![
            GridPoint { n_points: 12, sigma_obj: 0.05, sigma_img: 0.5 },
            GridPoint { n_points: 40, sigma_obj: 0.2, sigma_img: 2.0 },
        ],
        4,
        seed,
    )
}

#[test]
fn identical_seeds_reproduce_records() {
    let a = run_experiment(&config(9)).unwrap();
    let b = run_experiment(&config(9)).unwrap();
    assert_eq!(a.trials.len(), b.trials.len());
    for (x, y) in a.trials.iter().zip(&b.trials) {
        assert_eq!(x.method, y.method);
        assert_eq!(x.trial, y.trial);
        assert_eq!(x.e_rot_deg.to_bits(), y.e_rot_deg.to_bits());
        assert_eq!(x.e_trans_rel.to_bits(), y.e_trans_rel.to_bits());
        assert_eq!((x.outer_iters, x.converged, x.failed), (y.outer_iters, y.converged, y.failed));
    }
    assert_eq!(a.iterations, b.iterations);

    let c = run_experiment(&config(10)).unwrap();
    assert_ne!(a.trials[0].e_rot_deg, c.trials[0].e_rot_deg);
}

#[test]
fn methods_share_the_scene_of_a_trial() {
    let cfg = config(3);
    let out = run_experiment(&cfg).unwrap();
    for (g, grid) in cfg.grid.iter().enumerate() {
        for t in 0..cfg.trials {
            let scene = generate_scene(&cfg.scene_config(g, t), &cfg.noise_config(g)).unwrap();
            for method in Method::ALL {
                let rec = out
                    .trials
                    .iter()
                    .find(|r| r.method == method && r.trial == t && r.n_points == grid.n_points)
                    .unwrap();
                let outcome = run_method(method, &scene, None, &OuterLoopConfig::default()).unwrap();
                let e = rotation_error(&scene.truth.pose.rotation, &outcome.pose.rotation);
                assert_eq!(e.to_bits(), rec.e_rot_deg.to_bits());
            }
        }
    }
}

proptest! {
    #[test]
    fn rotation_error_is_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let ra = random_rotation(&mut ChaCha8Rng::seed_from_u64(a));
        let rb = random_rotation(&mut ChaCha8Rng::seed_from_u64(b));
        prop_assert!((rotation_error(&ra, &rb) - rotation_error(&rb, &ra)).abs() < 1e-9);
        prop_assert!(rotation_error(&ra, &rb) >= 0.0);
    }

    #[test]
    fn translation_error_is_rotation_invariant(
        seed in any::<u64>(),
        gt in prop::array::uniform3(-10.0..10.0f64),
        est in prop::array::uniform3(-10.0..10.0f64),
    ) {
        let (gt, est) = (Vector3::from(gt), Vector3::from(est));
        prop_assume!(gt.norm() > 1e-3);
        let q = random_rotation(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = translation_error(&gt, &est).unwrap();
        let rotated = translation_error(&(q * gt), &(q * est)).unwrap();
        prop_assert!((base - rotated).abs() <= 1e-12 * base.max(1.0));
    }
}
