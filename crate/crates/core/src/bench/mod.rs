//! Synthetic benchmark: scene generation with anisotropic noise, error
//! metrics, paired multi-trial experiments and CSV output.

mod experiment;
mod metrics;
mod scene;
pub mod stats;

pub use experiment::{
    mean_iteration_trace, run_experiment, run_method, summarize, trial_seed, write_iterations_csv,
    write_trials_csv, ExperimentConfig, ExperimentOutput, GridPoint, IterationRecord, Method,
    MethodOutcome, Summary, TrialRecord,
};
pub use metrics::{frobenius_error, rotation_error, translation_error};
pub use scene::{
    anisotropic_covariance, generate_scene, perturb_pose, random_rotation, BoxRange, GroundTruth,
    NoiseConfig, Scene, SceneConfig,
};
