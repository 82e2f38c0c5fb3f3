use thiserror::Error;

/// Errors raised by the solvers, camera models and benchmark helpers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The noise covariance is not symmetric positive-definite (Cholesky failed).
    #[error("noise covariance is not symmetric positive-definite")]
    DegenerateCovariance,
    /// A point lies behind the camera or in the model's blind region.
    #[error("point is behind the camera or outside the projection domain")]
    BehindCamera,
    /// A pixel lies outside the valid image domain of the camera model.
    #[error("pixel is outside the valid domain of the camera model")]
    InvalidPixel,
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    /// The linear resection system is rank deficient (e.g. coplanar points).
    #[error("degenerate point geometry")]
    DegenerateGeometry,
    #[error("cost became non-finite during optimization")]
    NonFiniteCost,
    /// Ground-truth translation too close to zero for a relative error.
    #[error("ground-truth translation norm is too small for a relative error")]
    DegenerateGroundTruth,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
