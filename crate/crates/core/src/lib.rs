//! Perspective-n-Point estimation in object space with joint recovery of the
//! pose and of an anisotropic observation-noise covariance.
//!
//! The solvers consume unit projection rays only, so any invertible camera
//! model (see [`camera`]) can feed them. The main entry point is
//! [`gml::solve`], an iterated generalized-least-squares loop that alternates
//! between a conditional covariance estimate and a fixed-covariance
//! maximum-likelihood pose solve ([`ml::solve_fixed_covariance`]).
//!
//! Conventions: a [`Pose`] maps camera-frame vectors into the world frame,
//! so an object point is modelled as `p = s * R * m + t` for a ray `m` and
//! depth `s`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod camera;
mod error;
pub mod geometry;
pub mod gml;
pub mod linear;
pub mod ml;

pub use error::{Error, Result};
pub use geometry::{Correspondence, NoiseCovariance, Pose, UnitRay};
