//! Pose tracking for articulated kinematic models from labeled 3D marker
//! measurements.
//!
//! The tracker runs a sample-based nonlinear Kalman filter over a state made
//! of root position, root orientation, and one unconstrained parameter per
//! joint. Joint limits are honored by construction through a periodic
//! reparameterization, so no estimate ever needs clamping. A synthetic
//! motion generator with an occlusion simulator doubles as the verification
//! harness, and a damped-least-squares framewise fitter serves as the
//! baseline comparator.

pub mod baseline;
pub mod error;
pub mod eval;
pub mod filter;
pub mod io;
pub mod kinematics;
pub mod synth;
pub mod tracker;
pub mod transform;

pub use error::{Error, Result};
