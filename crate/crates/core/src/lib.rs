//! Reconstruction of dense pre-impact vehicle trajectories from sparse,
//! partially missing accident reports grounded in road geometry.
//!
//! The pipeline: ingest report cases, rebuild dense per-vehicle supervision
//! from survey points and EDR speed samples, encode scene geometry and report
//! semantics, decode lane-anchored trajectories with pairwise refinement, and
//! allocate physically admissible timing along the decoded paths. Training is
//! weakly supervised and staged; evaluation compares against sealed ground
//! truth with keypoint, speed, projection, collision and side metrics.

pub mod autodiff;
pub mod case;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod num;
pub mod supervision;

pub use error::{Error, Result};

/// Concrete scalar used by the learning stack. The geometry layer is generic
/// over [`num::Real`]; everything downstream of the tensor engine is f64.
pub type Scalar = f64;

pub type Vec2 = geometry::Vec2<f64>;
pub type Polyline = geometry::Polyline<f64>;
pub type RoadGeometry = geometry::RoadGeometry<f64>;
pub type RefCurve = supervision::RefCurve<f64>;
