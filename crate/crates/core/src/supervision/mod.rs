//! Dense supervision reconstruction: sparse EDR speeds and surveyed points
//! become K-step reliability-masked references, traced backward from the
//! impact-aligned endpoint along a smooth fitted path.

mod curve;
mod edr;
pub mod sidecar;
mod trace;

pub use curve::RefCurve;
pub use edr::{interpolate_edr, weak_speed_prior, EDR_MIN_COVERAGE, EDR_MIN_OBS};
pub use trace::{backward_trace, build_supervision, truncate_at_impact, TruncateOutcome};

use crate::grid::K;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedSource {
    Edr,
    SpeedLimitPrior,
}

/// Speeds on the canonical grid plus reliability bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    /// K speeds, m/s. Entries outside the observed span are filled by
    /// endpoint hold so integration is defined, and masked invalid.
    pub samples: [f64; K],
    pub valid_mask: [bool; K],
    pub source: SpeedSource,
    /// Fraction of the 5 s window covered by observations.
    pub coverage: f64,
    pub n_obs: usize,
}

impl SpeedProfile {
    /// EDR evidence strong enough to supervise speed directly.
    pub fn reliable(&self) -> bool {
        self.source == SpeedSource::Edr && self.coverage >= EDR_MIN_COVERAGE && self.n_obs >= EDR_MIN_OBS
    }
}

/// One vehicle's dense reference states.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSupervision {
    pub v: [f64; K],
    pub x: [f64; K],
    pub y: [f64; K],
    pub theta: [f64; K],
    /// Strongly usable step: position on the fitted curve and speed inside
    /// the observed span. Extrapolated steps keep values but are masked.
    pub step_valid: [bool; K],
    pub speed_strong: bool,
    /// Transition teacher signal: grid time of the largest combined jump in
    /// discrete curvature change and acceleration change along the reference.
    pub tau_star: f64,
    pub truncation_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSupervision {
    pub vehicles: [Option<VehicleSupervision>; crate::case::SLOTS],
}

impl DenseSupervision {
    pub fn empty() -> Self {
        DenseSupervision { vehicles: std::array::from_fn(|_| None) }
    }

    pub fn vehicle_valid(&self, slot: usize) -> bool {
        self.vehicles[slot].is_some()
    }
}
