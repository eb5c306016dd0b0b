//! The shared reconstruction time grid.
//!
//! Every dense quantity in the pipeline lives on the same 5 s pre-impact
//! window sampled at 0.1 s: index 0 is t = -5.0 s, index K-1 is impact at
//! t = 0. All modules must use [`time_at`] so boundary comparisons agree
//! bit-for-bit.

/// Number of grid samples over the window.
pub const K: usize = 51;

/// Grid spacing in seconds.
pub const DT: f64 = 0.1;

/// Window start relative to impact, seconds.
pub const T_START: f64 = -5.0;

/// Feet to meters.
pub const FT_TO_M: f64 = 0.3048;

/// Miles per hour to meters per second.
pub const MPH_TO_MPS: f64 = 0.44704;

/// Time of grid index k. Written as (k - 50) * 0.1 so that the endpoints
/// come out exactly -5.0 and 0.0 in f64.
pub fn time_at(k: usize) -> f64 {
    (k as f64 - (K - 1) as f64) * DT
}
