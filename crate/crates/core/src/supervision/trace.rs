//! Impact alignment and backward tracing along the reference curve.

use super::{RefCurve, SpeedProfile, SpeedSource, VehicleSupervision};
use crate::case::{AccidentCase, RawPoint};
use crate::error::Result;
use crate::geometry::Vec2;
use crate::grid::{time_at, DT, K};
use crate::supervision::{interpolate_edr, weak_speed_prior, DenseSupervision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncateOutcome {
    /// No point matched within tolerance; the last observation was used.
    pub fallback: bool,
}

/// Keeps points up to the collision-related endpoint: the point closest to
/// a* among those within `match_tol` (latest on ties, so the retained path
/// ends as close to impact as the evidence allows). No match keeps the full
/// list with the fallback flag set.
pub fn truncate_at_impact(
    points: &[RawPoint],
    a_star: Vec2<f64>,
    match_tol: f64,
) -> (Vec<RawPoint>, TruncateOutcome) {
    assert!(!points.is_empty(), "truncate_at_impact needs points");
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = p.pos.dist(a_star);
        if d <= match_tol {
            let better = match best {
                None => true,
                Some((_, bd)) => d <= bd,
            };
            if better {
                best = Some((i, d));
            }
        }
    }
    match best {
        Some((idx, _)) => (points[..=idx].to_vec(), TruncateOutcome { fallback: false }),
        None => (points.to_vec(), TruncateOutcome { fallback: true }),
    }
}

/// Pacing trust per grid step: interpolated EDR spans are trusted inside
/// coverage; held constants (priors, single-record EDR) are trusted
/// everywhere because they assert exactly that constant.
fn pacing_valid(profile: &SpeedProfile, k: usize) -> bool {
    match profile.source {
        SpeedSource::SpeedLimitPrior => true,
        SpeedSource::Edr => {
            if profile.n_obs <= 1 {
                true
            } else {
                profile.valid_mask[k]
            }
        }
    }
}

/// Traces positions backward from the curve end (the impact-aligned
/// endpoint) so that the distance left to travel at t_k equals the integral
/// of the speed profile over [t_k, 0]. Steps that run off the curve start
/// are extrapolated along the initial tangent and masked weakly valid.
pub fn backward_trace(curve: &RefCurve<f64>, profile: &SpeedProfile) -> Result<VehicleSupervision> {
    let total = curve.total_length();
    if !(total > 0.0) {
        return Err(crate::error::Error::Supervision("curve has zero length".into()));
    }

    // ell[k] = integral of v over [t_k, 0]; trapezoid is exact for the
    // piecewise-linear profile.
    let mut ell = [0.0; K];
    for k in (0..K - 1).rev() {
        ell[k] = ell[k + 1] + 0.5 * (profile.samples[k] + profile.samples[k + 1]) * DT;
    }

    let start = curve.start_point();
    let t0 = curve.start_tangent();
    let h0 = t0.y.atan2(t0.x);

    let mut out = VehicleSupervision {
        v: [0.0; K],
        x: [0.0; K],
        y: [0.0; K],
        theta: [0.0; K],
        step_valid: [false; K],
        speed_strong: profile.reliable(),
        tau_star: 0.0,
        truncation_fallback: false,
    };

    for k in 0..K {
        let s = total - ell[k];
        let (p, th, on_curve) = if s >= 0.0 {
            (curve.point_at_arc(s), curve.heading_at_arc(s), true)
        } else {
            // s is negative: continue straight backward past the curve start
            (start + t0.scale(s), h0, false)
        };
        out.v[k] = profile.samples[k];
        out.x[k] = p.x;
        out.y[k] = p.y;
        out.theta[k] = th;
        out.step_valid[k] = on_curve && pacing_valid(profile, k);
    }

    out.tau_star = recompute_tau_star(&out);
    Ok(out)
}

/// Teacher transition time: grid time of the maximum combined change in
/// discrete acceleration and discrete curvature along the reference. A
/// featureless reference (constant speed, straight path) has no transition
/// and reports t = 0.
pub(crate) fn recompute_tau_star(sup: &VehicleSupervision) -> f64 {
    let mut accel = [0.0; K];
    let mut curv = [0.0; K];
    for k in 1..K {
        accel[k] = (sup.v[k] - sup.v[k - 1]) / DT;
        let step = Vec2::new(sup.x[k] - sup.x[k - 1], sup.y[k] - sup.y[k - 1]).norm();
        let mut dth = sup.theta[k] - sup.theta[k - 1];
        while dth > std::f64::consts::PI {
            dth -= 2.0 * std::f64::consts::PI;
        }
        while dth < -std::f64::consts::PI {
            dth += 2.0 * std::f64::consts::PI;
        }
        curv[k] = if step > 1e-6 { dth / step } else { 0.0 };
    }
    let mut best_k = K - 1;
    let mut best = 0.0;
    for k in 2..K {
        let score = (accel[k] - accel[k - 1]).abs() + (curv[k] - curv[k - 1]).abs();
        if score > best + 1e-12 {
            best = score;
            best_k = k;
        }
    }
    if best < 1e-9 {
        return 0.0;
    }
    time_at(best_k)
}

/// Builds per-vehicle dense supervision for a case: EDR interpolation (or
/// the weak prior), impact truncation, curve fitting, backward trace.
/// Vehicles without usable evidence get None rather than failing the case.
pub fn build_supervision(case: &AccidentCase, match_tol: f64) -> DenseSupervision {
    let mut out = DenseSupervision::empty();
    for slot in case.valid_slots() {
        out.vehicles[slot] = build_vehicle(case, slot, match_tol);
    }
    out
}

fn build_vehicle(case: &AccidentCase, slot: usize, match_tol: f64) -> Option<VehicleSupervision> {
    let points = &case.raw_points[slot];
    if !points.is_known() || points.value.len() < 2 {
        return None;
    }

    let profile = match case.edr[slot].is_known() && !case.edr[slot].value.is_empty() {
        true => interpolate_edr(&case.edr[slot].value).ok()?,
        false => weak_speed_prior(&case.vehicles[slot]).ok()?,
    };

    let (pts, outcome) = match case.annotations.accident_location {
        Some(a_star) => truncate_at_impact(&points.value, a_star, match_tol),
        None => (points.value.clone(), TruncateOutcome { fallback: true }),
    };
    if pts.len() < 2 {
        return None;
    }
    let coords: Vec<Vec2<f64>> = pts.iter().map(|p| p.pos).collect();
    let curve = RefCurve::fit_g2(&coords).ok()?;
    let mut sup = backward_trace(&curve, &profile).ok()?;
    sup.truncation_fallback = outcome.fallback;
    Some(sup)
}
