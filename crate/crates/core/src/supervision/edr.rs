//! EDR speed interpolation and the weak speed-limit prior.

use super::{SpeedProfile, SpeedSource};
use crate::case::{EdrSample, VehicleSemantics};
use crate::error::{Error, Result};
use crate::grid::{time_at, K};

/// Reliability cutoff: observations must cover at least this fraction of the
/// 5 s window and include at least EDR_MIN_OBS records.
pub const EDR_MIN_COVERAGE: f64 = 0.6;
pub const EDR_MIN_OBS: usize = 3;

/// Linear interpolation of sparse records onto the canonical grid. Grid
/// points outside the observed span are masked invalid and filled by holding
/// the nearest observed value so downstream integration stays defined.
pub fn interpolate_edr(edr: &[EdrSample]) -> Result<SpeedProfile> {
    if edr.is_empty() {
        return Err(Error::Supervision("no EDR records; fall back to the speed prior".into()));
    }
    for w in edr.windows(2) {
        debug_assert!(w[0].t < w[1].t, "EDR records must be strictly increasing in t");
    }
    if edr.len() == 1 {
        // single record: hold its value, flag as zero-coverage weak evidence
        return Ok(SpeedProfile {
            samples: [edr[0].v; K],
            valid_mask: [false; K],
            source: SpeedSource::Edr,
            coverage: 0.0,
            n_obs: 1,
        });
    }

    let (t_first, t_last) = (edr[0].t, edr[edr.len() - 1].t);
    let mut samples = [0.0; K];
    let mut valid = [false; K];
    for k in 0..K {
        let t = time_at(k);
        if t < t_first {
            samples[k] = edr[0].v;
        } else if t > t_last {
            samples[k] = edr[edr.len() - 1].v;
        } else {
            valid[k] = true;
            // find the bracketing records
            let mut j = 0;
            while j + 2 < edr.len() && edr[j + 1].t < t {
                j += 1;
            }
            let (a, b) = (edr[j], edr[j + 1]);
            let f = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
            samples[k] = a.v + (b.v - a.v) * f;
        }
    }
    Ok(SpeedProfile {
        samples,
        valid_mask: valid,
        source: SpeedSource::Edr,
        coverage: (t_last - t_first) / 5.0,
        n_obs: edr.len(),
    })
}

/// Constant profile at the posted limit; weak supervision only.
pub fn weak_speed_prior(veh: &VehicleSemantics) -> Result<SpeedProfile> {
    match veh.speed_limit.value {
        Some(limit) if veh.speed_limit.is_known() => Ok(SpeedProfile {
            samples: [limit; K],
            valid_mask: [true; K],
            source: SpeedSource::SpeedLimitPrior,
            coverage: 1.0,
            n_obs: 0,
        }),
        _ => Err(Error::Supervision(format!(
            "vehicle {}: speed limit unknown, speed is fully unsupervised",
            veh.slot_index
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::Field;

    fn s(t: f64, v: f64) -> EdrSample {
        EdrSample { t, v }
    }

    #[test]
    fn two_point_interpolation() {
        let p = interpolate_edr(&[s(-4.2, 20.0), s(-1.0, 10.0)]).unwrap();
        // t = -2.6 is grid index 24
        let k = (0..K).find(|&k| (time_at(k) + 2.6).abs() < 1e-9).unwrap();
        assert!((p.samples[k] - 15.0).abs() < 1e-9, "got {}", p.samples[k]);
        assert!(p.valid_mask[k]);
        assert!((p.coverage - 3.2 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_records_give_constant_profile() {
        let p = interpolate_edr(&[s(-5.0, 10.0), s(-2.5, 10.0), s(0.0, 10.0)]).unwrap();
        assert!(p.samples.iter().all(|v| (v - 10.0).abs() < 1e-12));
        assert!(p.valid_mask.iter().all(|&m| m));
        assert!(p.reliable());
    }

    #[test]
    fn span_boundary_masks() {
        let p = interpolate_edr(&[s(-3.0, 8.0), s(0.0, 4.0)]).unwrap();
        for k in 0..K {
            let t = time_at(k);
            assert_eq!(p.valid_mask[k], t >= -3.0, "t={t}");
            if t < -3.0 {
                assert_eq!(p.samples[k], 8.0); // held for integration
            }
        }
        // 60% coverage with only 2 observations: not reliable
        assert!(!p.reliable());
    }

    #[test]
    fn single_record_holds_weakly() {
        let p = interpolate_edr(&[s(-2.0, 12.0)]).unwrap();
        assert!(p.samples.iter().all(|&v| v == 12.0));
        assert!(p.valid_mask.iter().all(|&m| !m));
        assert_eq!(p.coverage, 0.0);
        assert!(!p.reliable());
    }

    #[test]
    fn prior_requires_known_limit() {
        let mut veh = crate::case::VehicleSemantics::empty(0);
        assert!(weak_speed_prior(&veh).is_err());
        veh.speed_limit = Field::present(Some(15.6));
        let p = weak_speed_prior(&veh).unwrap();
        assert!(p.samples.iter().all(|&v| v == 15.6));
        assert_eq!(p.source, SpeedSource::SpeedLimitPrior);
        assert!(!p.reliable());
    }
}
