//! Supervision sidecar CSV, written by `preprocess` beside each case file.
//! Columns: vehicle,t,v,x,y,theta,step_valid,speed_strong. Floats use the
//! shortest round-trip form so files are byte-stable and lossless.

use super::{DenseSupervision, VehicleSupervision};
use crate::case::SLOTS;
use crate::error::{Error, Result};
use crate::grid::{time_at, K};

pub const HEADER: &str = "vehicle,t,v,x,y,theta,step_valid,speed_strong";

pub fn to_csv(sup: &DenseSupervision) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for slot in 0..SLOTS {
        if let Some(v) = &sup.vehicles[slot] {
            for k in 0..K {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    slot,
                    time_at(k),
                    v.v[k],
                    v.x[k],
                    v.y[k],
                    v.theta[k],
                    u8::from(v.step_valid[k]),
                    u8::from(v.speed_strong),
                ));
            }
        }
    }
    out
}

pub fn from_csv(text: &str) -> Result<DenseSupervision> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => {
            return Err(Error::Supervision(format!(
                "bad supervision header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut sup = DenseSupervision::empty();
    let mut counts = [0usize; SLOTS];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Supervision(format!("line {}: expected 8 columns", ln + 2)));
        }
        let slot: usize = cols[0]
            .parse()
            .map_err(|_| Error::Supervision(format!("line {}: bad vehicle index", ln + 2)))?;
        if slot >= SLOTS {
            return Err(Error::Supervision(format!("line {}: vehicle {} out of range", ln + 2, slot)));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i]
                .parse::<f64>()
                .map_err(|_| Error::Supervision(format!("line {}: bad float in column {}", ln + 2, i)))
        };
        let veh = sup.vehicles[slot].get_or_insert_with(|| VehicleSupervision {
            v: [0.0; K],
            x: [0.0; K],
            y: [0.0; K],
            theta: [0.0; K],
            step_valid: [false; K],
            speed_strong: false,
            tau_star: 0.0,
            truncation_fallback: false,
        });
        let k = counts[slot];
        if k >= K {
            return Err(Error::Supervision(format!("vehicle {} has more than {} rows", slot, K)));
        }
        veh.v[k] = f(2)?;
        veh.x[k] = f(3)?;
        veh.y[k] = f(4)?;
        veh.theta[k] = f(5)?;
        veh.step_valid[k] = cols[6].trim() == "1";
        veh.speed_strong = cols[7].trim() == "1";
        counts[slot] += 1;
    }
    for slot in 0..SLOTS {
        if let Some(v) = &mut sup.vehicles[slot] {
            if counts[slot] != K {
                return Err(Error::Supervision(format!(
                    "vehicle {} has {} rows, expected {}",
                    slot, counts[slot], K
                )));
            }
            v.tau_star = super::trace::recompute_tau_star(v);
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::supervision::{backward_trace, RefCurve, SpeedProfile, SpeedSource};

    #[test]
    fn round_trip() {
        let curve = RefCurve::fit_g2(&[Vec2::new(-60.0, 1.0), Vec2::new(-20.0, 4.0), Vec2::new(0.0, 0.0)]).unwrap();
        let profile = SpeedProfile {
            samples: [9.0; K],
            valid_mask: [true; K],
            source: SpeedSource::Edr,
            coverage: 0.9,
            n_obs: 5,
        };
        let mut sup = DenseSupervision::empty();
        sup.vehicles[0] = Some(backward_trace(&curve, &profile).unwrap());
        sup.vehicles[3] = Some(backward_trace(&curve, &profile).unwrap());

        let text = to_csv(&sup);
        let back = from_csv(&text).unwrap();
        for slot in [0usize, 3] {
            let a = sup.vehicles[slot].as_ref().unwrap();
            let b = back.vehicles[slot].as_ref().unwrap();
            assert_eq!(a.v, b.v);
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
            assert_eq!(a.theta, b.theta);
            assert_eq!(a.step_valid, b.step_valid);
            assert_eq!(a.speed_strong, b.speed_strong);
            assert_eq!(a.tau_star, b.tau_star);
        }
        assert!(back.vehicles[1].is_none());
    }

    #[test]
    fn rejects_bad_header() {
        assert!(from_csv("nope\n1,2,3").is_err());
    }
}
