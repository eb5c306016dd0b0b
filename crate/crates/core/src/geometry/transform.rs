//! Coordinate standardization: survey frame -> world -> north-up.

use super::{Frame, RoadGeometry, Vec2};
use crate::error::{Error, Result};
use crate::num::Real;
use serde::{Deserialize, Serialize};

/// Proper rigid transform p' = R(angle) p + t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rigid<S> {
    pub angle: S,
    pub translation: Vec2<S>,
}

impl<S: Real> Rigid<S> {
    pub fn identity() -> Self {
        Rigid { angle: S::zero(), translation: Vec2::zero() }
    }

    pub fn apply(&self, p: Vec2<S>) -> Vec2<S> {
        p.rotate(self.angle) + self.translation
    }

    /// Accepts an explicit 2x2 matrix; rejects anything that is not a proper
    /// rotation (orthonormal, det +1) within 1e-9.
    pub fn from_matrix(m: [[S; 2]; 2], translation: Vec2<S>) -> Result<Self> {
        let tol = S::c(1e-9);
        let c0 = Vec2::new(m[0][0], m[1][0]);
        let c1 = Vec2::new(m[0][1], m[1][1]);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if (c0.norm() - S::one()).abs() > tol
            || (c1.norm() - S::one()).abs() > tol
            || c0.dot(c1).abs() > tol
            || (det - S::one()).abs() > tol
        {
            return Err(Error::Geometry("rotation matrix is not a proper rotation".into()));
        }
        Ok(Rigid { angle: m[1][0].atan2(m[0][0]), translation })
    }
}

fn map_geometry<S: Real>(geom: &RoadGeometry<S>, f: impl Fn(Vec2<S>) -> Vec2<S>, frame: Frame) -> RoadGeometry<S> {
    let mut out = geom.clone();
    for p in out.curves.iter_mut().chain(out.lane_centerlines.iter_mut()) {
        for q in &mut p.points {
            *q = f(*q);
        }
    }
    for r in &mut out.lane_polygons {
        for q in &mut r.ring {
            *q = f(*q);
        }
    }
    out.frame = frame;
    out
}

pub fn to_world<S: Real>(geom: &RoadGeometry<S>, rigid: Rigid<S>) -> Result<RoadGeometry<S>> {
    if geom.frame != Frame::Raw {
        return Err(Error::Geometry(format!("to_world expects frame=raw, got {:?}", geom.frame)));
    }
    Ok(map_geometry(geom, |p| rigid.apply(p), Frame::World))
}

/// Where the north angle came from; arrow annotations win over metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NorthSource {
    NorthArrow,
    DefaultMetadata,
}

/// Rotates by -north_angle about the scene centroid so annotated north maps
/// to +y. Returns the standardized geometry and the recorded provenance.
pub fn to_north_up<S: Real>(
    geom: &RoadGeometry<S>,
    north_angle: S,
    source: NorthSource,
) -> Result<(RoadGeometry<S>, NorthSource)> {
    if geom.frame != Frame::World {
        return Err(Error::Geometry(format!("to_north_up expects frame=world, got {:?}", geom.frame)));
    }
    let c = geom.centroid();
    let out = map_geometry(geom, |p| (p - c).rotate(-north_angle) + c, Frame::NorthUp);
    Ok((out, source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PolyCategory, Polyline};

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    fn geom(points: Vec<Vec2<f64>>) -> RoadGeometry<f64> {
        RoadGeometry {
            curves: vec![Polyline::new("c", PolyCategory::Edge, points).unwrap()],
            lane_centerlines: vec![],
            lane_polygons: vec![],
            frame: Frame::Raw,
        }
    }

    #[test]
    fn quarter_turn_with_shift() {
        let g = geom(vec![v(1.0, 0.0), v(2.0, 0.0)]);
        let r = Rigid { angle: std::f64::consts::FRAC_PI_2, translation: v(1.0, 0.0) };
        let w = to_world(&g, r).unwrap();
        let p = w.curves[0].points[0];
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
        assert_eq!(w.frame, Frame::World);
    }

    #[test]
    fn identity_preserves_everything() {
        let g = geom(vec![v(1.0, 2.0), v(3.0, 4.0)]);
        let w = to_world(&g, Rigid::identity()).unwrap();
        assert_eq!(w.curves[0].points, g.curves[0].points);
    }

    #[test]
    fn bad_rotation_rejected() {
        let shear = [[1.0, 0.5], [0.0, 1.0]];
        assert!(Rigid::from_matrix(shear, v(0.0, 0.0)).is_err());
        let r90 = [[0.0, -1.0], [1.0, 0.0]];
        let r = Rigid::from_matrix(r90, v(0.0, 0.0)).unwrap();
        assert!((r.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn north_up_composition() {
        let g = geom(vec![v(0.0, 0.0), v(4.0, 1.0), v(7.0, -2.0)]);
        let w = to_world(&g, Rigid::identity()).unwrap();
        let half = std::f64::consts::FRAC_PI_2;
        let (once, _) = to_north_up(&w, half, NorthSource::NorthArrow).unwrap();
        let mut twice = once.clone();
        twice.frame = Frame::World;
        let (twice, _) = to_north_up(&twice, half, NorthSource::NorthArrow).unwrap();
        let (full, _) = to_north_up(&w, std::f64::consts::PI, NorthSource::NorthArrow).unwrap();
        for (a, b) in twice.curves[0].points.iter().zip(full.curves[0].points.iter()) {
            assert!(a.dist(*b) < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rigid_preserves_distances() {
        let pts = vec![v(0.0, 0.0), v(3.0, 1.0), v(-2.0, 5.0), v(7.0, -4.0)];
        let g = geom(pts.clone());
        let r = Rigid { angle: 0.83, translation: v(-4.0, 2.5) };
        let w = to_world(&g, r).unwrap();
        let tp = &w.curves[0].points;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d0 = pts[i].dist(pts[j]);
                let d1 = tp[i].dist(tp[j]);
                assert!((d0 - d1).abs() <= 1e-9 * d0.max(1.0));
            }
        }
    }
}
