//! Road geometry: polylines with semantic categories, coordinate
//! standardization, BEV rasterization, and the point queries the decoder
//! leans on.

mod descriptor;
mod nearest;
mod raster;
pub mod svg;
mod transform;

pub use descriptor::{polyline_descriptor, Descriptor, DESCRIPTOR_DIM};
pub use nearest::{nearest_on_lane, LaneHit};
pub use raster::{rasterize, BevRaster};
pub use transform::{to_north_up, to_world, NorthSource, Rigid};

use crate::error::{Error, Result};
use crate::num::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2<S> {
    pub x: S,
    pub y: S,
}

impl<S: Real> Vec2<S> {
    pub fn new(x: S, y: S) -> Self {
        Vec2 { x, y }
    }

    pub fn zero() -> Self {
        Vec2 { x: S::zero(), y: S::zero() }
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product; twice the signed triangle area.
    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Self) -> S {
        (self - o).norm()
    }

    pub fn scale(self, s: S) -> Self {
        Vec2 { x: self.x * s, y: self.y * s }
    }

    /// Unit vector, or None below `eps` norm.
    pub fn unit(self, eps: S) -> Option<Self> {
        let n = self.norm();
        if n <= eps {
            None
        } else {
            Some(self.scale(S::one() / n))
        }
    }

    pub fn angle(self) -> S {
        self.y.atan2(self.x)
    }

    pub fn from_angle(a: S) -> Self {
        Vec2 { x: a.cos(), y: a.sin() }
    }

    pub fn rotate(self, a: S) -> Self {
        let (s, c) = a.sin_cos();
        Vec2 { x: c * self.x - s * self.y, y: s * self.x + c * self.y }
    }
}

impl<S: Real> std::ops::Add for Vec2<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec2 { x: self.x + o.x, y: self.y + o.y }
    }
}

impl<S: Real> std::ops::Sub for Vec2<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec2 { x: self.x - o.x, y: self.y - o.y }
    }
}

impl<S: Real> std::ops::Neg for Vec2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec2 { x: -self.x, y: -self.y }
    }
}

// ==== polylines ============================================================

pub const POLY_CATEGORIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyCategory {
    Edge,
    Marking,
    Centerline,
    Curb,
    Other,
}

impl PolyCategory {
    pub fn index(self) -> usize {
        match self {
            PolyCategory::Edge => 0,
            PolyCategory::Marking => 1,
            PolyCategory::Centerline => 2,
            PolyCategory::Curb => 3,
            PolyCategory::Other => 4,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edge" => Some(PolyCategory::Edge),
            "marking" => Some(PolyCategory::Marking),
            "centerline" => Some(PolyCategory::Centerline),
            "curb" => Some(PolyCategory::Curb),
            "other" => Some(PolyCategory::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolyCategory::Edge => "edge",
            PolyCategory::Marking => "marking",
            PolyCategory::Centerline => "centerline",
            PolyCategory::Curb => "curb",
            PolyCategory::Other => "other",
        }
    }
}

/// Minimum spacing between consecutive polyline points, meters.
pub const MIN_POINT_SPACING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline<S> {
    pub points: Vec<Vec2<S>>,
    pub category: PolyCategory,
    pub id: String,
}

impl<S: Real> Polyline<S> {
    pub fn new(id: impl Into<String>, category: PolyCategory, points: Vec<Vec2<S>>) -> Result<Self> {
        let p = Polyline { points, category, id: id.into() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Geometry(format!("polyline `{}` has {} points, need >=2", self.id, self.points.len())));
        }
        let min = S::c(MIN_POINT_SPACING);
        for w in self.points.windows(2) {
            if w[0].dist(w[1]) <= min {
                return Err(Error::Geometry(format!("polyline `{}` has coincident consecutive points", self.id)));
            }
        }
        Ok(())
    }

    pub fn length(&self) -> S {
        let mut l = S::zero();
        for w in self.points.windows(2) {
            l = l + w[0].dist(w[1]);
        }
        l
    }

    /// Point at arc length s from the first point, clamped to the ends.
    pub fn point_at(&self, s: S) -> Vec2<S> {
        if s <= S::zero() {
            return self.points[0];
        }
        let mut acc = S::zero();
        for w in self.points.windows(2) {
            let seg = w[0].dist(w[1]);
            if acc + seg >= s {
                let f = (s - acc) / seg;
                return w[0] + (w[1] - w[0]).scale(f);
            }
            acc = acc + seg;
        }
        *self.points.last().unwrap()
    }

    /// Tangent of the segment containing arc length s (last segment past the end).
    pub fn tangent_at(&self, s: S) -> Vec2<S> {
        let mut acc = S::zero();
        for w in self.points.windows(2) {
            let seg = w[0].dist(w[1]);
            if acc + seg >= s && seg > S::zero() {
                return (w[1] - w[0]).scale(S::one() / seg);
            }
            acc = acc + seg;
        }
        let n = self.points.len();
        let d = self.points[n - 1] - self.points[n - 2];
        d.unit(S::c(1e-12)).unwrap_or(Vec2::new(S::one(), S::zero()))
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points, category: self.category, id: self.id.clone() }
    }

    /// Arc-length resampling to exactly n points (ends preserved).
    pub fn resample(&self, n: usize) -> Self {
        assert!(n >= 2);
        let total = self.length();
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let f = S::from_usize(i).unwrap() / S::from_usize(n - 1).unwrap();
            points.push(self.point_at(total * f));
        }
        Polyline { points, category: self.category, id: self.id.clone() }
    }
}

// ==== scene geometry =======================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Raw,
    World,
    NorthUp,
}

/// Closed simple ring describing one lane surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePolygon<S> {
    pub ring: Vec<Vec2<S>>,
}

impl<S: Real> LanePolygon<S> {
    pub fn validate(&self) -> Result<()> {
        if self.ring.len() < 4 {
            return Err(Error::Geometry("lane polygon ring needs >=4 points (closed triangle)".into()));
        }
        let first = self.ring[0];
        let last = *self.ring.last().unwrap();
        if first.dist(last) > S::c(1e-9) {
            return Err(Error::Geometry("lane polygon ring is not closed".into()));
        }
        if !self.is_simple() {
            return Err(Error::Geometry("lane polygon ring self-intersects".into()));
        }
        Ok(())
    }

    /// O(n^2) segment intersection test; rings are small.
    fn is_simple(&self) -> bool {
        let n = self.ring.len() - 1; // last repeats first
        for i in 0..n {
            for j in (i + 1)..n {
                // adjacent segments share an endpoint by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (self.ring[i], self.ring[i + 1]);
                let (c, d) = (self.ring[j], self.ring[j + 1]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

fn segments_intersect<S: Real>(a: Vec2<S>, b: Vec2<S>, c: Vec2<S>, d: Vec2<S>) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    ((d1 > S::zero()) != (d2 > S::zero())) && ((d3 > S::zero()) != (d4 > S::zero()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry<S> {
    pub curves: Vec<Polyline<S>>,
    pub lane_centerlines: Vec<Polyline<S>>,
    pub lane_polygons: Vec<LanePolygon<S>>,
    pub frame: Frame,
}

impl<S: Real> RoadGeometry<S> {
    pub fn empty(frame: Frame) -> Self {
        RoadGeometry { curves: Vec::new(), lane_centerlines: Vec::new(), lane_polygons: Vec::new(), frame }
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty() && self.lane_centerlines.is_empty() && self.lane_polygons.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.curves.iter().chain(self.lane_centerlines.iter()) {
            p.validate()?;
        }
        for r in &self.lane_polygons {
            r.validate()?;
        }
        Ok(())
    }

    pub fn all_points(&self) -> impl Iterator<Item = Vec2<S>> + '_ {
        self.curves
            .iter()
            .chain(self.lane_centerlines.iter())
            .flat_map(|p| p.points.iter().copied())
            .chain(self.lane_polygons.iter().flat_map(|r| r.ring.iter().copied()))
    }

    pub fn centroid(&self) -> Vec2<S> {
        let mut sum = Vec2::zero();
        let mut n = 0usize;
        for p in self.all_points() {
            sum = sum + p;
            n += 1;
        }
        if n == 0 {
            Vec2::zero()
        } else {
            sum.scale(S::one() / S::from_usize(n).unwrap())
        }
    }

    /// Axis-aligned bounds over all points, or None when empty.
    pub fn bbox(&self) -> Option<(Vec2<S>, Vec2<S>)> {
        let mut it = self.all_points();
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in it {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        Some((lo, hi))
    }

    /// Diagonal of the bounding box; the descriptor length normalizer.
    pub fn scene_diagonal(&self) -> S {
        match self.bbox() {
            Some((lo, hi)) => (hi - lo).norm(),
            None => S::one(),
        }
    }

    /// Resolves a lane identifier against the centerline list.
    pub fn lane_index(&self, id: &str) -> Option<usize> {
        self.lane_centerlines.iter().position(|l| l.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn polyline_rejects_short_and_coincident() {
        assert!(Polyline::new("a", PolyCategory::Edge, vec![v(0.0, 0.0)]).is_err());
        assert!(Polyline::new("b", PolyCategory::Edge, vec![v(0.0, 0.0), v(0.0, 0.0)]).is_err());
        assert!(Polyline::new("c", PolyCategory::Edge, vec![v(0.0, 0.0), v(1.0, 0.0)]).is_ok());
    }

    #[test]
    fn polyline_point_at_walks_arc_length() {
        let p = Polyline::new("p", PolyCategory::Other, vec![v(0.0, 0.0), v(2.0, 0.0), v(2.0, 2.0)]).unwrap();
        assert_eq!(p.length(), 4.0);
        assert_eq!(p.point_at(1.0), v(1.0, 0.0));
        assert_eq!(p.point_at(3.0), v(2.0, 1.0));
        assert_eq!(p.point_at(9.0), v(2.0, 2.0));
        assert_eq!(p.tangent_at(3.0), v(0.0, 1.0));
    }

    #[test]
    fn ring_validation() {
        let open = LanePolygon { ring: vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.5, 0.5)] };
        assert!(open.validate().is_err());
        let bow = LanePolygon {
            ring: vec![v(0.0, 0.0), v(1.0, 1.0), v(1.0, 0.0), v(0.0, 1.0), v(0.0, 0.0)],
        };
        assert!(bow.validate().is_err());
        let square = LanePolygon {
            ring: vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0), v(0.0, 0.0)],
        };
        assert!(square.validate().is_ok());
    }

    #[test]
    fn resample_preserves_ends() {
        let p = Polyline::new("p", PolyCategory::Other, vec![v(0.0, 0.0), v(10.0, 0.0)]).unwrap();
        let r = p.resample(5);
        assert_eq!(r.points.len(), 5);
        assert_eq!(r.points[0], v(0.0, 0.0));
        assert_eq!(r.points[4], v(10.0, 0.0));
        assert_eq!(r.points[2], v(5.0, 0.0));
    }
}
