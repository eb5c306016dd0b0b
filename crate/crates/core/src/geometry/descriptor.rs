//! Compact per-polyline descriptors for the sparse vector branch.

use super::{Polyline, Vec2, POLY_CATEGORIES};
use crate::num::Real;

/// midpoint(2) + orientation(1) + normalized length(1) + bbox extent(2) + category one-hot(5)
pub const DESCRIPTOR_DIM: usize = 6 + POLY_CATEGORIES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor<S> {
    pub midpoint: Vec2<S>,
    /// Total-least-squares dominant direction, folded into [0, pi).
    pub orientation: S,
    /// Polyline length over the scene bbox diagonal.
    pub normalized_length: S,
    pub bbox_extent: Vec2<S>,
    pub category: usize,
}

impl<S: Real> Descriptor<S> {
    pub fn to_vec(&self) -> Vec<S> {
        let mut v = vec![
            self.midpoint.x,
            self.midpoint.y,
            self.orientation,
            self.normalized_length,
            self.bbox_extent.x,
            self.bbox_extent.y,
        ];
        for c in 0..POLY_CATEGORIES {
            v.push(if c == self.category { S::one() } else { S::zero() });
        }
        v
    }
}

/// `scene_diagonal` normalizes length; pass the owning scene's bbox diagonal.
pub fn polyline_descriptor<S: Real>(p: &Polyline<S>, scene_diagonal: S) -> Descriptor<S> {
    let n = S::from_usize(p.points.len()).unwrap();
    let mut mean = Vec2::zero();
    for q in &p.points {
        mean = mean + *q;
    }
    let mean = mean.scale(S::one() / n);

    // principal axis of the point cloud: eigenvector of the 2x2 covariance
    let (mut sxx, mut sxy, mut syy) = (S::zero(), S::zero(), S::zero());
    for q in &p.points {
        let d = *q - mean;
        sxx = sxx + d.x * d.x;
        sxy = sxy + d.x * d.y;
        syy = syy + d.y * d.y;
    }
    // angle of the dominant eigenvector; atan2 form of the TLS solution
    let two = S::c(2.0);
    let mut theta = S::c(0.5) * (two * sxy).atan2(sxx - syy);
    // fold into [0, pi)
    let pi = S::c(std::f64::consts::PI);
    while theta < S::zero() {
        theta = theta + pi;
    }
    while theta >= pi {
        theta = theta - pi;
    }

    let (mut lo, mut hi) = (p.points[0], p.points[0]);
    for q in &p.points {
        lo.x = lo.x.min(q.x);
        lo.y = lo.y.min(q.y);
        hi.x = hi.x.max(q.x);
        hi.y = hi.y.max(q.y);
    }

    Descriptor {
        midpoint: mean,
        orientation: theta,
        normalized_length: p.length() / scene_diagonal.max(S::c(1e-9)),
        bbox_extent: hi - lo,
        category: p.category.index(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolyCategory;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn horizontal_segment_closed_form() {
        // 10 m scene: diagonal 10*sqrt(2)
        let p = Polyline::new("s", PolyCategory::Marking, vec![v(0.0, 0.0), v(4.0, 0.0)]).unwrap();
        let diag = 10.0 * 2.0f64.sqrt();
        let d = polyline_descriptor(&p, diag);
        assert!((d.midpoint.x - 2.0).abs() < 1e-12 && d.midpoint.y.abs() < 1e-12);
        assert!(d.orientation.abs() < 1e-12);
        assert!((d.normalized_length - 4.0 / diag).abs() < 1e-12);
        assert_eq!(d.category, PolyCategory::Marking.index());
    }

    #[test]
    fn reversal_invariant() {
        let p = Polyline::new("z", PolyCategory::Edge, vec![v(0.0, 0.0), v(3.0, 1.0), v(5.0, 4.0)]).unwrap();
        let a = polyline_descriptor(&p, 20.0);
        let b = polyline_descriptor(&p.reversed(), 20.0);
        assert!((a.orientation - b.orientation).abs() < 1e-12);
        assert!(a.midpoint.dist(b.midpoint) < 1e-12);
        assert!((a.normalized_length - b.normalized_length).abs() < 1e-12);
    }

    #[test]
    fn vertical_orientation() {
        let p = Polyline::new("v", PolyCategory::Edge, vec![v(1.0, 0.0), v(1.0, 6.0)]).unwrap();
        let d = polyline_descriptor(&p, 10.0);
        assert!((d.orientation - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
