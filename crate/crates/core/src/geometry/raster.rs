//! Multi-channel BEV occupancy raster.

use super::{Frame, RoadGeometry, Vec2, POLY_CATEGORIES};
use crate::error::{Error, Result};
use crate::num::Real;

/// C x H x W binary occupancy, one channel per polyline category.
/// Stored row-major per channel as u8 in {0,1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub origin: Vec2<f64>,
    pub resolution: f64,
    pub cells: Vec<u8>,
    /// Set when the extent missed all geometry (warning, not an error).
    pub empty: bool,
}

impl BevRaster {
    pub fn blank(channels: usize, size: usize, origin: Vec2<f64>, resolution: f64) -> Self {
        BevRaster {
            channels,
            height: size,
            width: size,
            origin,
            resolution,
            cells: vec![0; channels * size * size],
            empty: true,
        }
    }

    #[inline]
    fn idx(&self, c: usize, iy: i64, ix: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            return None;
        }
        Some(c * self.height * self.width + iy as usize * self.width + ix as usize)
    }

    pub fn get(&self, c: usize, iy: i64, ix: i64) -> u8 {
        self.idx(c, iy, ix).map(|i| self.cells[i]).unwrap_or(0)
    }

    fn set(&mut self, c: usize, iy: i64, ix: i64) {
        if let Some(i) = self.idx(c, iy, ix) {
            self.cells[i] = 1;
            self.empty = false;
        }
    }

    /// Cell containing world point p; may lie outside the grid.
    pub fn cell_of(&self, p: Vec2<f64>) -> (i64, i64) {
        let ix = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let iy = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        (iy, ix)
    }

    fn stroke(&mut self, c: usize, a: Vec2<f64>, b: Vec2<f64>) {
        let (y0, x0) = self.cell_of(a);
        let (y1, x1) = self.cell_of(b);
        // integer Bresenham, endpoints inclusive
        let (mut x, mut y) = (x0, y0);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.set(c, y, x);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

/// Rasterizes every polyline into its category channel with 1-cell-wide
/// strokes. `extent` is the full side length in meters, centered on `center`
/// (the accident location by convention).
pub fn rasterize<S: Real>(
    geom: &RoadGeometry<S>,
    center: Vec2<f64>,
    resolution: f64,
    extent: f64,
) -> Result<BevRaster> {
    if geom.frame != Frame::NorthUp {
        return Err(Error::Geometry(format!("rasterize expects frame=north_up, got {:?}", geom.frame)));
    }
    if resolution <= 0.0 || extent <= 0.0 {
        return Err(Error::Geometry("rasterize needs positive resolution and extent".into()));
    }
    let size = (extent / resolution).round() as usize;
    let origin = Vec2::new(center.x - extent / 2.0, center.y - extent / 2.0);
    let mut r = BevRaster::blank(POLY_CATEGORIES, size, origin, resolution);
    let to64 = |p: Vec2<S>| Vec2::new(p.x.to_f64().unwrap(), p.y.to_f64().unwrap());
    for poly in geom.curves.iter().chain(geom.lane_centerlines.iter()) {
        let c = poly.category.index();
        for w in poly.points.windows(2) {
            r.stroke(c, to64(w[0]), to64(w[1]));
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PolyCategory, Polyline};

    fn north_up(polys: Vec<Polyline<f64>>) -> RoadGeometry<f64> {
        RoadGeometry { curves: polys, lane_centerlines: vec![], lane_polygons: vec![], frame: Frame::NorthUp }
    }

    #[test]
    fn horizontal_segment_cell_count() {
        // 10 m segment at 0.5 m/cell: endpoint cells 20 apart, inclusive -> 21 cells.
        let g = north_up(vec![Polyline::new(
            "s",
            PolyCategory::Marking,
            vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)],
        )
        .unwrap()]);
        let r = rasterize(&g, Vec2::new(5.0, 0.0), 0.5, 64.0).unwrap();
        let lit: usize = r.cells.iter().map(|&v| v as usize).sum();
        assert_eq!(lit, 21);
        // all in the marking channel, single row
        let ch = PolyCategory::Marking.index();
        let (ry, _) = r.cell_of(Vec2::new(0.0, 0.0));
        for i in 0..21 {
            let (y0, x0) = r.cell_of(Vec2::new(0.0, 0.0));
            assert_eq!(r.get(ch, y0, x0 + i), 1);
            assert_eq!(y0, ry);
        }
    }

    #[test]
    fn vertices_always_lit_in_own_channel() {
        let pts = vec![Vec2::new(-3.2, 4.5), Vec2::new(7.9, -1.3), Vec2::new(12.0, 12.0)];
        let g = north_up(vec![Polyline::new("z", PolyCategory::Curb, pts.clone()).unwrap()]);
        let r = rasterize(&g, Vec2::new(4.0, 4.0), 0.5, 64.0).unwrap();
        for p in pts {
            let (iy, ix) = r.cell_of(p);
            assert_eq!(r.get(PolyCategory::Curb.index(), iy, ix), 1);
        }
    }

    #[test]
    fn channels_do_not_bleed() {
        let g = north_up(vec![
            Polyline::new("a", PolyCategory::Edge, vec![Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0)]).unwrap(),
            Polyline::new("b", PolyCategory::Curb, vec![Vec2::new(0.0, 3.0), Vec2::new(5.0, 3.0)]).unwrap(),
        ]);
        let r = rasterize(&g, Vec2::new(2.5, 1.5), 0.5, 32.0).unwrap();
        let edge = PolyCategory::Edge.index();
        let curb = PolyCategory::Curb.index();
        let (ey, ex) = r.cell_of(Vec2::new(2.0, 0.0));
        let (cy, cx) = r.cell_of(Vec2::new(2.0, 3.0));
        assert_eq!(r.get(edge, ey, ex), 1);
        assert_eq!(r.get(curb, ey, ex), 0);
        assert_eq!(r.get(curb, cy, cx), 1);
        assert_eq!(r.get(edge, cy, cx), 0);
    }

    #[test]
    fn out_of_extent_is_warning_not_error() {
        let g = north_up(vec![Polyline::new(
            "far",
            PolyCategory::Edge,
            vec![Vec2::new(1000.0, 1000.0), Vec2::new(1010.0, 1000.0)],
        )
        .unwrap()]);
        let r = rasterize(&g, Vec2::new(0.0, 0.0), 0.5, 64.0).unwrap();
        assert!(r.empty);
        assert!(r.cells.iter().all(|&v| v == 0));
    }

    #[test]
    fn deterministic() {
        let g = north_up(vec![Polyline::new(
            "d",
            PolyCategory::Other,
            vec![Vec2::new(0.0, 0.0), Vec2::new(8.7, 3.3), Vec2::new(-4.0, 9.0)],
        )
        .unwrap()]);
        let a = rasterize(&g, Vec2::new(0.0, 0.0), 0.5, 64.0).unwrap();
        let b = rasterize(&g, Vec2::new(0.0, 0.0), 0.5, 64.0).unwrap();
        assert_eq!(a, b);
    }
}
