//! Deterministic SVG rendering of a scene. Pure string assembly, no
//! external renderer; colors are fixed per category and documented in the
//! README.

use super::{PolyCategory, RoadGeometry, Vec2};
use std::fmt::Write;

/// Category stroke colors, index-aligned with PolyCategory.
pub const CATEGORY_COLORS: [&str; 5] = ["#555555", "#c8a200", "#2266cc", "#884422", "#999999"];
/// Trajectory palette, cycled per drawn trajectory.
pub const TRAJ_COLORS: [&str; 5] = ["#cc2222", "#22aa44", "#7733cc", "#dd7711", "#11aaaa"];

pub struct SvgScene<'a> {
    pub geometry: &'a RoadGeometry<f64>,
    /// (label, polyline points) drawn over the map.
    pub trajectories: Vec<(String, Vec<Vec2<f64>>)>,
    pub accident: Option<Vec2<f64>>,
}

fn fmt_pts(points: &[Vec2<f64>], sx: impl Fn(f64) -> f64, sy: impl Fn(f64) -> f64) -> String {
    let mut s = String::new();
    for p in points {
        let _ = write!(s, "{:.2},{:.2} ", sx(p.x), sy(p.y));
    }
    s.trim_end().to_string()
}

pub fn render(scene: &SvgScene<'_>) -> String {
    const W: f64 = 800.0;
    const PAD: f64 = 30.0;

    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut seen = false;
    let mut extend = |p: Vec2<f64>| {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
        seen = true;
    };
    for p in scene.geometry.all_points() {
        extend(p);
    }
    for (_, t) in &scene.trajectories {
        for p in t {
            extend(*p);
        }
    }
    if let Some(a) = scene.accident {
        extend(a);
    }
    if !seen {
        lo = Vec2::new(-1.0, -1.0);
        hi = Vec2::new(1.0, 1.0);
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-6);
    let scale = (W - 2.0 * PAD) / span;
    let h = (hi.y - lo.y) * scale + 2.0 * PAD;
    // y flipped so north-up renders up
    let sx = |x: f64| (x - lo.x) * scale + PAD;
    let sy = |y: f64| h - ((y - lo.y) * scale + PAD);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {W:.0} {h:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"#fbfbf8\"/>");

    for ring in &scene.geometry.lane_polygons {
        let _ = writeln!(
            out,
            "<polygon points=\"{}\" fill=\"#dfe8ef\" stroke=\"none\"/>",
            fmt_pts(&ring.ring, sx, sy)
        );
    }
    for poly in scene.geometry.curves.iter().chain(scene.geometry.lane_centerlines.iter()) {
        let color = CATEGORY_COLORS[poly.category.index()];
        let dash = if poly.category == PolyCategory::Centerline { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}><title>{}</title></polyline>",
            fmt_pts(&poly.points, sx, sy),
            poly.id
        );
    }
    for (i, (label, t)) in scene.trajectories.iter().enumerate() {
        let color = TRAJ_COLORS[i % TRAJ_COLORS.len()];
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2.5\" opacity=\"0.85\"><title>{label}</title></polyline>",
            fmt_pts(t, sx, sy)
        );
        if let Some(p) = t.last() {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>",
                sx(p.x),
                sy(p.y)
            );
        }
    }
    if let Some(a) = scene.accident {
        let (cx, cy) = (sx(a.x), sy(a.y));
        let _ = writeln!(
            out,
            "<g stroke=\"#b00020\" stroke-width=\"2\"><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/></g>",
            cx - 6.0, cy - 6.0, cx + 6.0, cy + 6.0, cx - 6.0, cy + 6.0, cx + 6.0, cy - 6.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, Polyline};

    #[test]
    fn renders_and_is_deterministic() {
        let geom = RoadGeometry {
            curves: vec![Polyline::new(
                "e",
                PolyCategory::Edge,
                vec![Vec2::new(0.0, 0.0), Vec2::new(20.0, 0.0)],
            )
            .unwrap()],
            lane_centerlines: vec![],
            lane_polygons: vec![],
            frame: Frame::NorthUp,
        };
        let scene = SvgScene {
            geometry: &geom,
            trajectories: vec![("veh0".into(), vec![Vec2::new(0.0, 1.0), Vec2::new(10.0, 1.0)])],
            accident: Some(Vec2::new(10.0, 0.0)),
        };
        let a = render(&scene);
        let b = render(&scene);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("veh0"));
    }
}
