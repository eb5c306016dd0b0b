//! Smooth reference path fitted through surveyed points.
//!
//! Realization: parametric cubic spline (not-a-knot ends) over chord-length
//! parameter, one polynomial per axis, C2 in the parameter. With chord
//! parameterization the speed |p'(u)| stays near 1, so C2 in u gives
//! position/heading/curvature continuity at joins to solver roundoff, far
//! inside the contract tolerances. Arc length is recovered exactly by
//! Gauss-Legendre quadrature per segment and inverted with safeguarded
//! Newton, so the curve is queryable by arc length.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::num::Real;

const GL_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// One cubic piece in shifted power basis, du = u - u_start in [0, h].
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece<S> {
    h: S,
    ax: [S; 4],
    ay: [S; 4],
}

impl<S: Real> Piece<S> {
    fn pos(&self, du: S) -> Vec2<S> {
        let x = ((self.ax[3] * du + self.ax[2]) * du + self.ax[1]) * du + self.ax[0];
        let y = ((self.ay[3] * du + self.ay[2]) * du + self.ay[1]) * du + self.ay[0];
        Vec2::new(x, y)
    }

    fn d1(&self, du: S) -> Vec2<S> {
        let three = S::c(3.0);
        let two = S::c(2.0);
        let x = (three * self.ax[3] * du + two * self.ax[2]) * du + self.ax[1];
        let y = (three * self.ay[3] * du + two * self.ay[2]) * du + self.ay[1];
        Vec2::new(x, y)
    }

    fn d2(&self, du: S) -> Vec2<S> {
        let six = S::c(6.0);
        let two = S::c(2.0);
        Vec2::new(six * self.ax[3] * du + two * self.ax[2], six * self.ay[3] * du + two * self.ay[2])
    }

    /// Arc length from the piece start to du, 16-point Gauss-Legendre.
    fn arc(&self, du: S) -> S {
        let half = du * S::c(0.5);
        let mut sum = S::zero();
        for i in 0..8 {
            let xi = S::c(GL_X[i]);
            let wi = S::c(GL_W[i]);
            sum = sum + wi * (self.d1(half * (S::one() - xi)).norm() + self.d1(half * (S::one() + xi)).norm());
        }
        sum * half
    }
}

/// Piecewise-smooth curve with arc-length queries. Joins are G2-continuous;
/// see `join_gaps` for the measurable statement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefCurve<S> {
    pieces: Vec<Piece<S>>,
    /// Cumulative arc length at piece boundaries; last entry is the total.
    cum: Vec<S>,
    /// Consecutive duplicate inputs were dropped during fitting.
    pub deduped: bool,
}

impl<S: Real> RefCurve<S> {
    /// Fits a smooth interpolating curve through ordered points. Headings on
    /// the input are not constraints; the fitted curve defines them.
    pub fn fit_g2(points: &[Vec2<S>]) -> Result<Self> {
        let mut pts: Vec<Vec2<S>> = Vec::with_capacity(points.len());
        let eps = S::c(1e-9);
        for &p in points {
            if pts.last().map_or(true, |q| q.dist(p) > eps) {
                pts.push(p);
            }
        }
        let deduped = pts.len() != points.len();
        if points.is_empty() {
            return Err(Error::Supervision("cannot fit a curve through zero points".into()));
        }
        if pts.len() < 2 {
            return Err(Error::Supervision("all survey points coincide; no path direction".into()));
        }

        // chord-length knots
        let n = pts.len();
        let mut u = vec![S::zero(); n];
        for i in 1..n {
            u[i] = u[i - 1] + pts[i].dist(pts[i - 1]);
        }

        let pieces = if n == 2 {
            let h = u[1];
            let dir = (pts[1] - pts[0]).scale(S::one() / h);
            vec![Piece {
                h,
                ax: [pts[0].x, dir.x, S::zero(), S::zero()],
                ay: [pts[0].y, dir.y, S::zero(), S::zero()],
            }]
        } else if n == 3 {
            // single quadratic through three points (Lagrange in u)
            quadratic_piece(&pts, &u)
        } else {
            cubic_spline_pieces(&pts, &u)
        };

        let mut cum = Vec::with_capacity(pieces.len() + 1);
        cum.push(S::zero());
        for p in &pieces {
            let l = p.arc(p.h);
            let last = *cum.last().unwrap();
            cum.push(last + l);
        }
        Ok(RefCurve { pieces, cum, deduped })
    }

    pub fn total_length(&self) -> S {
        *self.cum.last().unwrap()
    }

    pub fn n_joins(&self) -> usize {
        self.pieces.len().saturating_sub(1)
    }

    /// (piece index, du) for arc length s, clamped to the curve.
    fn locate(&self, s: S) -> (usize, S) {
        let total = self.total_length();
        let s = s.max(S::zero()).min(total);
        // last piece whose start is <= s
        let mut i = 0;
        while i + 1 < self.pieces.len() && self.cum[i + 1] < s {
            i += 1;
        }
        let local = s - self.cum[i];
        let piece = &self.pieces[i];
        let seg_len = self.cum[i + 1] - self.cum[i];
        if local <= S::zero() {
            return (i, S::zero());
        }
        if local >= seg_len {
            return (i, piece.h);
        }
        // Newton with bisection safeguard on f(du) = arc(du) - local
        let mut lo = S::zero();
        let mut hi = piece.h;
        let mut du = piece.h * (local / seg_len);
        let tol = S::c(1e-12) * total.max(S::one());
        for _ in 0..40 {
            let f = piece.arc(du) - local;
            if f.abs() <= tol {
                break;
            }
            if f > S::zero() {
                hi = du;
            } else {
                lo = du;
            }
            let deriv = piece.d1(du).norm();
            let mut next = du - f / deriv;
            if !(next > lo && next < hi) {
                next = (lo + hi) * S::c(0.5);
            }
            du = next;
        }
        (i, du)
    }

    pub fn point_at_arc(&self, s: S) -> Vec2<S> {
        let (i, du) = self.locate(s);
        self.pieces[i].pos(du)
    }

    pub fn tangent_at_arc(&self, s: S) -> Vec2<S> {
        let (i, du) = self.locate(s);
        self.pieces[i]
            .d1(du)
            .unit(S::c(1e-12))
            .unwrap_or(Vec2::new(S::one(), S::zero()))
    }

    pub fn heading_at_arc(&self, s: S) -> S {
        let t = self.tangent_at_arc(s);
        t.y.atan2(t.x)
    }

    pub fn curvature_at_arc(&self, s: S) -> S {
        let (i, du) = self.locate(s);
        let d1 = self.pieces[i].d1(du);
        let d2 = self.pieces[i].d2(du);
        let speed = d1.norm();
        d1.cross(d2) / (speed * speed * speed)
    }

    pub fn start_point(&self) -> Vec2<S> {
        self.pieces[0].pos(S::zero())
    }

    pub fn end_point(&self) -> Vec2<S> {
        let last = self.pieces.last().unwrap();
        last.pos(last.h)
    }

    pub fn start_tangent(&self) -> Vec2<S> {
        self.tangent_at_arc(S::zero())
    }

    /// Position/heading/curvature discontinuities at join j, measured by
    /// evaluating both adjacent pieces at the shared knot.
    pub fn join_gaps(&self, j: usize) -> (S, S, S) {
        let a = &self.pieces[j];
        let b = &self.pieces[j + 1];
        let pa = a.pos(a.h);
        let pb = b.pos(S::zero());
        let ta = a.d1(a.h);
        let tb = b.d1(S::zero());
        let ha = ta.y.atan2(ta.x);
        let hb = tb.y.atan2(tb.x);
        let mut dh = (ha - hb).abs();
        let pi = S::c(std::f64::consts::PI);
        let two_pi = S::c(2.0 * std::f64::consts::PI);
        if dh > pi {
            dh = two_pi - dh;
        }
        let curv = |d1: Vec2<S>, d2: Vec2<S>| {
            let sp = d1.norm();
            d1.cross(d2) / (sp * sp * sp)
        };
        let ka = curv(ta, a.d2(a.h));
        let kb = curv(tb, b.d2(S::zero()));
        (pa.dist(pb), dh, (ka - kb).abs())
    }
}

fn quadratic_piece<S: Real>(pts: &[Vec2<S>], u: &[S]) -> Vec<Piece<S>> {
    // Lagrange quadratic through (u_i, p_i), expanded in powers of (u - u_0)
    let (u0, u1, u2) = (u[0], u[1], u[2]);
    let coeff = |y0: S, y1: S, y2: S| -> [S; 4] {
        let d0 = (u0 - u1) * (u0 - u2);
        let d1 = (u1 - u0) * (u1 - u2);
        let d2 = (u2 - u0) * (u2 - u1);
        // quadratic coefficients in absolute u: a2 u^2 + a1 u + a0
        let a2 = y0 / d0 + y1 / d1 + y2 / d2;
        let a1 = -(y0 * (u1 + u2) / d0 + y1 * (u0 + u2) / d1 + y2 * (u0 + u1) / d2);
        let a0 = y0 * u1 * u2 / d0 + y1 * u0 * u2 / d1 + y2 * u0 * u1 / d2;
        // shift to du = u - u0
        [a0 + a1 * u0 + a2 * u0 * u0, a1 + S::c(2.0) * a2 * u0, a2, S::zero()]
    };
    vec![Piece {
        h: u2 - u0,
        ax: coeff(pts[0].x, pts[1].x, pts[2].x),
        ay: coeff(pts[0].y, pts[1].y, pts[2].y),
    }]
}

/// Not-a-knot cubic spline moments per axis; n >= 4.
fn cubic_spline_pieces<S: Real>(pts: &[Vec2<S>], u: &[S]) -> Vec<Piece<S>> {
    let n = pts.len();
    let h: Vec<S> = (0..n - 1).map(|i| u[i + 1] - u[i]).collect();

    let solve_axis = |ys: &dyn Fn(usize) -> S| -> Vec<S> {
        // unknowns M_1..M_{n-2}; not-a-knot eliminates M_0 and M_{n-1}
        let m = n - 2;
        let mut diag = vec![S::zero(); m];
        let mut lower = vec![S::zero(); m];
        let mut upper = vec![S::zero(); m];
        let mut rhs = vec![S::zero(); m];
        let six = S::c(6.0);
        for (row, i) in (1..n - 1).enumerate() {
            let hm = h[i - 1];
            let hp = h[i];
            let r = six * ((ys(i + 1) - ys(i)) / hp - (ys(i) - ys(i - 1)) / hm);
            rhs[row] = r;
            diag[row] = S::c(2.0) * (hm + hp);
            lower[row] = hm;
            upper[row] = hp;
        }
        // not-a-knot at the start: M_0 = ((h0+h1) M_1 - h0 M_2) / h1
        let (h0, h1) = (h[0], h[1]);
        diag[0] = diag[0] + h0 * (h0 + h1) / h1;
        if m > 1 {
            upper[0] = upper[0] - h0 * h0 / h1;
        }
        // not-a-knot at the end: M_{n-1} = ((h_{n-2}+h_{n-3}) M_{n-2} - h_{n-2} M_{n-3}) / h_{n-3}
        let (he, hp) = (h[n - 2], h[n - 3]);
        diag[m - 1] = diag[m - 1] + he * (he + hp) / hp;
        if m > 1 {
            lower[m - 1] = lower[m - 1] - he * he / hp;
        }

        // Thomas algorithm
        let mut c = vec![S::zero(); m];
        let mut d = vec![S::zero(); m];
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..m {
            let w = diag[i] - lower[i] * c[i - 1];
            c[i] = upper[i] / w;
            d[i] = (rhs[i] - lower[i] * d[i - 1]) / w;
        }
        let mut mi = vec![S::zero(); m];
        mi[m - 1] = d[m - 1];
        for i in (0..m - 1).rev() {
            mi[i] = d[i] - c[i] * mi[i + 1];
        }

        let mut full = vec![S::zero(); n];
        full[1..(m + 1)].copy_from_slice(&mi);
        full[0] = ((h0 + h1) * full[1] - h0 * full[2]) / h1;
        full[n - 1] = ((he + hp) * full[n - 2] - he * full[n - 3]) / hp;
        full
    };

    let xs: Vec<S> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<S> = pts.iter().map(|p| p.y).collect();
    let mx = solve_axis(&|i| xs[i]);
    let my = solve_axis(&|i| ys[i]);

    let six = S::c(6.0);
    let two = S::c(2.0);
    (0..n - 1)
        .map(|i| {
            let hi = h[i];
            let co = |y: &[S], mm: &[S]| -> [S; 4] {
                let b = (y[i + 1] - y[i]) / hi - hi * (two * mm[i] + mm[i + 1]) / six;
                [y[i], b, mm[i] / two, (mm[i + 1] - mm[i]) / (six * hi)]
            };
            Piece { h: hi, ax: co(&xs, &mx), ay: co(&ys, &my) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2<f64> {
        Vec2::new(x, y)
    }

    #[test]
    fn collinear_is_straight() {
        let c = RefCurve::fit_g2(&[v(0.0, 0.0), v(3.0, 0.0), v(7.0, 0.0)]).unwrap();
        assert!((c.total_length() - 7.0).abs() < 1e-9);
        for i in 0..=20 {
            let s = 7.0 * i as f64 / 20.0;
            assert!(c.curvature_at_arc(s).abs() < 1e-9);
            assert!(c.point_at_arc(s).y.abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_many_points_stays_straight() {
        let pts: Vec<_> = (0..9).map(|i| v(i as f64 * 1.3, i as f64 * 2.6)).collect();
        let c = RefCurve::fit_g2(&pts).unwrap();
        let chord = pts[0].dist(*pts.last().unwrap());
        assert!((c.total_length() - chord).abs() < 1e-8);
        for i in 0..=30 {
            let s = c.total_length() * i as f64 / 30.0;
            assert!(c.curvature_at_arc(s).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolates_knots() {
        let pts = vec![v(0.0, 0.0), v(2.0, 1.0), v(4.0, 0.5), v(6.0, 2.0), v(7.5, 4.0)];
        let c = RefCurve::fit_g2(&pts).unwrap();
        // each knot must lie on the curve within 0.05 m; locate by scanning
        for p in &pts {
            let mut best = f64::INFINITY;
            for i in 0..=2000 {
                let s = c.total_length() * i as f64 / 2000.0;
                best = best.min(c.point_at_arc(s).dist(*p));
            }
            assert!(best < 0.05, "knot {:?} missed by {}", p, best);
        }
    }

    #[test]
    fn circle_curvature() {
        let r = 20.0;
        let pts: Vec<_> = (0..=12)
            .map(|i| {
                let a = 0.5 * std::f64::consts::PI * i as f64 / 12.0;
                v(r * a.cos(), r * a.sin())
            })
            .collect();
        let c = RefCurve::fit_g2(&pts).unwrap();
        let want = 1.0 / r;
        for i in 0..=100 {
            let s = c.total_length() * i as f64 / 100.0;
            let k = c.curvature_at_arc(s).abs();
            assert!(
                (k - want).abs() <= 0.05 * want,
                "curvature {} at s={} vs {}",
                k,
                s,
                want
            );
        }
    }

    #[test]
    fn join_continuity() {
        let pts = vec![v(0.0, 0.0), v(1.5, 2.0), v(3.0, 1.0), v(5.0, 3.0), v(6.0, 0.0), v(8.0, 1.0)];
        let c = RefCurve::fit_g2(&pts).unwrap();
        for j in 0..c.n_joins() {
            let (dp, dh, dk) = c.join_gaps(j);
            assert!(dp < 1e-9, "position gap {dp}");
            assert!(dh < 1e-6, "heading gap {dh}");
            assert!(dk < 1e-3, "curvature gap {dk}");
        }
    }

    #[test]
    fn length_at_least_chords() {
        let pts = vec![v(0.0, 0.0), v(1.0, 3.0), v(2.0, -1.0), v(4.0, 2.0)];
        let c = RefCurve::fit_g2(&pts).unwrap();
        let chords: f64 = pts.windows(2).map(|w| w[0].dist(w[1])).sum();
        assert!(c.total_length() >= chords - 1e-9);
    }

    #[test]
    fn duplicates_deduped_and_coincident_error() {
        let c = RefCurve::fit_g2(&[v(0.0, 0.0), v(0.0, 0.0), v(4.0, 0.0)]).unwrap();
        assert!(c.deduped);
        assert!((c.total_length() - 4.0).abs() < 1e-9);
        assert!(RefCurve::fit_g2(&[v(1.0, 1.0), v(1.0, 1.0)]).is_err());
        assert!(RefCurve::<f64>::fit_g2(&[]).is_err());
    }

    #[test]
    fn arc_length_queries_consistent() {
        let pts = vec![v(0.0, 0.0), v(2.0, 2.0), v(5.0, 1.0), v(8.0, 4.0)];
        let c = RefCurve::fit_g2(&pts).unwrap();
        // walking by arc increments accumulates matching chord lengths
        let n = 400;
        let mut prev = c.point_at_arc(0.0);
        let mut acc = 0.0;
        for i in 1..=n {
            let s = c.total_length() * i as f64 / n as f64;
            let p = c.point_at_arc(s);
            acc += prev.dist(p);
            prev = p;
        }
        assert!((acc - c.total_length()).abs() < 1e-3 * c.total_length());
        // endpoints exact
        assert!(c.point_at_arc(0.0).dist(pts[0]) < 1e-9);
        assert!(c.point_at_arc(c.total_length()).dist(*pts.last().unwrap()) < 1e-9);
    }
}
