//! Central-difference gradient checking. The op suite drives every operation
//! through a scalar composite and compares tape gradients against finite
//! differences; the trainer never runs this, tests and the acceptance gate do.

use super::{Tape, Tensor};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Worst relative disagreement; tiny pairs compare against an absolute floor.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

type Build = fn(&Tape, &Tensor) -> Tensor;

pub struct FdCase {
    pub name: &'static str,
    pub dim: usize,
    pub build: Build,
    /// Forward surrogate for straight-through ops whose recorded gradient is
    /// deliberately not the jacobian of the hard forward.
    pub fd_build: Option<Build>,
}

fn case(name: &'static str, dim: usize, build: Build) -> FdCase {
    FdCase { name, dim, build, fd_build: None }
}

fn col(t: &Tape, x: &Tensor, lo: usize, hi: usize, shape: &[usize]) -> Tensor {
    let s = t.slice_rows(x, lo, hi).unwrap();
    t.reshape(&s, shape).unwrap()
}

/// Mixes a reduction over the last op output into a scalar with fixed
/// non-uniform weights so every output coordinate gets a distinct gradient.
fn mix(t: &Tape, y: &Tensor) -> Tensor {
    let w: Vec<f64> = (0..y.len()).map(|i| 0.3 + 0.1 * i as f64).collect();
    let flat = t.reshape(y, &[y.len(), 1]).unwrap();
    let wt = t.constant(&[y.len(), 1], w).unwrap();
    t.sum_all(&t.mul(&flat, &wt).unwrap())
}

pub fn op_suite() -> Vec<FdCase> {
    let mut cases = vec![
        case("add", 8, |t, x| {
            let a = col(t, x, 0, 4, &[2, 2]);
            let b = col(t, x, 4, 8, &[2, 2]);
            mix(t, &t.add(&a, &b).unwrap())
        }),
        case("sub", 8, |t, x| {
            let a = col(t, x, 0, 4, &[2, 2]);
            let b = col(t, x, 4, 8, &[2, 2]);
            mix(t, &t.sub(&a, &b).unwrap())
        }),
        case("mul", 8, |t, x| {
            let a = col(t, x, 0, 4, &[2, 2]);
            let b = col(t, x, 4, 8, &[2, 2]);
            mix(t, &t.mul(&a, &b).unwrap())
        }),
        case("div", 8, |t, x| {
            let a = col(t, x, 0, 4, &[2, 2]);
            let raw = col(t, x, 4, 8, &[2, 2]);
            // keep the denominator in [0.5, 1.5]
            let b = t.add_scalar(&t.sigmoid(&raw), 0.5);
            mix(t, &t.div(&a, &b).unwrap())
        }),
        case("neg", 4, |t, x| mix(t, &t.neg(&col(t, x, 0, 4, &[2, 2])))),
        case("relu", 6, |t, x| mix(t, &t.relu(&col(t, x, 0, 6, &[3, 2])))),
        case("tanh", 6, |t, x| mix(t, &t.tanh(&col(t, x, 0, 6, &[3, 2])))),
        case("sigmoid", 6, |t, x| mix(t, &t.sigmoid(&col(t, x, 0, 6, &[3, 2])))),
        case("exp", 6, |t, x| mix(t, &t.exp(&t.scale(&col(t, x, 0, 6, &[3, 2]), 0.5)))),
        case("ln", 6, |t, x| {
            let pos = t.add_scalar(&t.sigmoid(&col(t, x, 0, 6, &[3, 2])), 0.5);
            mix(t, &t.ln(&pos))
        }),
        case("sqrt", 6, |t, x| {
            let pos = t.add_scalar(&t.sigmoid(&col(t, x, 0, 6, &[3, 2])), 0.5);
            mix(t, &t.sqrt(&pos))
        }),
        case("scale_add_scalar", 5, |t, x| {
            let a = col(t, x, 0, 5, &[5, 1]);
            mix(t, &t.add_scalar(&t.scale(&a, -1.7), 0.3))
        }),
        case("add_bcast_row", 9, |t, x| {
            let a = col(t, x, 0, 6, &[2, 3]);
            let r = col(t, x, 6, 9, &[3]);
            mix(t, &t.add_bcast_row(&a, &r).unwrap())
        }),
        case("mul_bcast_col", 8, |t, x| {
            let a = col(t, x, 0, 6, &[2, 3]);
            let m = col(t, x, 6, 8, &[2]);
            mix(t, &t.mul_bcast_col(&a, &m).unwrap())
        }),
        case("mul_scalar_t", 7, |t, x| {
            let a = col(t, x, 0, 6, &[3, 2]);
            let s = col(t, x, 6, 7, &[1]);
            mix(t, &t.mul_scalar_t(&a, &s).unwrap())
        }),
        case("matmul", 12, |t, x| {
            let a = col(t, x, 0, 6, &[2, 3]);
            let b = col(t, x, 6, 12, &[3, 2]);
            mix(t, &t.matmul(&a, &b).unwrap())
        }),
        case("matmul_nt", 12, |t, x| {
            let a = col(t, x, 0, 6, &[2, 3]);
            let b = col(t, x, 6, 12, &[2, 3]);
            mix(t, &t.matmul_nt(&a, &b).unwrap())
        }),
        case("gather_rows", 8, |t, x| {
            let a = col(t, x, 0, 8, &[4, 2]);
            mix(t, &t.gather_rows(&a, &[3, 1, 1, 0]).unwrap())
        }),
        case("slice_concat_rows", 10, |t, x| {
            let a = col(t, x, 0, 6, &[3, 2]);
            let b = col(t, x, 6, 10, &[2, 2]);
            let top = t.slice_rows(&a, 0, 2).unwrap();
            mix(t, &t.concat_rows(&[&top, &b]).unwrap())
        }),
        case("concat_cols", 10, |t, x| {
            let a = col(t, x, 0, 6, &[2, 3]);
            let b = col(t, x, 6, 10, &[2, 2]);
            mix(t, &t.concat_cols(&[&a, &b]).unwrap())
        }),
        case("sum_all", 7, |t, x| t.sum_all(&col(t, x, 0, 7, &[7, 1]))),
        case("masked_mean", 8, |t, x| {
            let a = col(t, x, 0, 8, &[8, 1]);
            t.masked_mean(&a, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap()
        }),
        case("row_dot", 12, |t, x| {
            let a = col(t, x, 0, 6, &[3, 2]);
            let b = col(t, x, 6, 12, &[3, 2]);
            mix(t, &t.row_dot(&a, &b).unwrap())
        }),
        case("row_norm_eps", 8, |t, x| mix(t, &t.row_norm_eps(&col(t, x, 0, 8, &[4, 2]), 1e-6).unwrap())),
        case("cumsum_rows", 8, |t, x| mix(t, &t.cumsum_rows(&col(t, x, 0, 8, &[4, 2])).unwrap())),
        case("softmax_masked", 8, |t, x| {
            let a = col(t, x, 0, 8, &[2, 4]);
            mix(t, &t.softmax_masked(&a, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]).unwrap())
        }),
        case("layer_norm", 16, |t, x| {
            let a = col(t, x, 0, 8, &[2, 4]);
            let gain = col(t, x, 8, 12, &[4]);
            let bias = col(t, x, 12, 16, &[4]);
            mix(t, &t.layer_norm(&a, &gain, &bias, 1e-5).unwrap())
        }),
        case("conv2d_patch", 98, |t, x| {
            // [1,8,8] input (64) + [2,1,4,4] kernel (32) + bias (2)
            let img = col(t, x, 0, 64, &[1, 8, 8]);
            let w = col(t, x, 64, 96, &[2, 1, 4, 4]);
            let b = col(t, x, 96, 98, &[2]);
            mix(t, &t.conv2d_patch(&img, &w, &b, 4).unwrap())
        }),
        case("tokens_from_chw", 12, |t, x| {
            let img = col(t, x, 0, 12, &[3, 2, 2]);
            mix(t, &t.tokens_from_chw(&img).unwrap())
        }),
        case("softmin_cap", 6, |t, x| {
            let d = t.row_norm_eps(&col(t, x, 0, 6, &[3, 2]), 1e-9).unwrap();
            t.softmin_cap(&d, 1.2, 80.0 / 1.2).unwrap()
        }),
        case("smooth_l1_masked_mean", 8, |t, x| {
            let p = col(t, x, 0, 8, &[4, 2]);
            let target = [0.3, -0.2, 1.6, 0.0, -2.0, 0.4, 0.0, 0.0];
            t.smooth_l1_masked_mean(&p, &target, &[1.0, 1.0, 0.0, 1.0]).unwrap()
        }),
        case("l1_masked_mean", 8, |t, x| {
            let p = col(t, x, 0, 8, &[4, 2]);
            let target = [0.31, -0.27, 1.63, 0.08, -2.04, 0.46, 0.11, 0.53];
            t.l1_masked_mean(&p, &target, &[1.0, 0.0, 1.0, 1.0]).unwrap()
        }),
    ];
    // straight-through argmax: the recorded backward is the softmax jacobian,
    // so finite differences run against the soft forward
    cases.push(FdCase {
        name: "hard_softmax_st",
        dim: 5,
        build: |t, x| {
            let a = col(t, x, 0, 5, &[5]);
            mix(t, &t.hard_softmax_st(&a).unwrap())
        },
        fd_build: Some(|t, x| {
            let a = col(t, x, 0, 5, &[5, 1]);
            let e = t.exp(&a);
            let s = t.sum_all(&e);
            let denom = t.concat_rows(&[&s, &s, &s, &s, &s]).unwrap();
            let sm = t.div(&e, &denom).unwrap();
            mix(t, &t.reshape(&sm, &[5]).unwrap())
        }),
    });
    cases
}

/// Runs every case once for the given seed; returns the worst relative error
/// and the op that produced it.
pub fn run_op_suite(seed: u64) -> (f64, &'static str) {
    let mut worst = (0.0f64, "none");
    for c in op_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv(c.name));
        let x0: Vec<f64> = (0..c.dim).map(|_| rng.gen_range(-2.0..2.0)).collect();

        let tape = Tape::new();
        let leaf = tape.leaf(&[c.dim, 1], x0.clone()).unwrap();
        let y = (c.build)(&tape, &leaf);
        let grads = tape.backward(&y).unwrap();
        let analytic = grads.wrt(&leaf).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; c.dim]);

        let fd_fn = c.fd_build.unwrap_or(c.build);
        let mut f = |x: &[f64]| -> f64 {
            let t = Tape::new();
            let l = t.leaf(&[c.dim, 1], x.to_vec()).unwrap();
            fd_fn(&t, &l).scalar()
        };
        let numeric = fd_gradient(&mut f, &x0);
        let err = max_rel_error(&analytic, &numeric);
        if err > worst.0 {
            worst = (err, c.name);
        }
    }
    worst
}

pub(crate) fn fnv(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..10 {
            let (err, name) = run_op_suite(seed);
            assert!(err < 1e-4, "op {name} fd mismatch {err} at seed {seed}");
        }
    }
}
