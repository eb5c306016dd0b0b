//! Tape operations. Each op computes the forward value eagerly and records a
//! vector-Jacobian closure over `Rc` clones of whatever forward data the
//! backward pass needs.

use super::{Tape, Tensor, Vjp};
use crate::error::{Error, Result};
use std::rc::Rc;

fn shape_err(op: &str, lhs: &Tensor, rhs: &str) -> Error {
    Error::Shape { op: op.into(), lhs: lhs.shape_str(), rhs: rhs.into() }
}

impl Tape {
    fn binary_same_shape(
        &self,
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
        vjp: impl Fn(&[f64], &Rc<[f64]>, &Rc<[f64]>) -> (Vec<f64>, Vec<f64>) + 'static,
    ) -> Result<Tensor> {
        self.check(op, a);
        self.check(op, b);
        if a.shape != b.shape {
            return Err(shape_err(op, a, &b.shape_str()));
        }
        let data: Vec<f64> = a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect();
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let vjp: Vjp = Box::new(move |up| {
            let (ga, gb) = vjp(up, &ad, &bd);
            vec![ga, gb]
        });
        Ok(self.push(a.shape.clone(), Rc::from(data), vec![a.id, b.id], Some(vjp)))
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_same_shape("add", a, b, |x, y| x + y, |up, _, _| (up.to_vec(), up.to_vec()))
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, |up, _, _| {
            (up.to_vec(), up.iter().map(|g| -g).collect())
        })
    }

    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, |up, ad, bd| {
            let ga = up.iter().zip(bd.iter()).map(|(g, y)| g * y).collect();
            let gb = up.iter().zip(ad.iter()).map(|(g, x)| g * x).collect();
            (ga, gb)
        })
    }

    /// Elementwise quotient. The caller keeps the denominator away from zero.
    pub fn div(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_same_shape("div", a, b, |x, y| x / y, |up, ad, bd| {
            let ga: Vec<f64> = up.iter().zip(bd.iter()).map(|(g, y)| g / y).collect();
            let gb = up
                .iter()
                .zip(ad.iter().zip(bd.iter()))
                .map(|(g, (x, y))| -g * x / (y * y))
                .collect();
            (ga, gb)
        })
    }

    fn unary(
        &self,
        op: &'static str,
        a: &Tensor,
        f: impl Fn(f64) -> f64,
        // df receives (input, output) so saturating functions can reuse y
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        self.check(op, a);
        let data: Vec<f64> = a.data.iter().map(|&x| f(x)).collect();
        let out: Rc<[f64]> = Rc::from(data);
        let (ad, od) = (a.data.clone(), out.clone());
        let vjp: Vjp = Box::new(move |up| {
            vec![up
                .iter()
                .zip(ad.iter().zip(od.iter()))
                .map(|(g, (&x, &y))| g * df(x, y))
                .collect()]
        });
        self.push(a.shape.clone(), out, vec![a.id], Some(vjp))
    }

    pub fn neg(&self, a: &Tensor) -> Tensor {
        self.unary("neg", a, |x| -x, |_, _| -1.0)
    }

    pub fn relu(&self, a: &Tensor) -> Tensor {
        self.unary("relu", a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&self, a: &Tensor) -> Tensor {
        self.unary("tanh", a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self, a: &Tensor) -> Tensor {
        self.unary("sigmoid", a, |x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn exp(&self, a: &Tensor) -> Tensor {
        self.unary("exp", a, f64::exp, |_, y| y)
    }

    pub fn ln(&self, a: &Tensor) -> Tensor {
        self.unary("ln", a, f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&self, a: &Tensor) -> Tensor {
        self.unary("sqrt", a, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn scale(&self, a: &Tensor, c: f64) -> Tensor {
        self.unary("scale", a, move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, a: &Tensor, c: f64) -> Tensor {
        self.unary("add_scalar", a, move |x| x + c, |_, _| 1.0)
    }

    /// x[n,d] + r broadcast over rows; r is [d] or [1,d].
    pub fn add_bcast_row(&self, x: &Tensor, r: &Tensor) -> Result<Tensor> {
        self.check("add_bcast_row", x);
        self.check("add_bcast_row", r);
        let (n, d) = (x.rows(), x.cols());
        if x.shape.len() != 2 || r.len() != d {
            return Err(shape_err("add_bcast_row", x, &r.shape_str()));
        }
        let mut data = x.data.to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += r.data[j];
            }
        }
        let vjp: Vjp = Box::new(move |up| {
            let mut gr = vec![0.0; d];
            for i in 0..n {
                for j in 0..d {
                    gr[j] += up[i * d + j];
                }
            }
            vec![up.to_vec(), gr]
        });
        Ok(self.push(x.shape.clone(), Rc::from(data), vec![x.id, r.id], Some(vjp)))
    }

    /// x[n,d] with row i scaled by m[i]; m is [n] or [n,1].
    pub fn mul_bcast_col(&self, x: &Tensor, m: &Tensor) -> Result<Tensor> {
        self.check("mul_bcast_col", x);
        self.check("mul_bcast_col", m);
        let (n, d) = (x.rows(), x.cols());
        if x.shape.len() != 2 || m.len() != n {
            return Err(shape_err("mul_bcast_col", x, &m.shape_str()));
        }
        let mut data = x.data.to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] *= m.data[i];
            }
        }
        let (xd, md) = (x.data.clone(), m.data.clone());
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; n * d];
            let mut gm = vec![0.0; n];
            for i in 0..n {
                for j in 0..d {
                    gx[i * d + j] = up[i * d + j] * md[i];
                    gm[i] += up[i * d + j] * xd[i * d + j];
                }
            }
            vec![gx, gm]
        });
        Ok(self.push(x.shape.clone(), Rc::from(data), vec![x.id, m.id], Some(vjp)))
    }

    /// Every element of x times a single-element tensor s.
    pub fn mul_scalar_t(&self, x: &Tensor, s: &Tensor) -> Result<Tensor> {
        self.check("mul_scalar_t", x);
        self.check("mul_scalar_t", s);
        if s.len() != 1 {
            return Err(shape_err("mul_scalar_t", x, &s.shape_str()));
        }
        let sv = s.data[0];
        let data: Vec<f64> = x.data.iter().map(|&v| v * sv).collect();
        let xd = x.data.clone();
        let vjp: Vjp = Box::new(move |up| {
            let gx = up.iter().map(|g| g * sv).collect();
            let gs = vec![up.iter().zip(xd.iter()).map(|(g, v)| g * v).sum()];
            vec![gx, gs]
        });
        Ok(self.push(x.shape.clone(), Rc::from(data), vec![x.id, s.id], Some(vjp)))
    }

    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.check("matmul", a);
        self.check("matmul", b);
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
            return Err(shape_err("matmul", a, &b.shape_str()));
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let data = mm(&a.data, &b.data, m, k, n, false, false);
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let vjp: Vjp = Box::new(move |up| {
            // dA = up Bt, dB = At up
            let ga = mm(up, &bd, m, n, k, false, true);
            let gb = mm(&ad, up, k, m, n, true, false);
            vec![ga, gb]
        });
        Ok(self.push(vec![m, n], Rc::from(data), vec![a.id, b.id], Some(vjp)))
    }

    /// a[m,k] times b[n,k] transposed: a bt -> [m,n].
    pub fn matmul_nt(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.check("matmul_nt", a);
        self.check("matmul_nt", b);
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[1] {
            return Err(shape_err("matmul_nt", a, &b.shape_str()));
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[0]);
        let data = mm(&a.data, &b.data, m, k, n, false, true);
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let vjp: Vjp = Box::new(move |up| {
            // out = A Bt; dA = up B, dB = upt A
            let ga = mm(up, &bd, m, n, k, false, false);
            let gb = mm(up, &ad, n, m, k, true, false);
            vec![ga, gb]
        });
        Ok(self.push(vec![m, n], Rc::from(data), vec![a.id, b.id], Some(vjp)))
    }

    pub fn gather_rows(&self, x: &Tensor, idx: &[usize]) -> Result<Tensor> {
        self.check("gather_rows", x);
        if x.shape.len() != 2 {
            return Err(shape_err("gather_rows", x, "2-d"));
        }
        let (n, d) = (x.shape[0], x.shape[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err("gather_rows", x, &format!("index {bad}")));
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&x.data[i * d..(i + 1) * d]);
        }
        let rows = idx.len();
        let idx = idx.to_vec();
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; n * d];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..d {
                    gx[i * d + j] += up[r * d + j];
                }
            }
            vec![gx]
        });
        Ok(self.push(vec![rows, d], Rc::from(data), vec![x.id], Some(vjp)))
    }

    pub fn slice_rows(&self, x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
        self.check("slice_rows", x);
        if x.shape.len() != 2 || start > end || end > x.shape[0] {
            return Err(shape_err("slice_rows", x, &format!("rows {start}..{end}")));
        }
        let (n, d) = (x.shape[0], x.shape[1]);
        let data = x.data[start * d..end * d].to_vec();
        let rows = end - start;
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; n * d];
            gx[start * d..end * d].copy_from_slice(up);
            vec![gx]
        });
        Ok(self.push(vec![rows, d], Rc::from(data), vec![x.id], Some(vjp)))
    }

    pub fn concat_rows(&self, parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let d = parts[0].cols();
        let mut data = Vec::new();
        let mut rows = 0usize;
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            self.check("concat_rows", p);
            if p.shape.len() > 2 || p.cols() != d {
                return Err(shape_err("concat_rows", p, &format!("[_, {d}]")));
            }
            rows += p.rows();
            sizes.push(p.len());
            data.extend_from_slice(&p.data);
        }
        let vjp: Vjp = Box::new(move |up| {
            let mut out = Vec::with_capacity(sizes.len());
            let mut at = 0usize;
            for &len in &sizes {
                out.push(up[at..at + len].to_vec());
                at += len;
            }
            out
        });
        let parents = parts.iter().map(|p| p.id).collect();
        Ok(self.push(vec![rows, d], Rc::from(data), parents, Some(vjp)))
    }

    pub fn concat_cols(&self, parts: &[&Tensor]) -> Result<Tensor> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let n = parts[0].rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            self.check("concat_cols", p);
            if p.rows() != n {
                return Err(shape_err("concat_cols", p, &format!("[{n}, _]")));
            }
            widths.push(p.cols());
        }
        let d: usize = widths.iter().sum();
        let mut data = vec![0.0; n * d];
        let mut col = 0usize;
        for (p, &w) in parts.iter().zip(&widths) {
            for i in 0..n {
                data[i * d + col..i * d + col + w].copy_from_slice(&p.data[i * w..(i + 1) * w]);
            }
            col += w;
        }
        let widths_v = widths.clone();
        let vjp: Vjp = Box::new(move |up| {
            let mut out: Vec<Vec<f64>> = widths_v.iter().map(|&w| vec![0.0; n * w]).collect();
            let mut col = 0usize;
            for (g, &w) in out.iter_mut().zip(&widths_v) {
                for i in 0..n {
                    g[i * w..(i + 1) * w].copy_from_slice(&up[i * d + col..i * d + col + w]);
                }
                col += w;
            }
            out
        });
        let parents = parts.iter().map(|p| p.id).collect();
        Ok(self.push(vec![n, d], Rc::from(data), parents, Some(vjp)))
    }

    pub fn reshape(&self, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
        self.check("reshape", x);
        if shape.iter().product::<usize>() != x.len() {
            return Err(shape_err("reshape", x, &format!("{shape:?}")));
        }
        let vjp: Vjp = Box::new(|up| vec![up.to_vec()]);
        Ok(self.push(shape.to_vec(), x.data.clone(), vec![x.id], Some(vjp)))
    }

    pub fn sum_all(&self, x: &Tensor) -> Tensor {
        self.check("sum_all", x);
        let s: f64 = x.data.iter().sum();
        let len = x.len();
        let vjp: Vjp = Box::new(move |up| vec![vec![up[0]; len]]);
        self.push(vec![1], Rc::from(vec![s]), vec![x.id], Some(vjp))
    }

    /// Mean of elements selected by a 0/1 weight of the same length. A zero
    /// weight sum yields 0 with a zero gradient.
    pub fn masked_mean(&self, x: &Tensor, weight: &[f64]) -> Result<Tensor> {
        self.check("masked_mean", x);
        if weight.len() != x.len() {
            return Err(shape_err("masked_mean", x, &format!("weight len {}", weight.len())));
        }
        let wsum: f64 = weight.iter().sum();
        let val = if wsum > 0.0 {
            x.data.iter().zip(weight).map(|(v, w)| v * w).sum::<f64>() / wsum
        } else {
            0.0
        };
        let w = weight.to_vec();
        let vjp: Vjp = Box::new(move |up| {
            if wsum > 0.0 {
                vec![w.iter().map(|wi| up[0] * wi / wsum).collect()]
            } else {
                vec![vec![0.0; w.len()]]
            }
        });
        Ok(self.push(vec![1], Rc::from(vec![val]), vec![x.id], Some(vjp)))
    }

    pub fn row_dot(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.check("row_dot", a);
        self.check("row_dot", b);
        if a.shape != b.shape || a.shape.len() != 2 {
            return Err(shape_err("row_dot", a, &b.shape_str()));
        }
        let (n, d) = (a.shape[0], a.shape[1]);
        let data: Vec<f64> = (0..n)
            .map(|i| (0..d).map(|j| a.data[i * d + j] * b.data[i * d + j]).sum())
            .collect();
        let (ad, bd) = (a.data.clone(), b.data.clone());
        let vjp: Vjp = Box::new(move |up| {
            let mut ga = vec![0.0; n * d];
            let mut gb = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    ga[i * d + j] = up[i] * bd[i * d + j];
                    gb[i * d + j] = up[i] * ad[i * d + j];
                }
            }
            vec![ga, gb]
        });
        Ok(self.push(vec![n], Rc::from(data), vec![a.id, b.id], Some(vjp)))
    }

    /// Per-row euclidean norm smoothed by eps inside the square root.
    pub fn row_norm_eps(&self, x: &Tensor, eps: f64) -> Result<Tensor> {
        self.check("row_norm_eps", x);
        if x.shape.len() != 2 {
            return Err(shape_err("row_norm_eps", x, "2-d"));
        }
        let (n, d) = (x.shape[0], x.shape[1]);
        let data: Vec<f64> = (0..n)
            .map(|i| ((0..d).map(|j| x.data[i * d + j].powi(2)).sum::<f64>() + eps).sqrt())
            .collect();
        let out: Rc<[f64]> = Rc::from(data);
        let (xd, od) = (x.data.clone(), out.clone());
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    gx[i * d + j] = up[i] * xd[i * d + j] / od[i];
                }
            }
            vec![gx]
        });
        Ok(self.push(vec![n], out, vec![x.id], Some(vjp)))
    }

    /// Prefix sums down the rows; the backward pass is a suffix sum.
    pub fn cumsum_rows(&self, x: &Tensor) -> Result<Tensor> {
        self.check("cumsum_rows", x);
        if x.shape.len() != 2 {
            return Err(shape_err("cumsum_rows", x, "2-d"));
        }
        let (n, d) = (x.shape[0], x.shape[1]);
        let mut data = x.data.to_vec();
        for i in 1..n {
            for j in 0..d {
                data[i * d + j] += data[(i - 1) * d + j];
            }
        }
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = up.to_vec();
            for i in (0..n.saturating_sub(1)).rev() {
                for j in 0..d {
                    gx[i * d + j] += gx[(i + 1) * d + j];
                }
            }
            vec![gx]
        });
        Ok(self.push(x.shape.clone(), Rc::from(data), vec![x.id], Some(vjp)))
    }

    /// Row-wise softmax restricted to entries with mask 1. Fully masked rows
    /// come out as all zeros rather than NaN.
    pub fn softmax_masked(&self, x: &Tensor, mask: &[f64]) -> Result<Tensor> {
        self.check("softmax_masked", x);
        if x.shape.len() != 2 || mask.len() != x.len() {
            return Err(shape_err("softmax_masked", x, &format!("mask len {}", mask.len())));
        }
        let (n, d) = (x.shape[0], x.shape[1]);
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &x.data[i * d..(i + 1) * d];
            let m = &mask[i * d..(i + 1) * d];
            let mut mx = f64::NEG_INFINITY;
            for j in 0..d {
                if m[j] > 0.0 {
                    mx = mx.max(row[j]);
                }
            }
            if !mx.is_finite() {
                continue;
            }
            let mut s = 0.0;
            for j in 0..d {
                if m[j] > 0.0 {
                    let e = (row[j] - mx).exp();
                    data[i * d + j] = e;
                    s += e;
                }
            }
            for j in 0..d {
                data[i * d + j] /= s;
            }
        }
        let out: Rc<[f64]> = Rc::from(data);
        let od = out.clone();
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; n * d];
            for i in 0..n {
                let p = &od[i * d..(i + 1) * d];
                let u = &up[i * d..(i + 1) * d];
                let dot: f64 = p.iter().zip(u).map(|(pi, ui)| pi * ui).sum();
                for j in 0..d {
                    gx[i * d + j] = p[j] * (u[j] - dot);
                }
            }
            vec![gx]
        });
        Ok(self.push(x.shape.clone(), out, vec![x.id], Some(vjp)))
    }

    pub fn layer_norm(&self, x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        self.check("layer_norm", x);
        self.check("layer_norm", gain);
        self.check("layer_norm", bias);
        if x.shape.len() != 2 || gain.len() != x.shape[1] || bias.len() != x.shape[1] {
            return Err(shape_err("layer_norm", x, &gain.shape_str()));
        }
        let (n, d) = (x.shape[0], x.shape[1]);
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &x.data[i * d..(i + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                let h = (row[j] - mu) * istd;
                xhat[i * d + j] = h;
                data[i * d + j] = gain.data[j] * h + bias.data[j];
            }
        }
        let xhat: Rc<[f64]> = Rc::from(xhat);
        let inv_std: Rc<[f64]> = Rc::from(inv_std);
        let gd = gain.data.clone();
        let (xh, istd) = (xhat.clone(), inv_std.clone());
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; n * d];
            let mut gg = vec![0.0; d];
            let mut gb = vec![0.0; d];
            for i in 0..n {
                let u = &up[i * d..(i + 1) * d];
                let h = &xh[i * d..(i + 1) * d];
                let mut mean_dh = 0.0;
                let mut mean_dh_h = 0.0;
                for j in 0..d {
                    gg[j] += u[j] * h[j];
                    gb[j] += u[j];
                    let dh = u[j] * gd[j];
                    mean_dh += dh;
                    mean_dh_h += dh * h[j];
                }
                mean_dh /= d as f64;
                mean_dh_h /= d as f64;
                for j in 0..d {
                    let dh = u[j] * gd[j];
                    gx[i * d + j] = istd[i] * (dh - mean_dh - h[j] * mean_dh_h);
                }
            }
            vec![gx, gg, gb]
        });
        Ok(self.push(x.shape.clone(), Rc::from(data), vec![x.id, gain.id, bias.id], Some(vjp)))
    }

    /// Non-overlapping patch convolution: kernel size equals stride, so every
    /// input cell contributes to exactly one output cell.
    pub fn conv2d_patch(&self, x: &Tensor, w: &Tensor, b: &Tensor, k: usize) -> Result<Tensor> {
        self.check("conv2d_patch", x);
        self.check("conv2d_patch", w);
        self.check("conv2d_patch", b);
        if x.shape.len() != 3 || w.shape.len() != 4 {
            return Err(shape_err("conv2d_patch", x, &w.shape_str()));
        }
        let (c, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
        let (o, wc, kh, kw) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
        if wc != c || kh != k || kw != k || h % k != 0 || wd % k != 0 || b.len() != o {
            return Err(shape_err("conv2d_patch", x, &w.shape_str()));
        }
        let (oh, ow) = (h / k, wd / k);
        let mut data = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                acc += w.data[((oc * c + ic) * k + ky) * k + kx]
                                    * x.data[(ic * h + oy * k + ky) * wd + ox * k + kx];
                            }
                        }
                    }
                    data[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        let (xd, wdat) = (x.data.clone(), w.data.clone());
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; c * h * wd];
            let mut gw = vec![0.0; o * c * k * k];
            let mut gb = vec![0.0; o];
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = up[(oc * oh + oy) * ow + ox];
                        gb[oc] += g;
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wi = ((oc * c + ic) * k + ky) * k + kx;
                                    let xi = (ic * h + oy * k + ky) * wd + ox * k + kx;
                                    gw[wi] += g * xd[xi];
                                    gx[xi] += g * wdat[wi];
                                }
                            }
                        }
                    }
                }
            }
            vec![gx, gw, gb]
        });
        Ok(self.push(vec![o, oh, ow], Rc::from(data), vec![x.id, w.id, b.id], Some(vjp)))
    }

    /// [c,h,w] feature map to a [h*w, c] token matrix, row-major over cells.
    pub fn tokens_from_chw(&self, x: &Tensor) -> Result<Tensor> {
        self.check("tokens_from_chw", x);
        if x.shape.len() != 3 {
            return Err(shape_err("tokens_from_chw", x, "3-d"));
        }
        let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let cells = h * w;
        let mut data = vec![0.0; cells * c];
        for ch in 0..c {
            for cell in 0..cells {
                data[cell * c + ch] = x.data[ch * cells + cell];
            }
        }
        let vjp: Vjp = Box::new(move |up| {
            let mut gx = vec![0.0; c * cells];
            for ch in 0..c {
                for cell in 0..cells {
                    gx[ch * cells + cell] = up[cell * c + ch];
                }
            }
            vec![gx]
        });
        Ok(self.push(vec![cells, c], Rc::from(data), vec![x.id], Some(vjp)))
    }

    /// Winner-take-all over a score vector: forward emits a one-hot of the
    /// earliest argmax, backward flows the softmax Jacobian (straight-through).
    pub fn hard_softmax_st(&self, x: &Tensor) -> Result<Tensor> {
        self.check("hard_softmax_st", x);
        if x.shape.len() != 1 || x.is_empty() {
            return Err(shape_err("hard_softmax_st", x, "non-empty 1-d"));
        }
        let n = x.len();
        let best = x
            .data
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &v)| if v > x.data[acc] { i } else { acc });
        let mut data = vec![0.0; n];
        data[best] = 1.0;
        let mx = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.data.iter().map(|&v| (v - mx).exp()).collect();
        let s: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|e| e / s).collect();
        let vjp: Vjp = Box::new(move |up| {
            let dot: f64 = p.iter().zip(up).map(|(pi, ui)| pi * ui).sum();
            vec![p.iter().zip(up).map(|(pi, ui)| pi * (ui - dot)).collect()]
        });
        Ok(self.push(vec![n], Rc::from(data), vec![x.id], Some(vjp)))
    }

    /// Smooth minimum of the entries and a constant cap:
    /// -ln(sum exp(-beta x_i) + exp(-beta cap)) / beta, computed stably.
    pub fn softmin_cap(&self, x: &Tensor, cap: f64, beta: f64) -> Result<Tensor> {
        self.check("softmin_cap", x);
        if x.shape.len() != 1 || x.is_empty() {
            return Err(shape_err("softmin_cap", x, "non-empty 1-d"));
        }
        let m = x.data.iter().cloned().fold(cap, f64::min);
        let mut s = (-beta * (cap - m)).exp();
        let weights: Vec<f64> = x
            .data
            .iter()
            .map(|&v| {
                let e = (-beta * (v - m)).exp();
                s += e;
                e
            })
            .collect();
        let val = m - (s.ln()) / beta;
        let vjp: Vjp = Box::new(move |up| vec![weights.iter().map(|w| up[0] * w / s).collect()]);
        Ok(self.push(vec![1], Rc::from(vec![val]), vec![x.id], Some(vjp)))
    }

    /// Huber (delta 1) against a constant target, summed over columns,
    /// averaged over rows weighted by `row_weight`.
    pub fn smooth_l1_masked_mean(&self, pred: &Tensor, target: &[f64], row_weight: &[f64]) -> Result<Tensor> {
        self.check("smooth_l1_masked_mean", pred);
        if pred.shape.len() != 2 || target.len() != pred.len() || row_weight.len() != pred.shape[0] {
            return Err(shape_err("smooth_l1_masked_mean", pred, &format!("target len {}", target.len())));
        }
        let (n, d) = (pred.shape[0], pred.shape[1]);
        let wsum: f64 = row_weight.iter().sum();
        let mut val = 0.0;
        let mut grad = vec![0.0; n * d];
        if wsum > 0.0 {
            for i in 0..n {
                if row_weight[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    let e = pred.data[i * d + j] - target[i * d + j];
                    let (l, dl) = if e.abs() < 1.0 { (0.5 * e * e, e) } else { (e.abs() - 0.5, e.signum()) };
                    val += row_weight[i] * l;
                    grad[i * d + j] = row_weight[i] * dl / wsum;
                }
            }
            val /= wsum;
        }
        let vjp: Vjp = Box::new(move |up| vec![grad.iter().map(|g| g * up[0]).collect()]);
        Ok(self.push(vec![1], Rc::from(vec![val]), vec![pred.id], Some(vjp)))
    }

    /// Absolute error against a constant target, same weighting scheme.
    pub fn l1_masked_mean(&self, pred: &Tensor, target: &[f64], row_weight: &[f64]) -> Result<Tensor> {
        self.check("l1_masked_mean", pred);
        if pred.shape.len() != 2 || target.len() != pred.len() || row_weight.len() != pred.shape[0] {
            return Err(shape_err("l1_masked_mean", pred, &format!("target len {}", target.len())));
        }
        let (n, d) = (pred.shape[0], pred.shape[1]);
        let wsum: f64 = row_weight.iter().sum();
        let mut val = 0.0;
        let mut grad = vec![0.0; n * d];
        if wsum > 0.0 {
            for i in 0..n {
                if row_weight[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    let e = pred.data[i * d + j] - target[i * d + j];
                    val += row_weight[i] * e.abs();
                    grad[i * d + j] = row_weight[i] * e.signum() / wsum;
                }
            }
            val /= wsum;
        }
        let vjp: Vjp = Box::new(move |up| vec![grad.iter().map(|g| g * up[0]).collect()]);
        Ok(self.push(vec![1], Rc::from(vec![val]), vec![pred.id], Some(vjp)))
    }
}

/// Dense matmul with optional transposes; shapes are (m,k) x (k,n).
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                let bv = if tb { b[j * k + p] } else { b[p * n + j] };
                out[i * n + j] += av * bv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::Tape;

    #[test]
    fn matmul_matches_by_hand() {
        let t = Tape::new();
        let a = t.constant(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = t.constant(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = t.matmul(&a, &b).unwrap();
        assert_eq!(&*c.data, &[58.0, 64.0, 139.0, 154.0]);
        let bt = t.constant(&[2, 3], vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]).unwrap();
        let c2 = t.matmul_nt(&a, &bt).unwrap();
        assert_eq!(&*c.data, &*c2.data);
    }

    #[test]
    fn cumsum_and_backward() {
        let t = Tape::new();
        let x = t.leaf(&[3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let c = t.cumsum_rows(&x).unwrap();
        assert_eq!(&*c.data, &[1.0, 3.0, 6.0]);
        let s = t.sum_all(&c);
        let g = t.backward(&s).unwrap();
        // element i feeds rows i..n
        assert_eq!(g.wrt(&x).unwrap(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn masked_softmax_zeroes_fully_masked_rows() {
        let t = Tape::new();
        let x = t.constant(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mask = vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let p = t.softmax_masked(&x, &mask).unwrap();
        assert!((p.data[0] + p.data[1] - 1.0).abs() < 1e-12);
        assert_eq!(p.data[2], 0.0);
        assert_eq!(&p.data[3..6], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn winner_take_all_emits_one_hot() {
        let t = Tape::new();
        let x = t.leaf(&[3], vec![0.1, 2.0, 2.0]).unwrap();
        let y = t.hard_softmax_st(&x).unwrap();
        // earliest argmax wins the tie
        assert_eq!(&*y.data, &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn softmin_cap_tracks_hard_min_from_above() {
        let t = Tape::new();
        let x = t.constant(&[3], vec![4.0, 9.0, 2.5]).unwrap();
        let v = t.softmin_cap(&x, 5.0, 80.0 / 5.0).unwrap().scalar();
        assert!(v <= 2.5 + 1e-12);
        assert!(2.5 - v < 0.05, "softmin {v} strayed from hard min 2.5");
        // cap dominates when all entries are far above it
        let y = t.constant(&[2], vec![40.0, 60.0]).unwrap();
        let w = t.softmin_cap(&y, 5.0, 80.0 / 5.0).unwrap().scalar();
        assert!((w - 5.0).abs() < 1e-9);
    }

    #[test]
    fn conv_patch_shapes_and_identity_kernel() {
        let t = Tape::new();
        // 1 channel, 4x4, k=2, single output channel summing each patch
        let x = t.constant(&[1, 4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let w = t.constant(&[1, 1, 2, 2], vec![1.0; 4]).unwrap();
        let b = t.constant(&[1], vec![0.0]).unwrap();
        let y = t.conv2d_patch(&x, &w, &b, 2).unwrap();
        assert_eq!(y.shape, vec![1, 2, 2]);
        assert_eq!(&*y.data, &[10.0, 18.0, 42.0, 50.0]);
    }
}
