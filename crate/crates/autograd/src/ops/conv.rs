use std::sync::Arc;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// How out-of-range taps are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Zeros,
    /// Mirror without repeating the edge (`-1 -> 1`).
    Reflect,
    /// Clamp to the nearest edge pixel.
    Replicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub mode: Padding,
}

impl Conv2dSpec {
    pub fn new(stride: usize, padding: usize, mode: Padding) -> Self {
        Conv2dSpec {
            stride,
            padding,
            mode,
        }
    }
}

pub fn conv_out_size(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

pub(crate) fn map_index(i: isize, n: usize, mode: Padding) -> Option<usize> {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return Some(i as usize);
    }
    match mode {
        Padding::Zeros => None,
        Padding::Replicate => Some(i.clamp(0, n_i - 1) as usize),
        Padding::Reflect => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * (n_i - 1);
            let mut r = i.rem_euclid(period);
            if r >= n_i {
                r = period - r;
            }
            Some(r as usize)
        }
    }
}

/// Spatial source index for every (tap, output pixel) pair.
fn tap_table(h: usize, w: usize, k: usize, spec: Conv2dSpec) -> (usize, usize, Vec<Option<u32>>) {
    let ho = conv_out_size(h, k, spec.stride, spec.padding);
    let wo = conv_out_size(w, k, spec.stride, spec.padding);
    let mut table = Vec::with_capacity(k * k * ho * wo);
    for ky in 0..k {
        for kx in 0..k {
            for oy in 0..ho {
                let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                let my = map_index(iy, h, spec.mode);
                for ox in 0..wo {
                    let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                    let mx = map_index(ix, w, spec.mode);
                    table.push(match (my, mx) {
                        (Some(y), Some(x)) => Some((y * w + x) as u32),
                        _ => None,
                    });
                }
            }
        }
    }
    (ho, wo, table)
}

fn im2col(x: &[f64], c: usize, hw: usize, kk: usize, p: usize, table: &[Option<u32>], cols: &mut [f64]) {
    for ch in 0..c {
        let src = &x[ch * hw..(ch + 1) * hw];
        for t in 0..kk {
            let row = &mut cols[(ch * kk + t) * p..(ch * kk + t + 1) * p];
            let tab = &table[t * p..(t + 1) * p];
            for (dst, idx) in row.iter_mut().zip(tab) {
                *dst = match idx {
                    Some(i) => src[*i as usize],
                    None => 0.0,
                };
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, hw: usize, kk: usize, p: usize, table: &[Option<u32>], dx: &mut [f64]) {
    for ch in 0..c {
        let dst = &mut dx[ch * hw..(ch + 1) * hw];
        for t in 0..kk {
            let row = &cols[(ch * kk + t) * p..(ch * kk + t + 1) * p];
            let tab = &table[t * p..(t + 1) * p];
            for (v, idx) in row.iter().zip(tab) {
                if let Some(i) = idx {
                    dst[*i as usize] += v;
                }
            }
        }
    }
}

/// `c[m×n] = alpha·op(a)·op(b) + beta·c`, strides given explicitly.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: slices are sized by the callers for the given dims and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph {
    /// 2-D convolution, `x: (N,C,H,W)`, `weight: (O,C,k,k)`, `bias: (O)`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, spec: Conv2dSpec) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let (o, wc, k, k2) = self.value(weight).dims4();
        assert_eq!(k, k2, "square kernels only");
        assert_eq!(c, wc, "conv2d: input has {c} channels, weight expects {wc}");
        if let Some(b) = bias {
            assert_eq!(self.shape(b), &[o], "conv2d: bias shape");
        }
        let (ho, wo, table) = tap_table(h, w, k, spec);
        let p = ho * wo;
        let kk = k * k;
        let ckk = c * kk;
        let hw = h * w;
        let direct = k == 1 && spec.stride == 1 && spec.padding == 0;

        let xv = self.value_arc(x);
        let wv = self.value_arc(weight);
        let mut out = Tensor::zeros(&[n, o, ho, wo]);
        let mut all_cols: Vec<Vec<f64>> = Vec::with_capacity(if direct { 0 } else { n });
        for b in 0..n {
            let xs = &xv.data()[b * c * hw..(b + 1) * c * hw];
            let dst = &mut out.data_mut()[b * o * p..(b + 1) * o * p];
            if direct {
                gemm(o, c, p, wv.data(), ckk as isize, 1, xs, p as isize, 1, 0.0, dst);
            } else {
                let mut cols = vec![0.0; ckk * p];
                im2col(xs, c, hw, kk, p, &table, &mut cols);
                gemm(o, ckk, p, wv.data(), ckk as isize, 1, &cols, p as isize, 1, 0.0, dst);
                all_cols.push(cols);
            }
        }
        if let Some(bv) = bias {
            let bias_v = self.value(bv).data().to_vec();
            let od = out.data_mut();
            for b in 0..n {
                for (oc, &bb) in bias_v.iter().enumerate() {
                    for v in &mut od[(b * o + oc) * p..(b * o + oc + 1) * p] {
                        *v += bb;
                    }
                }
            }
        }

        let mut parents = vec![x, weight];
        parents.extend(bias);
        let need_x = self.requires_grad(x);
        let has_bias = bias.is_some();
        let all_cols = Arc::new(all_cols);
        self.custom(&parents, out, move |g| {
            let gd = g.data();
            let mut dw = Tensor::zeros(&[o, c, k, k]);
            let mut dx = if need_x { Some(Tensor::zeros(&[n, c, h, w])) } else { None };
            let mut dcols = vec![0.0; if direct { 0 } else { ckk * p }];
            for b in 0..n {
                let gs = &gd[b * o * p..(b + 1) * o * p];
                let cols: &[f64] = if direct {
                    &xv.data()[b * c * hw..(b + 1) * c * hw]
                } else {
                    &all_cols[b]
                };
                // dW += G · colsᵀ
                gemm(o, p, ckk, gs, p as isize, 1, cols, 1, p as isize, 1.0, dw.data_mut());
                if let Some(dx) = dx.as_mut() {
                    let dxs = &mut dx.data_mut()[b * c * hw..(b + 1) * c * hw];
                    if direct {
                        // dx = Wᵀ · G
                        gemm(c, o, p, wv.data(), 1, ckk as isize, gs, p as isize, 1, 1.0, dxs);
                    } else {
                        gemm(ckk, o, p, wv.data(), 1, ckk as isize, gs, p as isize, 1, 0.0, &mut dcols);
                        col2im(&dcols, c, hw, kk, p, &table, dxs);
                    }
                }
            }
            let mut grads = vec![dx, Some(dw)];
            if has_bias {
                let mut db = Tensor::zeros(&[o]);
                for b in 0..n {
                    for oc in 0..o {
                        db.data_mut()[oc] += gd[(b * o + oc) * p..(b * o + oc + 1) * p].iter().sum::<f64>();
                    }
                }
                grads.push(Some(db));
            }
            grads
        })
    }
}
