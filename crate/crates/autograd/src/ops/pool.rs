use crate::graph::{Graph, Var};
use crate::ops::conv::{conv_out_size, map_index, Padding};
use crate::tensor::Tensor;

/// Source taps and weights of an align-corners-false bilinear resize along
/// one axis.
fn resize_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Plain bilinear resize (align corners false, edge clamp), `(N,C,H,W)`.
pub fn resize_bilinear_tensor(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (n, c, h, w) = x.dims4();
    let ty = resize_taps(h, oh);
    let tx = resize_taps(w, ow);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let od = out.data_mut();
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        let dst = &mut od[plane * oh * ow..(plane + 1) * oh * ow];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

impl Graph {
    /// Max pooling with `-inf` padding.
    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let ho = conv_out_size(h, k, stride, pad);
        let wo = conv_out_size(w, k, stride, pad);
        let xv = self.value(x);
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = vec![0usize; n * c * ho * wo];
        for plane in 0..n * c {
            let src = &xv.data()[plane * h * w..(plane + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = iy as usize * w + ix as usize;
                            if src[i] > best {
                                best = src[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = plane * ho * wo + oy * wo + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = plane * h * w + best_i;
                }
            }
        }
        self.custom(&[x], out, move |g| {
            let mut dx = Tensor::zeros(&[n, c, h, w]);
            for (o, &src) in argmax.iter().enumerate() {
                dx.data_mut()[src] += g.data()[o];
            }
            vec![Some(dx)]
        })
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let (oh, ow) = (2 * h, 2 * w);
        let xv = self.value(x);
        let out = Tensor::from_fn(&[n, c, oh, ow], |i| {
            let plane = i / (oh * ow);
            let r = i % (oh * ow);
            let (oy, ox) = (r / ow, r % ow);
            xv.data()[plane * h * w + (oy / 2) * w + ox / 2]
        });
        self.custom(&[x], out, move |g| {
            let mut dx = Tensor::zeros(&[n, c, h, w]);
            for (i, gv) in g.data().iter().enumerate() {
                let plane = i / (oh * ow);
                let r = i % (oh * ow);
                let (oy, ox) = (r / ow, r % ow);
                dx.data_mut()[plane * h * w + (oy / 2) * w + ox / 2] += gv;
            }
            vec![Some(dx)]
        })
    }

    /// Bilinear resize (align corners false); identity when sizes match.
    pub fn resize_bilinear(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        if (h, w) == (oh, ow) {
            return x;
        }
        let out = resize_bilinear_tensor(self.value(x), oh, ow);
        let ty = resize_taps(h, oh);
        let tx = resize_taps(w, ow);
        self.custom(&[x], out, move |g| {
            let mut dx = Tensor::zeros(&[n, c, h, w]);
            let dd = dx.data_mut();
            for plane in 0..n * c {
                let gs = &g.data()[plane * oh * ow..(plane + 1) * oh * ow];
                let dst = &mut dd[plane * h * w..(plane + 1) * h * w];
                for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                        let gv = gs[oy * ow + ox];
                        dst[y0 * w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                        dst[y0 * w + x1] += gv * (1.0 - fy) * fx;
                        dst[y1 * w + x0] += gv * fy * (1.0 - fx);
                        dst[y1 * w + x1] += gv * fy * fx;
                    }
                }
            }
            vec![Some(dx)]
        })
    }

    /// 3×3 mean filter, same size output, edge-replicated border.
    pub fn box_filter3(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let idx = |i: isize, len: usize| map_index(i, len, Padding::Replicate).unwrap();
        let xv = self.value(x);
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for plane in 0..n * c {
            let src = &xv.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out.data_mut()[plane * h * w..(plane + 1) * h * w];
            for y in 0..h {
                for xx in 0..w {
                    let mut s = 0.0;
                    for dy in -1..=1isize {
                        let yy = idx(y as isize + dy, h);
                        for dx in -1..=1isize {
                            s += src[yy * w + idx(xx as isize + dx, w)];
                        }
                    }
                    dst[y * w + xx] = s / 9.0;
                }
            }
        }
        self.custom(&[x], out, move |g| {
            let mut dxt = Tensor::zeros(&[n, c, h, w]);
            for plane in 0..n * c {
                let gs = &g.data()[plane * h * w..(plane + 1) * h * w];
                let dst = &mut dxt.data_mut()[plane * h * w..(plane + 1) * h * w];
                for y in 0..h {
                    for xx in 0..w {
                        let gv = gs[y * w + xx] / 9.0;
                        for dy in -1..=1isize {
                            let yy = idx(y as isize + dy, h);
                            for dx in -1..=1isize {
                                dst[yy * w + idx(xx as isize + dx, w)] += gv;
                            }
                        }
                    }
                }
            }
            vec![Some(dxt)]
        })
    }
}
