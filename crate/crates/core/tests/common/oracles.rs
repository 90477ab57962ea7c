//! Independent scalar-loop references.

use adds::losses::{SSIM_C1, SSIM_C2};

/// One domain, one sample: `(1/N)Σr² + sign·(1/N²)(Σr)²`.
pub fn recons(rec: &[f64], img: &[f64], sign: f64) -> f64 {
    let n = rec.len() as f64;
    let mut sq = 0.0;
    let mut s = 0.0;
    for i in 0..rec.len() {
        let r = rec[i] - img[i];
        sq += r * r;
        s += r;
    }
    sq / n + sign * s * s / (n * n)
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s / a.len() as f64
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `c×c` Gram of a `c×hw` feature map, row-major.
pub fn gram(f: &[f64], c: usize, hw: usize) -> Vec<f64> {
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let mut s = 0.0;
            for k in 0..hw {
                s += f[i * hw + k] * f[j * hw + k];
            }
            g[i * c + j] = s / hw as f64;
        }
    }
    g
}

/// Single-channel SSIM at every pixel of an `h×w` plane.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let (va, vb) = (a[yy * w + xx], b[yy * w + xx]);
                    ma += va;
                    mb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let (ma, mb) = (ma / 9.0, mb / 9.0);
            let va = saa / 9.0 - ma * ma;
            let vb = sbb / 9.0 - mb * mb;
            let cov = sab / 9.0 - ma * mb;
            out[y * w + x] = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    out
}

/// Masked photometric loss of `c×h×w` images.
pub fn photometric(a: &[f64], b: &[f64], mask: &[f64], c: usize, h: usize, w: usize, alpha: f64) -> f64 {
    let hw = h * w;
    let mut per_pixel = vec![0.0; hw];
    for ch in 0..c {
        let s = ssim_plane(&a[ch * hw..(ch + 1) * hw], &b[ch * hw..(ch + 1) * hw], h, w);
        for i in 0..hw {
            let l1 = (a[ch * hw + i] - b[ch * hw + i]).abs();
            per_pixel[i] += (alpha / 2.0 * (1.0 - s[i]) + (1.0 - alpha) * l1) / c as f64;
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..hw {
        if mask[i] != 0.0 {
            num += per_pixel[i];
            den += 1.0;
        }
    }
    num / den
}

/// Seven depth metrics over pixels with `0 < gt <= cap`, prediction
/// clamped to `[0.1, cap]`.
pub fn depth_metrics(pred: &[f64], gt: &[f64], cap: f64) -> [f64; 7] {
    let mut acc = [0.0; 7];
    let mut n = 0.0;
    for i in 0..pred.len() {
        let g = gt[i];
        if !(g > 0.0 && g <= cap) {
            continue;
        }
        let p = pred[i].max(0.1).min(cap);
        n += 1.0;
        acc[0] += (p - g).abs() / g;
        acc[1] += (p - g) * (p - g) / g;
        acc[2] += (p - g) * (p - g);
        acc[3] += (p.ln() - g.ln()) * (p.ln() - g.ln());
        let ratio = if p / g > g / p { p / g } else { g / p };
        if ratio < 1.25 {
            acc[4] += 1.0;
        }
        if ratio < 1.25 * 1.25 {
            acc[5] += 1.0;
        }
        if ratio < 1.25 * 1.25 * 1.25 {
            acc[6] += 1.0;
        }
    }
    [
        acc[0] / n,
        acc[1] / n,
        (acc[2] / n).sqrt(),
        (acc[3] / n).sqrt(),
        acc[4] / n,
        acc[5] / n,
        acc[6] / n,
    ]
}
