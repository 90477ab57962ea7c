use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let out = Tensor::scalar(self.value(x).sum());
        self.custom(&[x], out, move |g| vec![Some(Tensor::full(&shape, g.item()))])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum over every axis but the first: `(N, ...) -> (N)`.
    pub fn sum_per_sample(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let n = shape[0];
        let per: usize = shape[1..].iter().product();
        let xv = self.value(x);
        let out = Tensor::from_fn(&[n], |i| xv.data()[i * per..(i + 1) * per].iter().sum());
        self.custom(&[x], out, move |g| {
            let dx = Tensor::from_fn(&shape, |j| g.data()[j / per]);
            vec![Some(dx)]
        })
    }

    pub fn mean_per_sample(&mut self, x: Var) -> Var {
        let per: usize = self.shape(x)[1..].iter().product();
        let s = self.sum_per_sample(x);
        self.scale(s, 1.0 / per as f64)
    }

    /// Mean over the channel axis: `(N, C, H, W) -> (N, 1, H, W)`.
    pub fn mean_channels(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let xv = self.value(x);
        let mut out = Tensor::zeros(&[n, 1, h, w]);
        {
            let od = out.data_mut();
            for b in 0..n {
                for ch in 0..c {
                    let src = &xv.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                    for (o, s) in od[b * hw..(b + 1) * hw].iter_mut().zip(src) {
                        *o += s;
                    }
                }
                for o in &mut od[b * hw..(b + 1) * hw] {
                    *o /= c as f64;
                }
            }
        }
        self.custom(&[x], out, move |g| {
            let mut dx = Tensor::zeros(&[n, c, h, w]);
            let dd = dx.data_mut();
            for b in 0..n {
                for ch in 0..c {
                    for i in 0..hw {
                        dd[(b * c + ch) * hw + i] = g.data()[b * hw + i] / c as f64;
                    }
                }
            }
            vec![Some(dx)]
        })
    }

    /// Spatial mean: `(N, C, H, W) -> (N, C)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let xv = self.value(x);
        let out = Tensor::from_fn(&[n, c], |i| {
            xv.data()[i * hw..(i + 1) * hw].iter().sum::<f64>() / hw as f64
        });
        self.custom(&[x], out, move |g| {
            let dx = Tensor::from_fn(&[n, c, h, w], |j| g.data()[j / hw] / hw as f64);
            vec![Some(dx)]
        })
    }

    /// Concatenation along the channel axis of NCHW tensors.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let (n, _, h, w) = self.value(xs[0]).dims4();
        let chans: Vec<usize> = xs
            .iter()
            .map(|&x| {
                let (nn, c, hh, ww) = self.value(x).dims4();
                assert_eq!((nn, hh, ww), (n, h, w), "concat_channels: shape mismatch");
                c
            })
            .collect();
        let total: usize = chans.iter().sum();
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, total, h, w]);
        {
            let od = out.data_mut();
            let mut off = 0;
            for (&x, &c) in xs.iter().zip(&chans) {
                let xv = self.value(x).data();
                for b in 0..n {
                    let dst = (b * total + off) * hw;
                    od[dst..dst + c * hw].copy_from_slice(&xv[b * c * hw..(b + 1) * c * hw]);
                }
                off += c;
            }
        }
        self.custom(xs, out, move |g| {
            let mut grads = Vec::with_capacity(chans.len());
            let mut off = 0;
            for &c in &chans {
                let mut d = Tensor::zeros(&[n, c, h, w]);
                for b in 0..n {
                    let src = (b * total + off) * hw;
                    d.data_mut()[b * c * hw..(b + 1) * c * hw]
                        .copy_from_slice(&g.data()[src..src + c * hw]);
                }
                off += c;
                grads.push(Some(d));
            }
            grads
        })
    }
}
