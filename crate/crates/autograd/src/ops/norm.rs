use crate::graph::{Graph, Mode, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl Graph {
    /// Batch normalization over `(N, H, W)` per channel. Parameters are
    /// `{prefix}.weight`/`{prefix}.bias`, running statistics the buffers
    /// `{prefix}.running_mean`/`{prefix}.running_var`.
    pub fn batch_norm(&mut self, x: Var, store: &ParamStore, prefix: &str) -> Var {
        let gamma = self.param(store, &format!("{prefix}.weight"));
        let beta = self.param(store, &format!("{prefix}.bias"));
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let m = (n * hw) as f64;
        let xv = self.value_arc(x);
        let gv = self.value(gamma).data().to_vec();
        let bv = self.value(beta).data().to_vec();

        let (mean, var) = match self.mode() {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += xv.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().sum::<f64>();
                    }
                    let mu = s / m;
                    let mut sq = 0.0;
                    for b in 0..n {
                        for v in &xv.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw] {
                            sq += (v - mu) * (v - mu);
                        }
                    }
                    mean[ch] = mu;
                    var[ch] = sq / m;
                }
                let rm_name = format!("{prefix}.running_mean");
                let rv_name = format!("{prefix}.running_var");
                let rm = self
                    .pending_buffer(&rm_name)
                    .or_else(|| store.buffer(&rm_name))
                    .expect("running_mean buffer")
                    .clone();
                let rv = self
                    .pending_buffer(&rv_name)
                    .or_else(|| store.buffer(&rv_name))
                    .expect("running_var buffer")
                    .clone();
                let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
                let new_rm = Tensor::from_fn(&[c], |i| (1.0 - BN_MOMENTUM) * rm.data()[i] + BN_MOMENTUM * mean[i]);
                let new_rv = Tensor::from_fn(&[c], |i| {
                    (1.0 - BN_MOMENTUM) * rv.data()[i] + BN_MOMENTUM * var[i] * unbias
                });
                self.record_buffer_update(rm_name, new_rm);
                self.record_buffer_update(rv_name, new_rv);
                (mean, var)
            }
            Mode::Eval => {
                let rm = store
                    .buffer(&format!("{prefix}.running_mean"))
                    .expect("running_mean buffer");
                let rv = store
                    .buffer(&format!("{prefix}.running_var"))
                    .expect("running_var buffer");
                (rm.data().to_vec(), rv.data().to_vec())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Tensor::zeros(&[n, c, h, w]);
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (xv.data()[i] - mean[ch]) * inv_std[ch];
                    xhat.data_mut()[i] = xh;
                    out.data_mut()[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let train = self.mode() == Mode::Train;
        self.custom(&[x, gamma, beta], out, move |g| {
            let gd = g.data();
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * hw;
                    for i in base..base + hw {
                        dgamma[ch] += gd[i] * xhat.data()[i];
                        dbeta[ch] += gd[i];
                    }
                }
            }
            let mut dx = Tensor::zeros(&[n, c, h, w]);
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * hw;
                    for i in base..base + hw {
                        dx.data_mut()[i] = if train {
                            gv[ch] * inv_std[ch] / m
                                * (m * gd[i] - dbeta[ch] - xhat.data()[i] * dgamma[ch])
                        } else {
                            gv[ch] * inv_std[ch] * gd[i]
                        };
                    }
                }
            }
            vec![
                Some(dx),
                Some(Tensor::new(&[c], dgamma)),
                Some(Tensor::new(&[c], dbeta)),
            ]
        })
    }
}

/// Registers `{prefix}.weight = 1`, `{prefix}.bias = 0` and unit/zero
/// running statistics.
pub fn init_batch_norm(store: &mut ParamStore, prefix: &str, channels: usize) {
    store.insert(format!("{prefix}.weight"), Tensor::ones(&[channels]));
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[channels]));
    store.insert_buffer(format!("{prefix}.running_mean"), Tensor::zeros(&[channels]));
    store.insert_buffer(format!("{prefix}.running_var"), Tensor::ones(&[channels]));
}
