use std::collections::BTreeMap;

use crate::graph::Gradients;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias correction. Moment estimates are keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: BTreeMap<String, Tensor>,
    pub second_moment: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }

    /// One update over every parameter in `store`. Parameters without a
    /// gradient are treated as having a zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in names {
            let grad = grads.param(&name);
            let shape = store.get(&name).expect("listed").shape().to_vec();
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&shape));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&shape));
            if grad.is_none() && m.data().iter().all(|&x| x == 0.0) {
                // zero gradient with zero momentum: the update is exactly zero
                continue;
            }
            let p = store.get_mut(&name).expect("listed");
            for i in 0..p.numel() {
                let g = grad.map_or(0.0, |g| g.data()[i]);
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                p.data_mut()[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Mode};

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        store.insert("w.weight", Tensor::new(&[3], vec![1.0, -2.0, 0.5]));
        store.insert("idle.weight", Tensor::new(&[1], vec![4.0]));
        let mut g = Graph::new(Mode::Train);
        let w = g.param(&store, "w.weight");
        let c = g.constant(Tensor::new(&[3], vec![3.0, -0.25, 7.0]));
        let y = g.mul(w, c);
        let loss = g.sum(y);
        let grads = g.backward(loss);
        drop(g);

        let mut adam = Adam::new(0.1, 0.9, 0.999);
        adam.update(&mut store, &grads);
        let w = store.get("w.weight").unwrap().data();
        for (got, want) in w.iter().zip([0.9, -1.9, 0.4]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert_eq!(store.get("idle.weight").unwrap().data(), &[4.0]);
        assert_eq!(adam.step, 1);
    }
}
