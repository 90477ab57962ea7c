//! Parameter registration and forward helpers shared by the sub-networks.

use adds_autograd::{he_uniform, init_batch_norm, Conv2dSpec, Graph, Padding, ParamStore, Tensor, Var};
use rand::Rng;

/// Encoder convolutions, followed by normalization: He uniform, no bias.
pub(crate) fn init_conv(store: &mut ParamStore, prefix: &str, cin: usize, cout: usize, k: usize, rng: &mut impl Rng) {
    store.insert(format!("{prefix}.weight"), he_uniform(&[cout, cin, k, k], cin * k * k, rng));
}

/// Decoder convolutions: weights and biases uniform in `±1/√fan_in`.
pub(crate) fn init_conv_bias(store: &mut ParamStore, prefix: &str, cin: usize, cout: usize, k: usize, rng: &mut impl Rng) {
    let bound = 1.0 / ((cin * k * k) as f64).sqrt();
    let w = Tensor::from_fn(&[cout, cin, k, k], |_| rng.random_range(-bound..bound));
    store.insert(format!("{prefix}.weight"), w);
    let b = Tensor::from_fn(&[cout], |_| rng.random_range(-bound..bound));
    store.insert(format!("{prefix}.bias"), b);
}

pub(crate) fn init_zero_conv(store: &mut ParamStore, prefix: &str, cin: usize, cout: usize, k: usize) {
    store.insert(format!("{prefix}.weight"), Tensor::zeros(&[cout, cin, k, k]));
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[cout]));
}

pub(crate) fn conv(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, spec: Conv2dSpec) -> Var {
    let w = g.param(store, &format!("{prefix}.weight"));
    let bname = format!("{prefix}.bias");
    let b = store.contains(&bname).then(|| g.param(store, &bname));
    g.conv2d(x, w, b, spec)
}

pub(crate) fn conv3_reflect(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Var {
    conv(g, store, prefix, x, Conv2dSpec::new(1, 1, Padding::Reflect))
}

/// Conv (no bias) followed by batch normalization.
pub(crate) fn init_conv_bn(store: &mut ParamStore, prefix: &str, cin: usize, cout: usize, k: usize, rng: &mut impl Rng) {
    init_conv(store, &format!("{prefix}.conv"), cin, cout, k, rng);
    init_batch_norm(store, &format!("{prefix}.bn"), cout);
}

pub(crate) fn conv_bn(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, stride: usize, pad: usize) -> Var {
    let y = conv(g, store, &format!("{prefix}.conv"), x, Conv2dSpec::new(stride, pad, Padding::Zeros));
    g.batch_norm(y, store, &format!("{prefix}.bn"))
}

/// Inputs are mapped from `[0, 1]` to roughly zero mean and unit spread.
pub(crate) fn normalize_input(g: &mut Graph, x: Var) -> Var {
    let y = g.add_scalar(x, -0.45);
    g.scale(y, 1.0 / 0.225)
}
