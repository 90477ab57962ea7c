//! Residual encoders: per-domain stems, the shared trunk and the private
//! encoders.

use adds_autograd::{Graph, ParamStore, Var};
use rand::Rng;

use super::config::Schedule;
use super::layers::{conv_bn, init_conv_bn, normalize_input};

/// Stem: 7×7 stride-2 convolution, normalization and ReLU.
pub(crate) fn init_stem(store: &mut ParamStore, prefix: &str, cout: usize, rng: &mut impl Rng) {
    init_conv_bn(store, prefix, 3, cout, 7, rng);
}

pub(crate) fn stem(g: &mut Graph, store: &ParamStore, prefix: &str, image: Var) -> Var {
    let x = normalize_input(g, image);
    let y = conv_bn(g, store, prefix, x, 2, 3);
    g.relu(y)
}

fn init_block(store: &mut ParamStore, prefix: &str, cin: usize, cout: usize, stride: usize, rng: &mut impl Rng) {
    init_conv_bn(store, &format!("{prefix}.a"), cin, cout, 3, rng);
    init_conv_bn(store, &format!("{prefix}.b"), cout, cout, 3, rng);
    if stride != 1 || cin != cout {
        init_conv_bn(store, &format!("{prefix}.down"), cin, cout, 1, rng);
    }
}

fn block(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, stride: usize) -> Var {
    let y = conv_bn(g, store, &format!("{prefix}.a"), x, stride, 1);
    let y = g.relu(y);
    let y = conv_bn(g, store, &format!("{prefix}.b"), y, 1, 1);
    let down = format!("{prefix}.down");
    let skip = if store.contains(&format!("{down}.conv.weight")) {
        conv_bn(g, store, &down, x, stride, 0)
    } else {
        x
    };
    let s = g.add(y, skip);
    g.relu(s)
}

/// Max-pool plus the four residual stages.
pub(crate) fn init_trunk(store: &mut ParamStore, prefix: &str, s: &Schedule, rng: &mut impl Rng) {
    let ch = s.encoder_channels;
    for stage in 0..4 {
        for b in 0..s.blocks[stage] {
            let cin = if b == 0 { ch[stage] } else { ch[stage + 1] };
            let stride = if b == 0 && stage > 0 { 2 } else { 1 };
            init_block(store, &format!("{prefix}.layer{}.{b}", stage + 1), cin, ch[stage + 1], stride, rng);
        }
    }
}

/// Returns the stem output followed by the four stage outputs.
pub(crate) fn trunk(g: &mut Graph, store: &ParamStore, prefix: &str, s: &Schedule, stem_out: Var) -> Vec<Var> {
    let mut levels = vec![stem_out];
    let mut x = g.max_pool2d(stem_out, 3, 2, 1);
    for stage in 0..4 {
        for b in 0..s.blocks[stage] {
            let stride = if b == 0 && stage > 0 { 2 } else { 1 };
            x = block(g, store, &format!("{prefix}.layer{}.{b}", stage + 1), x, stride);
        }
        levels.push(x);
    }
    levels
}
