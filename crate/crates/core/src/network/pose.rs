//! Relative pose regressor over a concatenated frame pair.

use adds_autograd::{Conv2dSpec, Graph, Padding, ParamStore, Var};
use rand::Rng;

use super::layers::{conv, init_conv_bias, init_zero_conv, normalize_input};

pub const POSE_SCALE: f64 = 0.01;

pub(crate) fn init_pose_net(store: &mut ParamStore, channels: &[usize], rng: &mut impl Rng) {
    let mut cin = 6;
    for (i, &c) in channels.iter().enumerate() {
        init_conv_bias(store, &format!("pose_net.conv{i}"), cin, c, 3, rng);
        cin = c;
    }
    init_zero_conv(store, "pose_net.head", cin, 6, 1);
}

/// `(N,6)` axis-angle and translation of the transform from `a`'s camera to
/// `b`'s.
pub(crate) fn pose_net(g: &mut Graph, store: &ParamStore, depth: usize, a: Var, b: Var) -> Var {
    let x = g.concat_channels(&[a, b]);
    let mut x = normalize_input(g, x);
    for i in 0..depth {
        let y = conv(g, store, &format!("pose_net.conv{i}"), x, Conv2dSpec::new(2, 1, Padding::Zeros));
        x = g.relu(y);
    }
    let y = conv(g, store, "pose_net.head", x, Conv2dSpec::new(1, 0, Padding::Zeros));
    let m = g.global_avg_pool(y);
    g.scale(m, POSE_SCALE)
}
