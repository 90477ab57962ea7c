//! U-Net style decoders for disparity and image reconstruction.

use adds_autograd::{Graph, ParamStore, Var};
use rand::Rng;

use super::layers::{conv3_reflect, init_conv_bias};

/// Registers a decoder reading a pyramid with `enc` channels and emitting
/// `head_channels` maps at each scale in `scales`.
pub(crate) fn init_decoder(
    store: &mut ParamStore,
    prefix: &str,
    enc: &[usize; 5],
    dec: &[usize; 5],
    head_channels: usize,
    scales: &[usize],
    rng: &mut impl Rng,
) {
    for i in (0..5).rev() {
        let cin = if i == 4 { enc[4] } else { dec[i + 1] };
        init_conv_bias(store, &format!("{prefix}.up{i}.0"), cin, dec[i], 3, rng);
        let cin = dec[i] + if i > 0 { enc[i - 1] } else { 0 };
        init_conv_bias(store, &format!("{prefix}.up{i}.1"), cin, dec[i], 3, rng);
    }
    for &s in scales {
        init_conv_bias(store, &format!("{prefix}.head{s}"), dec[s], head_channels, 3, rng);
    }
}

/// Sigmoid outputs indexed by scale; `out[s]` has stride `2^s`.
pub(crate) fn decoder(g: &mut Graph, store: &ParamStore, prefix: &str, pyramid: &[Var], scales: &[usize]) -> Vec<Var> {
    let mut outs = vec![None; 5];
    let mut x = pyramid[4];
    for i in (0..5).rev() {
        let y = conv3_reflect(g, store, &format!("{prefix}.up{i}.0"), x);
        let y = g.elu(y);
        let y = g.upsample_nearest2x(y);
        let y = if i > 0 { g.concat_channels(&[y, pyramid[i - 1]]) } else { y };
        let y = conv3_reflect(g, store, &format!("{prefix}.up{i}.1"), y);
        x = g.elu(y);
        if scales.contains(&i) {
            let h = conv3_reflect(g, store, &format!("{prefix}.head{i}"), x);
            outs[i] = Some(g.sigmoid(h));
        }
    }
    scales.iter().map(|&s| outs[s].expect("decoder head")).collect()
}
