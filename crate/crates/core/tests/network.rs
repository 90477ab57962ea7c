mod common;

use adds::network::{Domain, EncoderDepth, Model, NetworkConfig, PARAM_GROUPS};
use adds_autograd::{Graph, Mode, Tensor};
use common::*;

fn tiny(seed: u64) -> Model {
    Model::new(NetworkConfig::tiny(), seed).unwrap()
}

fn image(seed: u64, h: usize, w: usize) -> Tensor {
    uniform(&[3, h, w], 0.0, 1.0, &mut rng(seed))
}

fn bump_first(m: &mut Model, group: &str, delta: f64) {
    for name in m.params.group_names(group) {
        m.params.get_mut(&name).unwrap().data_mut()[0] += delta;
    }
}

#[test]
fn resnet18_shape_schedule() {
    let m = Model::new(NetworkConfig::default(), 0).unwrap();
    assert_eq!(m.config.encoder_depth, EncoderDepth::Resnet18);
    let pyr = m.encode_tensor(&image(1, 256, 512), Domain::Day, true).unwrap();
    let want = [(64, 128, 256), (64, 64, 128), (128, 32, 64), (256, 16, 32), (512, 8, 16)];
    for (lvl, &(c, h, w)) in pyr.levels.iter().zip(&want) {
        assert_eq!(lvl.shape(), &[1, c, h, w]);
    }
    let disps = m.decode_depth_tensor(&pyr).unwrap();
    let sizes: Vec<_> = disps.iter().map(|d| (d.shape()[2], d.shape()[3])).collect();
    assert_eq!(sizes, vec![(256, 512), (128, 256), (64, 128), (32, 64)]);
    assert!(disps.iter().all(|d| d.data().iter().all(|&v| v > 0.0 && v < 1.0)));
}

#[test]
fn identical_stems_give_identical_pyramids() {
    let mut m = tiny(2);
    for name in m.params.group_names("stem_day") {
        let night = name.replacen("stem_day", "stem_night", 1);
        let v = m.params.get(&name).unwrap().clone();
        m.params.set(&night, v);
    }
    let img = image(3, 64, 128);
    let d = m.encode_tensor(&img, Domain::Day, true).unwrap();
    let n = m.encode_tensor(&img, Domain::Night, true).unwrap();
    for (a, b) in d.levels.iter().zip(&n.levels) {
        assert!(a.max_abs_diff(b) < 1e-6);
    }
}

#[test]
fn trunk_change_moves_both_domains() {
    let mut m = tiny(4);
    let img = image(5, 64, 128);
    let before = [Domain::Day, Domain::Night].map(|d| m.encode_tensor(&img, d, true).unwrap());
    bump_first(&mut m, "shared_encoder", 0.5);
    for (i, d) in [Domain::Day, Domain::Night].into_iter().enumerate() {
        let after = m.encode_tensor(&img, d, true).unwrap();
        assert!(after.deepest().max_abs_diff(before[i].deepest()) > 0.0);
    }
    // one storage per trunk tensor
    let trunk = m.params.group_names("shared_encoder");
    let mut ids: Vec<_> = trunk.iter().map(|n| m.params.storage_id(n).unwrap()).collect();
    ids.dedup();
    assert_eq!(ids.len(), trunk.len());
}

#[test]
fn private_encoders_are_separate() {
    let mut m = tiny(6);
    let img = image(7, 64, 128);
    let night = m.encode_tensor(&img, Domain::Night, false).unwrap();
    let day = m.encode_tensor(&img, Domain::Day, false).unwrap();
    assert!(day.deepest().max_abs_diff(night.deepest()) > 1e-6);
    bump_first(&mut m, "private_day", 0.7);
    assert_eq!(m.encode_tensor(&img, Domain::Night, false).unwrap(), night);
    assert_ne!(m.encode_tensor(&img, Domain::Day, false).unwrap(), day);
}

#[test]
fn reconstruction_contract() {
    let mut m = tiny(8);
    let img = image(9, 64, 128);
    let p = m.encode_tensor(&img, Domain::Night, false).unwrap();
    let i = m.encode_tensor(&img, Domain::Night, true).unwrap();
    let r = m.reconstruct_tensor(&p, &i, Domain::Night).unwrap();
    assert_eq!(r.shape(), &[1, 3, 64, 128]);
    assert!(r.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(m.reconstruct_tensor(&i, &p, Domain::Night).unwrap(), r);
    bump_first(&mut m, "recon_day", 1.0);
    assert_eq!(m.reconstruct_tensor(&p, &i, Domain::Night).unwrap(), r);
    let mismatched = m.encode_tensor(&image(9, 32, 64), Domain::Night, true).unwrap();
    assert!(m.reconstruct_tensor(&p, &mismatched, Domain::Night).is_err());
}

#[test]
fn depth_gradient_reaches_stem() {
    let m = tiny(10);
    let mut g = Graph::new(Mode::Train);
    let x = g.constant(Tensor::stack(&[&image(11, 64, 128), &image(12, 64, 128)]));
    let pyr = m.invariant_encode(&mut g, x, Domain::Night).unwrap();
    let d = m.decode_depth(&mut g, &pyr).unwrap();
    let l = readout(&mut g, d[0], 13);
    let grads = g.backward(l);
    let stem = grads.param("stem_night.conv.weight").unwrap();
    assert!(stem.all_finite() && stem.data().iter().any(|&v| v != 0.0));
    assert!(grads.param("stem_day.conv.weight").is_none());
}

#[test]
fn pose_is_deterministic_and_rigid() {
    let mut m = tiny(14);
    let mut r = rng(15);
    for name in m.params.group_names("pose_net") {
        let shape = m.params.get(&name).unwrap().shape().to_vec();
        m.params.set(&name, uniform(&shape, -0.3, 0.3, &mut r));
    }
    let (a, b) = (image(16, 64, 128), image(17, 64, 128));
    let p = m.estimate_pose(&a, &b).unwrap();
    assert_eq!(p, m.estimate_pose(&a, &b).unwrap());
    assert!(p.orthonormality_error() < 1e-6);
    assert_ne!(p, adds::geometry::PoseSE3::identity());
    assert!(m.estimate_pose(&a, &image(1, 32, 64)).is_err());
}

#[test]
fn depth_path_ignores_off_path_groups() {
    let mut m = tiny(18);
    let img = image(19, 64, 128);
    let depth = |m: &Model| {
        let p = m.encode_tensor(&img, Domain::Day, true).unwrap();
        m.decode_depth_tensor(&p).unwrap()
    };
    let base = depth(&m);
    for group in PARAM_GROUPS {
        if ["stem_day", "shared_encoder", "depth_decoder"].contains(&group) {
            continue;
        }
        bump_first(&mut m, group, 3.0);
        assert_eq!(depth(&m), base, "{group}");
    }
}
