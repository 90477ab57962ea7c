use adds_autograd::gradcheck::{check_gradients, check_gradients_in};
use adds_autograd::{init_batch_norm, Adam, Conv2dSpec, Graph, Mode, Padding, ParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;

fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

fn random(shape: &[usize], r: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn assert_grads(inputs: &[Tensor], f: impl Fn(&mut Graph, &[adds_autograd::Var]) -> adds_autograd::Var) {
    for (i, rep) in check_gradients(inputs, STEP, f).iter().enumerate() {
        assert!(rep.passes(TOL), "input {i}: {rep:?}");
    }
}

/// Scalar readout with a fixed random projection so every output element
/// contributes a distinct weight.
fn project(g: &mut Graph, y: adds_autograd::Var, seed: u64) -> adds_autograd::Var {
    let shape = g.shape(y).to_vec();
    let w = random(&shape, &mut rng(seed));
    let p = g.mul_const(y, &w);
    g.sum(p)
}

fn naive_conv(x: &Tensor, w: &Tensor, bias: &[f64], stride: usize, pad: usize) -> Tensor {
    let (n, c, h, ww) = x.dims4();
    let (o, _, k, _) = w.dims4();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (ww + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[n, o, ho, wo]);
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = bias[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= ww as isize {
                                    continue;
                                }
                                s += x.at4(b, ic, iy as usize, ix as usize) * w.at4(oc, ic, ky, kx);
                            }
                        }
                    }
                    out.data_mut()[((b * o + oc) * ho + oy) * wo + ox] = s;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_naive_loop() {
    let mut r = rng(1);
    for &(k, stride, pad) in &[(3, 1, 1), (7, 2, 3), (1, 1, 0), (3, 2, 1)] {
        let x = random(&[2, 3, 9, 10], &mut r);
        let w = random(&[4, 3, k, k], &mut r);
        let bias: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut g = Graph::new(Mode::Train);
        let xv = g.constant(x.clone());
        let wv = g.constant(w.clone());
        let bv = g.constant(Tensor::new(&[4], bias.clone()));
        let y = g.conv2d(xv, wv, Some(bv), Conv2dSpec::new(stride, pad, Padding::Zeros));
        let expect = naive_conv(&x, &w, &bias, stride, pad);
        assert!(g.value(y).max_abs_diff(&expect) < 1e-12, "k={k}");
    }
}

#[test]
fn conv_gradients() {
    let mut r = rng(2);
    for &(k, stride, pad, mode) in &[
        (3, 1, 1, Padding::Zeros),
        (3, 1, 1, Padding::Reflect),
        (3, 2, 1, Padding::Zeros),
        (1, 1, 0, Padding::Zeros),
        (5, 2, 2, Padding::Replicate),
    ] {
        let x = random(&[2, 2, 6, 7], &mut r);
        let w = random(&[3, 2, k, k], &mut r);
        let b = random(&[3], &mut r);
        assert_grads(&[x, w, b], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::new(stride, pad, mode));
            project(g, y, 9)
        });
    }
}

#[test]
fn reflect_padding_mirrors_without_edge_repeat() {
    // 1×1 input row [a b c], 3-tap kernel picking the left neighbour.
    let x = Tensor::new(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]);
    let mut w = Tensor::zeros(&[1, 1, 3, 3]);
    w.data_mut()[3] = 1.0; // (ky=1, kx=0)
    let mut g = Graph::new(Mode::Train);
    let xv = g.constant(x);
    let wv = g.constant(w);
    let y = g.conv2d(xv, wv, None, Conv2dSpec::new(1, 1, Padding::Reflect));
    assert_eq!(g.value(y).data(), &[2.0, 1.0, 2.0]);
}

#[test]
fn elementwise_gradients() {
    let mut r = rng(3);
    let a = random(&[2, 3, 4, 4], &mut r);
    let b = random(&[2, 3, 4, 4], &mut r).map(|v| v.abs() + 0.5);
    assert_grads(&[a.clone(), b.clone()], |g, v| {
        let s = g.add(v[0], v[1]);
        let d = g.sub(s, v[1]);
        let m = g.mul(d, v[1]);
        let q = g.div(m, v[1]);
        let e = g.elu(q);
        let sg = g.sigmoid(e);
        let sq = g.square(sg);
        let rt = g.sqrt(sq);
        let rc = g.recip(v[1]);
        let rt = g.add(rt, rc);
        let ab = g.abs(v[0]);
        let mn = g.minimum(rt, ab);
        let sc = g.scale(mn, 1.7);
        let ad = g.add_scalar(sc, 0.3);
        let all = g.add_n(&[ad, v[0], v[1]]);
        project(g, all, 4)
    });
}

#[test]
fn reduction_and_layout_gradients() {
    let mut r = rng(5);
    let a = random(&[2, 3, 4, 5], &mut r);
    let b = random(&[2, 2, 4, 5], &mut r);
    assert_grads(&[a, b], |g, v| {
        let cat = g.concat_channels(&[v[0], v[1]]);
        let mc = g.mean_channels(cat);
        let gp = g.global_avg_pool(cat);
        let pp = g.sum_per_sample(mc);
        let mp = g.mean_per_sample(cat);
        let s1 = project(g, gp, 1);
        let s2 = project(g, pp, 2);
        let s3 = project(g, mp, 3);
        let rs = g.reshape(cat, &[2, 100]);
        let s4 = project(g, rs, 4);
        let me = g.mean(cat);
        g.add_n(&[s1, s2, s3, s4, me])
    });
}

#[test]
fn pooling_and_resize_gradients() {
    let mut r = rng(6);
    let a = random(&[2, 2, 6, 8], &mut r);
    assert_grads(&[a], |g, v| {
        let mp = g.max_pool2d(v[0], 3, 2, 1);
        let up = g.upsample_nearest2x(mp);
        let rs = g.resize_bilinear(v[0], 11, 5);
        let bf = g.box_filter3(v[0]);
        let s1 = project(g, up, 1);
        let s2 = project(g, rs, 2);
        let s3 = project(g, bf, 3);
        g.add_n(&[s1, s2, s3])
    });
}

#[test]
fn batch_norm_train_and_eval_gradients() {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    init_batch_norm(&mut store, "bn", 3);
    store.set("bn.weight", random(&[3], &mut r));
    store.set_buffer("bn.running_var", Tensor::full(&[3], 2.0));
    let x = random(&[2, 3, 3, 4], &mut r);
    for mode in [Mode::Train, Mode::Eval] {
        let store = store.clone();
        let reports = check_gradients_in(mode, &[x.clone()], STEP, move |g, v| {
            assert_eq!(g.mode(), mode);
            let y = g.batch_norm(v[0], &store, "bn");
            project(g, y, 8)
        });
        assert!(reports[0].passes(TOL), "{mode:?}: {:?}", reports[0]);
    }
}

#[test]
fn batch_norm_normalizes_and_tracks_running_stats() {
    let mut store = ParamStore::new();
    init_batch_norm(&mut store, "bn", 1);
    let x = Tensor::new(&[1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]);
    let mut g = Graph::new(Mode::Train);
    let xv = g.constant(x);
    let y = g.batch_norm(xv, &store, "bn");
    assert!(g.value(y).mean().abs() < 1e-12);
    let ups = g.take_buffer_updates();
    assert_eq!(ups.len(), 2);
    assert!((ups[0].1.item() - 0.25).abs() < 1e-12);
    // unbiased variance 5/3
    assert!((ups[1].1.item() - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn repeated_batch_norm_chains_running_stats() {
    let mut store = ParamStore::new();
    init_batch_norm(&mut store, "bn", 1);
    let mut g = Graph::new(Mode::Train);
    let a = g.constant(Tensor::new(&[1, 1, 1, 2], vec![1.0, 3.0]));
    let b = g.constant(Tensor::new(&[1, 1, 1, 2], vec![5.0, 7.0]));
    g.batch_norm(a, &store, "bn");
    g.batch_norm(b, &store, "bn");
    let ups = g.take_buffer_updates();
    let last_mean = ups.iter().rev().find(|(n, _)| n == "bn.running_mean").unwrap();
    assert!((last_mean.1.item() - (0.9 * 0.2 + 0.1 * 6.0)).abs() < 1e-12);
}

#[test]
fn detach_blocks_gradient() {
    let mut g = Graph::new(Mode::Train);
    let a = g.leaf(Tensor::new(&[2], vec![1.0, 2.0]));
    let d = g.detach(a);
    let m = g.mul(a, d);
    let s = g.sum(m);
    let grads = g.backward(s);
    // d(a·stop(a))/da = stop(a)
    assert_eq!(grads.get(a).unwrap().data(), &[1.0, 2.0]);
    assert!(grads.get(d).is_none());
}

#[test]
fn shared_parameter_accumulates_into_one_leaf() {
    let mut store = ParamStore::new();
    store.insert("p.w", Tensor::new(&[1], vec![3.0]));
    let mut g = Graph::new(Mode::Train);
    let w1 = g.param(&store, "p.w");
    let w2 = g.param(&store, "p.w");
    assert_eq!(w1, w2);
    let m = g.mul(w1, w2);
    let s = g.sum(m);
    let grads = g.backward(s);
    assert_eq!(grads.param("p.w").unwrap().item(), 6.0);
}

#[test]
fn inference_graph_records_no_backward() {
    let mut store = ParamStore::new();
    store.insert("p.w", Tensor::new(&[1], vec![3.0]));
    let mut g = Graph::inference();
    let w = g.param(&store, "p.w");
    let y = g.square(w);
    assert!(!g.requires_grad(y));
}

#[test]
fn adam_minimizes_quadratic() {
    let mut store = ParamStore::new();
    store.insert("p.x", Tensor::new(&[2], vec![3.0, -2.0]));
    let mut opt = Adam::new(0.1, 0.9, 0.999);
    for _ in 0..500 {
        let mut g = Graph::new(Mode::Train);
        let x = g.param(&store, "p.x");
        let sq = g.square(x);
        let l = g.sum(sq);
        let grads = g.backward(l);
        drop(g);
        opt.update(&mut store, &grads);
    }
    assert!(store.get("p.x").unwrap().data().iter().all(|v| v.abs() < 1e-2));
}

#[test]
fn adam_leaves_gradient_free_parameters_untouched() {
    let mut store = ParamStore::new();
    store.insert("a.x", Tensor::new(&[1], vec![1.0]));
    store.insert("b.y", Tensor::new(&[1], vec![5.0]));
    let mut opt = Adam::new(0.1, 0.9, 0.999);
    let mut g = Graph::new(Mode::Train);
    let x = g.param(&store, "a.x");
    let l = g.sum(x);
    let grads = g.backward(l);
    drop(g);
    opt.update(&mut store, &grads);
    assert_eq!(store.get("b.y").unwrap().item(), 5.0);
    assert!(store.get("a.x").unwrap().item() < 1.0);
}

proptest! {
    #[test]
    fn resize_preserves_constants(v in -5.0f64..5.0, h in 1usize..9, w in 1usize..9, oh in 1usize..12, ow in 1usize..12) {
        let t = Tensor::full(&[1, 2, h, w], v);
        let r = adds_autograd::resize_bilinear_tensor(&t, oh, ow);
        prop_assert!(r.data().iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn box_filter_preserves_constants(v in -5.0f64..5.0, h in 1usize..7, w in 1usize..7) {
        let mut g = Graph::new(Mode::Train);
        let x = g.constant(Tensor::full(&[1, 1, h, w], v));
        let y = g.box_filter3(x);
        prop_assert!(g.value(y).data().iter().all(|x| (x - v).abs() < 1e-12));
    }
}
