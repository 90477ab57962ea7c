mod common;

use adds::geometry::{
    backproject, backproject_var, bilinear_sample, grid_sample_var, identity_grid, pose_matrix_var,
    pose_vector_to_se3, project, project_var, warp, warp_var, CameraIntrinsics, DepthMap, PoseSE3,
    SamplingGrid,
};
use adds_autograd::gradcheck::check_gradients;
use adds_autograd::{Graph, Tensor};
use common::*;
use rand::Rng;

fn assert_pass(reports: &[adds_autograd::gradcheck::GradCheckReport]) {
    for (i, r) in reports.iter().enumerate() {
        assert!(r.passes(GRAD_TOL), "input {i}: {r:?}");
    }
}

#[test]
fn se3_inverse_composes_to_identity() {
    let mut r = rng(1);
    for _ in 0..200 {
        let v = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let t = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
        let p = pose_vector_to_se3(v, t, false);
        let q = pose_vector_to_se3(v, t, true);
        assert!(p.orthonormality_error() < 1e-6);
        let id = p.compose(&q).to_matrix34();
        let eye = PoseSE3::identity().to_matrix34();
        for (a, b) in id.iter().zip(eye.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn pose_matrix_gradients_both_directions() {
    let mut r = rng(2);
    for invert in [false, true] {
        for scale in [1e-3, 0.02, 1.5] {
            let v = uniform(&[2, 6], -scale, scale, &mut r);
            assert_pass(&check_gradients(&[v], FD_STEP, |g, x| {
                let m = pose_matrix_var(g, x[0], invert);
                readout(g, m, 9)
            }));
        }
    }
}

#[test]
fn pose_matrix_matches_scalar_se3() {
    let mut r = rng(3);
    let v = uniform(&[3, 6], -1.0, 1.0, &mut r);
    let mut g = Graph::inference();
    let x = g.constant(v.clone());
    let m = pose_matrix_var(&mut g, x, true);
    for b in 0..3 {
        let d = &v.data()[b * 6..b * 6 + 6];
        let p = pose_vector_to_se3([d[0], d[1], d[2]], [d[3], d[4], d[5]], true);
        for (a, e) in g.value(m).data()[b * 12..b * 12 + 12].iter().zip(p.to_matrix34()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn backproject_project_round_trip_random() {
    let mut r = rng(4);
    for _ in 0..20 {
        let (h, w) = (r.random_range(4..20), r.random_range(4..20));
        let k = CameraIntrinsics::new(
            r.random_range(5.0..50.0),
            r.random_range(5.0..50.0),
            r.random_range(1.0..w as f64 - 1.0),
            r.random_range(1.0..h as f64 - 1.0),
            w,
            h,
        )
        .unwrap();
        let depth = DepthMap::new(uniform(&[h, w], 0.2, 80.0, &mut r)).unwrap();
        let grid = project(&backproject(&depth, &k).unwrap(), &k, &PoseSE3::identity()).unwrap();
        assert!(grid.coords.max_abs_diff(&identity_grid(h, w)) < 1e-6);
    }
}

#[test]
fn project_matches_per_point_oracle() {
    let mut r = rng(5);
    let (h, w) = (6, 9);
    let k = small_intrinsics(h, w);
    let pts = adds::geometry::PointGrid {
        points: Tensor::from_fn(&[3, h, w], |i| {
            if i / (h * w) == 2 {
                r.random_range(1.0..10.0)
            } else {
                r.random_range(-3.0..3.0)
            }
        }),
    };
    let pose = pose_vector_to_se3([0.1, -0.2, 0.05], [0.3, 0.1, -0.4], false);
    let grid = project(&pts, &k, &pose).unwrap();
    for y in 0..h {
        for x in 0..w {
            let p = [0, 1, 2].map(|c| pts.points.data()[c * h * w + y * w + x]);
            let q = pose.apply(p);
            let u = k.fx * q[0] / q[2] + k.cx;
            let v = k.fy * q[1] / q[2] + k.cy;
            let gx = 2.0 * (u - 0.5) / (w as f64 - 1.0) - 1.0;
            let gy = 2.0 * (v - 0.5) / (h as f64 - 1.0) - 1.0;
            let o = (y * w + x) * 2;
            assert!((grid.coords.data()[o] - gx).abs() < 1e-9);
            assert!((grid.coords.data()[o + 1] - gy).abs() < 1e-9);
        }
    }
}

#[test]
fn forward_translation_scales_radially() {
    let (h, w) = (12, 16);
    let k = small_intrinsics(h, w);
    let d = 10.0;
    let depth = DepthMap::constant(h, w, d).unwrap();
    let pose = PoseSE3::from_translation([0.0, 0.0, -2.0]);
    let grid = project(&backproject(&depth, &k).unwrap(), &k, &pose).unwrap();
    let s = d / (d - 2.0);
    for y in 0..h {
        for x in 0..w {
            let u = (x as f64 + 0.5 - k.cx) * s + k.cx;
            let gx = 2.0 * (u - 0.5) / (w as f64 - 1.0) - 1.0;
            assert!((grid.coords.data()[(y * w + x) * 2] - gx).abs() < 1e-9);
        }
    }
}

#[test]
fn joint_depth_translation_scaling_keeps_grid() {
    let mut r = rng(6);
    let (h, w) = (8, 8);
    let k = small_intrinsics(h, w);
    let dt = uniform(&[h, w], 1.0, 20.0, &mut r);
    let pose = pose_vector_to_se3([0.05, 0.1, -0.02], [0.4, -0.1, 0.3], false);
    let base = project(&backproject(&DepthMap::new(dt.clone()).unwrap(), &k).unwrap(), &k, &pose).unwrap();
    for s in [0.1, 3.0, 17.0] {
        let mut p2 = pose;
        p2.translation = pose.translation.map(|t| t * s);
        let scaled = project(&backproject(&DepthMap::new(dt.scale(s)).unwrap(), &k).unwrap(), &k, &p2).unwrap();
        assert!(scaled.coords.max_abs_diff(&base.coords) < 1e-9);
    }
}

#[test]
fn identity_grid_sampling_is_exact() {
    let mut r = rng(7);
    let img = uniform(&[3, 7, 11], 0.0, 1.0, &mut r);
    let grid = SamplingGrid {
        coords: identity_grid(7, 11),
        in_view: Tensor::ones(&[1, 7, 11]),
    };
    let (out, mask) = bilinear_sample(&img, &grid).unwrap();
    assert!(out.max_abs_diff(&img) < 1e-12);
    assert!(mask.data().iter().all(|&m| m == 1.0));
}

#[test]
fn one_pixel_shift_on_ramp() {
    let (h, w) = (6, 10);
    let img = Tensor::from_fn(&[1, h, w], |i| 0.05 * (i % w) as f64 + 0.01 * (i / w) as f64);
    let mut coords = identity_grid(h, w);
    for p in 0..h * w {
        coords.data_mut()[p * 2] += 2.0 / (w as f64 - 1.0);
    }
    let grid = SamplingGrid {
        coords,
        in_view: Tensor::ones(&[1, h, w]),
    };
    let (out, mask) = bilinear_sample(&img, &grid).unwrap();
    for y in 0..h {
        for x in 0..w - 1 {
            assert!((out.data()[y * w + x] - img.data()[y * w + x + 1]).abs() < 1e-6);
            assert_eq!(mask.data()[y * w + x], 1.0);
        }
        assert_eq!(mask.data()[y * w + w - 1], 0.0);
    }
}

#[test]
fn grid_sample_gradients() {
    let mut r = rng(8);
    let img = uniform(&[2, 2, 6, 7], 0.0, 1.0, &mut r);
    let grid = uniform(&[2, 5, 4, 2], -0.95, 0.95, &mut r);
    let in_view = Tensor::ones(&[2, 1, 5, 4]);
    assert_pass(&check_gradients(&[img, grid], FD_STEP, |g, x| {
        let (o, _) = grid_sample_var(g, x[0], x[1], &in_view);
        readout(g, o, 10)
    }));
}

#[test]
fn backproject_and_project_gradients() {
    let mut r = rng(9);
    let (h, w) = (5, 6);
    let ks = vec![small_intrinsics(h, w); 2];
    let depth = uniform(&[2, 1, h, w], 1.0, 5.0, &mut r);
    let pose = uniform(&[2, 6], -0.1, 0.1, &mut r);
    assert_pass(&check_gradients(&[depth, pose], FD_STEP, |g, x| {
        let p = backproject_var(g, x[0], &ks);
        let m = pose_matrix_var(g, x[1], false);
        let (grid, _) = project_var(g, p, m, &ks);
        readout(g, grid, 11)
    }));
}

#[test]
fn warp_gradients_in_image_depth_and_pose() {
    let mut r = rng(10);
    let (h, w) = (8, 8);
    let ks = vec![small_intrinsics(h, w); 2];
    let src = uniform(&[2, 3, h, w], 0.0, 1.0, &mut r);
    let depth = uniform(&[2, 1, h, w], 2.0, 6.0, &mut r);
    let pose = uniform(&[2, 6], -0.05, 0.05, &mut r);
    assert_pass(&check_gradients(&[src, depth, pose], FD_STEP, |g, x| {
        let m = pose_matrix_var(g, x[2], true);
        let (o, _) = warp_var(g, x[0], x[1], m, &ks).unwrap();
        readout(g, o, 12)
    }));
}

#[test]
fn identity_warp_reproduces_source() {
    let mut r = rng(11);
    let (h, w) = (9, 13);
    let k = small_intrinsics(h, w);
    let src = uniform(&[3, h, w], 0.0, 1.0, &mut r);
    let depth = DepthMap::new(uniform(&[h, w], 0.5, 50.0, &mut r)).unwrap();
    let (out, mask) = warp(&src, &depth, &PoseSE3::identity(), &k).unwrap();
    assert!(out.max_abs_diff(&src) <= 1e-6);
    assert!(mask.data().iter().all(|&m| m == 1.0));
}

#[test]
fn plane_shift_closed_form() {
    let (h, w) = (16, 24);
    let k = small_intrinsics(h, w);
    let d = 8.0;
    let tx = 0.5 * d / k.fx * 2.0;
    let src = Tensor::from_fn(&[1, h, w], |i| {
        let x = (i % w) as f64;
        0.5 + 0.3 * (0.4 * x).sin() + 0.01 * (i / w) as f64
    });
    let depth = DepthMap::constant(h, w, d).unwrap();
    let (out, mask) = warp(&src, &depth, &PoseSE3::from_translation([tx, 0.0, 0.0]), &k).unwrap();
    let shift = k.fx * tx / d;
    assert!((shift - 1.0).abs() < 1e-12);
    for y in 0..h {
        for x in 0..w - 2 {
            assert_eq!(mask.data()[y * w + x], 1.0);
            assert!((out.data()[y * w + x] - src.data()[y * w + x + 1]).abs() < 1e-3);
        }
    }
}
