//! Runs the domain-separated network on a day/night pair: invariant and
//! private feature pyramids, depth decoding, image reconstruction and the
//! relative pose between consecutive frames.
//!
//! `cargo run --example domain_separated_network`

use adds::data::{generate_synthetic_scene_with, relight_night, SceneConfig};
use adds::network::{Domain, Model, NetworkConfig};
use adds_autograd::Graph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seq = generate_synthetic_scene_with(1, 3, &SceneConfig::sized(64, 128))?;
    let model = Model::new(NetworkConfig::tiny(), 0)?;
    for (domain, image) in [(Domain::Day, seq.frames[1].clone()), (Domain::Night, relight_night(&seq.frames[1], 4))] {
        let inv = model.encode_tensor(&image, domain, true)?;
        let prv = model.encode_tensor(&image, domain, false)?;
        let shapes: Vec<_> = inv.levels.iter().map(|t| t.shape().to_vec()).collect();
        println!("{domain:?} invariant pyramid {shapes:?}");
        let disp = model.decode_depth_tensor(&inv)?;
        println!("{domain:?} disparity scales {:?}", disp.iter().map(|d| d.shape().to_vec()).collect::<Vec<_>>());
        let recon = model.reconstruct_tensor(&prv, &inv, domain)?;
        println!("{domain:?} reconstruction {:?}", recon.shape());
    }
    let mut g = Graph::inference();
    let a = g.constant(seq.frames[1].reshape(&[1, 3, 64, 128]));
    let b = g.constant(seq.frames[0].reshape(&[1, 3, 64, 128]));
    let v = model.pose_vector(&mut g, a, b)?;
    println!("pose vector target->previous {:?}", g.value(v).data());
    println!("{} parameters in {} groups", model.params.iter().map(|(_, t)| t.numel()).sum::<usize>(), adds::network::PARAM_GROUPS.len());
    Ok(())
}
