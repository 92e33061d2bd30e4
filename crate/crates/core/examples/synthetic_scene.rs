//! Writes the synthetic training scene as PPM/PGM files, overfits the toy
//! network to it for a few steps and saves all five saliency maps.
//!
//! ```text
//! cargo run --release --example synthetic_scene -- [out-dir] [steps] [seed]
//! ```

use std::path::PathBuf;

use g2hf::image::Image;
use g2hf::objective::{f_measure, RmsConfig, BETA2};
use g2hf::train::{synthetic_scene, train_single};
use g2hf::{G2hfNet, NetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("g2hf_scene"));
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    std::fs::create_dir_all(&dir)?;

    let config = NetConfig::toy();
    let (image, mask) = synthetic_scene(config.input_size, seed);
    Image::from_tensor(&image)?.write(dir.join("scene.ppm"))?;
    Image::from_tensor(&mask)?.write(dir.join("mask.pgm"))?;

    let mut net = G2hfNet::seeded(config, seed)?;
    train_single(&mut net, &image, &mask, steps, RmsConfig::default(), |_| {})?;
    let out = net.forward(&image)?;
    println!("after {steps} steps:");
    for (i, m) in out.maps.iter().enumerate() {
        Image::from_tensor(m)?.write(dir.join(format!("s{}.pgm", i + 1)))?;
        let r = f_measure(m, &mask, BETA2)?;
        println!("s{}: mean {:.4} mae {:.4} F {:.4}", i + 1, m.mean(), r.mae, r.f_beta);
    }
    println!("wrote scene.ppm, mask.pgm, s1..s5.pgm to {}", dir.display());
    Ok(())
}
