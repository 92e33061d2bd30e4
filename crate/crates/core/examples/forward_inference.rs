//! Runs the default-size network on a synthetic image and prints per-head
//! statistics.
//!
//! ```text
//! cargo run --release --example forward_inference -- [size] [seed]
//! ```

use std::time::Instant;

use g2hf::train::synthetic_scene;
use g2hf::{G2hfNet, NetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(384);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);

    let config = NetConfig { input_size: size, ..NetConfig::default() };
    let net = G2hfNet::seeded(config, seed)?;
    let (image, _) = synthetic_scene(size, seed);

    let start = Instant::now();
    let out = net.forward(&image)?;
    println!("forward {size}x{size}: {:.2?}", start.elapsed());
    for (i, m) in out.maps.iter().enumerate() {
        let lo = m.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("s{}: shape {:?} mean {:.4} range [{lo:.4}, {hi:.4}]", i + 1, m.shape(), m.mean());
    }
    Ok(())
}
