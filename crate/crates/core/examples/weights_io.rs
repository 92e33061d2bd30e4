//! Saves seeded toy weights, reloads them into a fresh network and shows the
//! error codes of damaged files.
//!
//! ```text
//! cargo run --example weights_io -- [path]
//! ```

use g2hf::{G2hfNet, ModelWeights, Module, NetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("g2hf_toy.bin").display().to_string());
    let net = G2hfNet::seeded(NetConfig::toy(), 42)?;
    let weights = net.to_weights();
    weights.save(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("wrote {} tensors, {} bytes to {path}", weights.len(), bytes.len());
    for (name, t) in weights.iter().take(4) {
        println!("  {name} {:?}", t.shape());
    }

    let back = G2hfNet::from_weights(NetConfig::toy(), &ModelWeights::load(&path)?)?;
    println!("reloaded network identical: {}", back.to_weights() == weights);

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    for (what, b) in [("bad magic", &bad_magic[..]), ("bad version", &bad_version[..]), ("truncated", &bytes[..bytes.len() - 3])] {
        let e = ModelWeights::from_bytes(b).unwrap_err();
        println!("{what:<12} code {}: {e}", e.code());
    }
    let mut renamed = weights.clone();
    let t = renamed.remove("heads.0.bias").expect("present");
    renamed.insert("heads.0.offset".into(), t);
    let e = G2hfNet::from_weights(NetConfig::toy(), &renamed).unwrap_err();
    println!("renamed      {e}");
    Ok(())
}
