//! Overfits the toy network to the synthetic square scene and prints the
//! loss curve as CSV.
//!
//! ```text
//! cargo run --release --example train_toy -- [steps] [seed]
//! ```

use g2hf::objective::RmsConfig;
use g2hf::train::{synthetic_scene, train_single, StepLog};
use g2hf::{G2hfNet, NetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);

    let config = NetConfig::toy();
    let (image, mask) = synthetic_scene(config.input_size, seed);
    let mut net = G2hfNet::seeded(config, seed)?;
    println!("{}", StepLog::CSV_HEADER);
    let report = train_single(&mut net, &image, &mask, steps, RmsConfig::default(), |s| println!("{}", s.csv()))?;
    eprintln!(
        "final total {:.5}  F {:.4}  MAE {:.5}",
        report.final_loss.total, report.eval.f_beta, report.eval.mae
    );
    for (i, h) in report.final_loss.heads.iter().enumerate() {
        eprintln!("s{}: bce {:.5} iou {:.5} fm {:.5}", i + 1, h.bce, h.iou, h.fm);
    }
    Ok(())
}
