//! MAE and adaptive-threshold F-measure of a few hand-made predictions
//! against a square mask.
//!
//! ```text
//! cargo run --example evaluate
//! ```

use g2hf::objective::{f_measure, HeadLoss, BETA2};
use g2hf::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 32;
    let inside = |i: usize| (8..24).contains(&(i / n)) && (8..24).contains(&(i % n));
    let mask = Tensor::from_fn(&[1, n, n], |i| inside(i) as u8 as f64);
    let cases = [
        ("perfect", mask.clone()),
        ("soft", mask.map(|g| 0.1 + 0.8 * g)),
        ("shifted", Tensor::from_fn(&[1, n, n], |i| inside(i + 4 * n) as u8 as f64)),
        ("blank", Tensor::zeros(&[1, n, n])),
        ("inverted", mask.map(|g| 1.0 - g)),
    ];
    println!("{:<9} {:>8} {:>8} {:>7} {:>8} {:>8} {:>8}", "pred", "mae", "fbeta", "thresh", "bce", "iou", "fm");
    for (name, s) in &cases {
        let r = f_measure(s, &mask, BETA2)?;
        let l = HeadLoss::compute(s, &mask)?;
        println!(
            "{name:<9} {:>8.4} {:>8.4} {:>7.3} {:>8.4} {:>8.4} {:>8.4}",
            r.mae, r.f_beta, r.threshold, l.bce, l.iou, l.fm
        );
    }
    Ok(())
}
