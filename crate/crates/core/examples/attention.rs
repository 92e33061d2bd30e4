//! Pyramid spatial and channel attention on a random feature map, next to
//! the loop-based reference.
//!
//! ```text
//! cargo run --example attention -- [channels] [size]
//! ```

use g2hf::attention::{pca_forward, psa_forward, PcaParams, PsaParams, PCA_FACTORS, PSA_FACTORS};
use g2hf::{oracle, Module, Rng, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let c: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(16);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(24);

    let mut rng = Rng::new(3);
    let mut psa = PsaParams::new(c, &PSA_FACTORS);
    let factors: Vec<usize> = PCA_FACTORS.iter().copied().filter(|&r| ((c as f64).sqrt() as usize).is_multiple_of(r)).collect();
    let mut pca = PcaParams::new(c, &factors);
    psa.randomize(&mut rng, 0.3);
    pca.randomize(&mut rng, 0.3);
    let x = Tensor::from_fn(&[c, size, size], |_| rng.uniform(-1.0, 1.0));

    let tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let s = psa_forward(&tape, &xv, &psa)?;
    let p = pca_forward(&tape, &xv, &pca)?;
    println!("input {:?}, PSA factors {:?}, PCA grid {}x{} factors {:?}", x.shape(), psa.factors, pca.grid, pca.grid, factors);
    println!("psa out {:?}  |diff vs reference| {:.2e}", s.shape(), s.value().max_abs_diff(&oracle::psa(&x, &psa)));
    println!("pca out {:?}  |diff vs reference| {:.2e}", p.shape(), p.value().max_abs_diff(&oracle::pca(&x, &pca)));

    // zero weight maps leave every scale unchanged; averaging them gives x back
    let mut averaging = PsaParams::new(c, &PSA_FACTORS);
    averaging.set_averaging_merge();
    let tape = Tape::inference();
    let y = psa_forward(&tape, &tape.constant(x.clone()), &averaging)?;
    println!("zero fuse + averaging merge reproduces the input: max diff {:.2e}", y.value().max_abs_diff(&x));
    Ok(())
}
