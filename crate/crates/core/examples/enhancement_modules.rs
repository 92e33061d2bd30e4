//! MDE, DGC and DSP blocks at the toy width, with parameter counts and a
//! comparison against the loop-based references.
//!
//! ```text
//! cargo run --example enhancement_modules
//! ```

use g2hf::dgc::{dgc_forward_traced, DgcParams};
use g2hf::fusion::{dsp_forward, lgf_forward, DspParams, LgfParams};
use g2hf::mde::{mde_forward, MdeParams, MDE_KERNELS};
use g2hf::attention::PSA_FACTORS;
use g2hf::{oracle, Module, Rng, Tape, Tensor};

fn count<M: Module>(m: &M) -> usize {
    m.named_tensors().iter().map(|(_, t)| t.len()).sum()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = 4;
    let mut rng = Rng::new(11);
    let mut mde = MdeParams::new(c, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
    let mut dgc = DgcParams::new(c, &PSA_FACTORS, &[1, 2]);
    let mut dsp = DspParams::new(c);
    let mut lgf = LgfParams::new(c);
    mde.randomize(&mut rng, 0.2);
    dgc.randomize(&mut rng, 0.2);
    dsp.randomize(&mut rng, 0.3);
    lgf.randomize(&mut rng, 0.3);
    let x = Tensor::from_fn(&[c, 24, 24], |_| rng.uniform(-1.0, 1.0));
    let coarse = Tensor::from_fn(&[c, 6, 6], |_| rng.uniform(-1.0, 1.0));

    let tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let m = mde_forward(&tape, &xv, &mde)?;
    println!("mde  {:>6} params  out {:?}  ref diff {:.2e}", count(&mde), m.shape(), m.value().max_abs_diff(&oracle::mde(&x, &mde)));

    let t = dgc_forward_traced(&tape, &xv, &dgc)?;
    println!(
        "dgc  {:>6} params  out {:?}  ref diff {:.2e}  |fused| {:.3} |refined| {:.3}",
        count(&dgc),
        t.output.shape(),
        t.output.value().max_abs_diff(&oracle::dgc(&x, &dgc)),
        t.fused.value().max_abs(),
        t.refined.value().max_abs()
    );

    let s = dsp_forward(&tape, &tape.constant(coarse.clone()), &dsp)?;
    println!("dsp  {:>6} params  out {:?}  ref diff {:.2e}", count(&dsp), s.shape(), s.value().max_abs_diff(&oracle::dsp(&coarse, &dsp.sensing)));

    let f = lgf_forward(&tape, &tape.constant(x.clone()), &tape.constant(coarse.clone()), &lgf)?;
    println!("lgf  {:>6} params  out {:?}  ref diff {:.2e}", count(&lgf), f.shape(), f.value().max_abs_diff(&oracle::lgf(&x, &coarse, &lgf)));
    Ok(())
}
