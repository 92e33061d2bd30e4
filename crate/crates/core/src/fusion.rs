//! Deep semantic perception for the deepest feature, local-global guidance
//! fusion, and the top-down decoder built from it.

use crate::dgc::{location_sensing, LocationParams};
use crate::error::{Error, Result};
use crate::params::{impl_module, ConvParams};
use crate::tape::{Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct DspParams {
    pub sensing: LocationParams,
}
impl_module!(DspParams { sensing });

impl DspParams {
    pub fn new(channels: usize) -> Self {
        Self { sensing: LocationParams::new(channels) }
    }
}

/// Location sensing applied to the full-resolution deepest feature.
pub fn dsp_forward<'p>(tape: &Tape<'p>, f5: &Var<'p>, p: &'p DspParams) -> Result<Var<'p>> {
    location_sensing(tape, f5, &p.sensing)
}

/// The two residual 3x3 "gate" convolutions of one fusion step.
#[derive(Clone, Debug, PartialEq)]
pub struct LgfParams {
    pub gate_low: ConvParams,
    pub gate_high: ConvParams,
}
impl_module!(LgfParams { gate_low, gate_high });

impl LgfParams {
    pub fn new(channels: usize) -> Self {
        Self { gate_low: ConvParams::new(channels, channels, 3), gate_high: ConvParams::new(channels, channels, 3) }
    }
}

/// ```text
/// up  = bilinear(f_high -> size of f_low)
/// L   = gate_low(f_low) + f_low
/// G   = gate_high(up) + up
/// out = G * L + up
/// ```
pub fn lgf_forward<'p>(tape: &Tape<'p>, f_low: &Var<'p>, f_high: &Var<'p>, p: &'p LgfParams) -> Result<Var<'p>> {
    let (c, h, w) = f_low.value().dims3()?;
    let (ch, hh, wh) = f_high.value().dims3()?;
    if ch != c {
        return Err(Error::ChannelMismatch { expected: c, got: ch });
    }
    if hh > h || wh > w {
        return Err(Error::invalid("lgf_forward", format!("high-level feature {hh}x{wh} is finer than {h}x{w}")));
    }
    let up = tape.resize(f_high, h, w)?;
    let low = tape.add(&p.gate_low.apply(tape, f_low)?, f_low)?;
    let high = tape.add(&p.gate_high.apply(tape, &up)?, &up)?;
    tape.add(&tape.mul(&high, &low)?, &up)
}

/// Top-down chain: `D_5 = features[4]`, `D_i = lgf(features[i-1], D_{i+1})`.
/// `lgf[i]` fuses into level `i + 1`.
pub fn decode<'p>(tape: &Tape<'p>, features: &[Var<'p>], lgf: &'p [LgfParams]) -> Result<Vec<Var<'p>>> {
    if features.is_empty() || lgf.len() + 1 != features.len() {
        return Err(Error::invalid(
            "decode",
            format!("{} features need {} fusion steps, got {}", features.len(), features.len().saturating_sub(1), lgf.len()),
        ));
    }
    let n = features.len();
    let mut out = vec![features[n - 1].clone()];
    for i in (0..n - 1).rev() {
        let higher = out.last().expect("non-empty");
        let d = lgf_forward(tape, &features[i], higher, &lgf[i])?;
        out.push(d);
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Module;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn zero_gates_reduce_to_product_plus_skip() {
        let p = LgfParams::new(2);
        let mut rng = Rng::new(1);
        let low = random(&[2, 4, 4], &mut rng);
        let high = random(&[2, 4, 4], &mut rng);
        let tape = Tape::inference();
        let out = lgf_forward(&tape, &tape.constant(low.clone()), &tape.constant(high.clone()), &p).unwrap();
        let expected = Tensor::from_fn(&[2, 4, 4], |i| high.data()[i] * low.data()[i] + high.data()[i]);
        assert_eq!(out.value(), &expected);
    }

    #[test]
    fn ones_low_doubles_high() {
        let p = LgfParams::new(3);
        let high = random(&[3, 2, 2], &mut Rng::new(2));
        let tape = Tape::inference();
        let out = lgf_forward(&tape, &tape.constant(Tensor::ones(&[3, 4, 4])), &tape.constant(high.clone()), &p).unwrap();
        let up = crate::ops::resize_bilinear(&high, 4, 4).unwrap();
        assert_eq!(out.value(), &up.map(|v| 2.0 * v));
    }

    #[test]
    fn rejects_channel_mismatch_and_finer_high() {
        let p = LgfParams::new(2);
        let tape = Tape::inference();
        let low = tape.constant(Tensor::zeros(&[2, 4, 4]));
        assert!(matches!(
            lgf_forward(&tape, &low, &tape.constant(Tensor::zeros(&[3, 2, 2])), &p),
            Err(Error::ChannelMismatch { .. })
        ));
        assert!(lgf_forward(&tape, &low, &tape.constant(Tensor::zeros(&[2, 8, 8])), &p).is_err());
    }

    #[test]
    fn decode_resolutions_follow_levels() {
        let mut lgf: Vec<LgfParams> = (0..4).map(|_| LgfParams::new(2)).collect();
        lgf.randomize(&mut Rng::new(3), 0.1);
        let mut rng = Rng::new(4);
        let tape = Tape::inference();
        let feats: Vec<_> = [48, 48, 24, 12, 6].iter().map(|&s| tape.constant(random(&[2, s, s], &mut rng))).collect();
        let d = decode(&tape, &feats, &lgf).unwrap();
        let sizes: Vec<_> = d.iter().map(|v| v.shape().to_vec()).collect();
        assert_eq!(sizes, [[2, 48, 48], [2, 48, 48], [2, 24, 24], [2, 12, 12], [2, 6, 6]]);
        assert_eq!(d[4].value(), feats[4].value());
    }

    #[test]
    fn dsp_zero_input() {
        let mut p = DspParams::new(4);
        p.randomize(&mut Rng::new(5), 1.0);
        for conv in [&mut p.sensing.query, &mut p.sensing.key, &mut p.sensing.value] {
            conv.bias.data_mut().fill(0.0);
        }
        let tape = Tape::inference();
        let y = dsp_forward(&tape, &tape.constant(Tensor::zeros(&[4, 3, 3])), &p).unwrap();
        assert_eq!(y.value(), &Tensor::zeros(&[4, 3, 3]));
    }
}
