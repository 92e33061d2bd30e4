//! Dual-branch geometry/granularity complementary module for the two
//! middle-level features.
//!
//! The input is widened to `2C` channels and split: the first `C` channels
//! feed the granular branch, the remaining `C` the geometric branch. A
//! sigmoid weight map computed from both outputs enhances each of them, and
//! the fused result is refined by pyramid channel and spatial attention with
//! a residual connection.

use crate::attention::{pca_forward, psa_forward, PcaParams, PsaParams};
use crate::error::{Error, Result};
use crate::params::{impl_module, ConvParams};
use crate::tape::{Tape, Var};

pub const GRANULAR_KERNELS: [usize; 4] = [1, 3, 5, 7];
pub const GEOMETRIC_FACTORS: [usize; 3] = [1, 2, 4];

/// Cascaded convolutions with growing receptive fields.
#[derive(Clone, Debug, PartialEq)]
pub struct GranularParams {
    pub convs: Vec<ConvParams>,
    /// 1x1, `n*C -> C`.
    pub merge: ConvParams,
}
impl_module!(GranularParams { convs, merge });

impl GranularParams {
    pub fn new(channels: usize, kernels: &[usize]) -> Self {
        Self {
            convs: kernels.iter().map(|&k| ConvParams::new(channels, channels, k)).collect(),
            merge: ConvParams::new(kernels.len() * channels, channels, 1),
        }
    }
}

/// Query, key and value projections of a location-sensing block.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationParams {
    pub query: ConvParams,
    pub key: ConvParams,
    pub value: ConvParams,
    /// Scale the response map by `1/sqrt(C)`. Off by default.
    pub scaled: bool,
}
impl_module!(LocationParams { query, key, value });

impl LocationParams {
    pub fn new(channels: usize) -> Self {
        Self {
            query: ConvParams::new(channels, channels, 1),
            key: ConvParams::new(channels, channels, 1),
            value: ConvParams::new(channels, channels, 1),
            scaled: false,
        }
    }

    /// Sets all three projections to the identity.
    pub fn set_identity(&mut self) {
        self.query.set_identity();
        self.key.set_identity();
        self.value.set_identity();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometricParams {
    pub factors: Vec<usize>,
    /// One block per factor, acting on `r^2 C` channels.
    pub sensing: Vec<LocationParams>,
    /// 3x3, `n*C -> C`.
    pub merge: ConvParams,
}
impl_module!(GeometricParams { sensing, merge });

impl GeometricParams {
    pub fn new(channels: usize, factors: &[usize]) -> Self {
        Self {
            factors: factors.to_vec(),
            sensing: factors.iter().map(|r| LocationParams::new(r * r * channels)).collect(),
            merge: ConvParams::new(factors.len() * channels, channels, 3),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionParams {
    /// 1x1, `2C -> 1`.
    pub conv: ConvParams,
}
impl_module!(InteractionParams { conv });

#[derive(Clone, Debug, PartialEq)]
pub struct DgcParams {
    pub expand: ConvParams,
    pub granular: GranularParams,
    pub geometric: GeometricParams,
    pub interaction: InteractionParams,
    pub fuse: ConvParams,
    pub psa: PsaParams,
    pub pca: PcaParams,
    pub refine: ConvParams,
}
impl_module!(DgcParams { expand, granular, geometric, interaction, fuse, psa, pca, refine });

impl DgcParams {
    pub fn new(channels: usize, psa_factors: &[usize], pca_factors: &[usize]) -> Self {
        Self::with_branches(channels, psa_factors, pca_factors, &GRANULAR_KERNELS, &GEOMETRIC_FACTORS)
    }

    pub fn with_branches(
        channels: usize,
        psa_factors: &[usize],
        pca_factors: &[usize],
        kernels: &[usize],
        geometric_factors: &[usize],
    ) -> Self {
        let c = channels;
        Self {
            expand: ConvParams::new(c, 2 * c, 3),
            granular: GranularParams::new(c, kernels),
            geometric: GeometricParams::new(c, geometric_factors),
            interaction: InteractionParams { conv: ConvParams::new(2 * c, 1, 1) },
            fuse: ConvParams::new(2 * c, c, 3),
            psa: PsaParams::new(c, psa_factors),
            pca: PcaParams::new(c, pca_factors),
            refine: ConvParams::new(2 * c, c, 3),
        }
    }
}

/// `In_1 = f1(x)`, `In_j = f_j(x + In_{j-1})`, output `f1(cat(In_1..In_n))`.
pub fn granular_branch<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p GranularParams) -> Result<Var<'p>> {
    let mut stages: Vec<Var<'p>> = Vec::with_capacity(p.convs.len());
    for conv in &p.convs {
        let input = match stages.last() {
            Some(prev) => tape.add(x, prev)?,
            None => x.clone(),
        };
        stages.push(conv.apply(tape, &input)?);
    }
    p.merge.apply(tape, &tape.cat(&stages, 0)?)
}

/// Channel-affinity attention without softmax:
/// `M = K Q` (`[C,HW] x [HW,C]`), output `(V M)^T` reshaped to `[C,H,W]`.
pub fn location_sensing<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p LocationParams) -> Result<Var<'p>> {
    let (c, h, w) = x.value().dims3()?;
    let hw = h * w;
    let q = tape.transpose(&tape.reshape(&p.query.apply(tape, x)?, &[c, hw])?)?;
    let k = tape.reshape(&p.key.apply(tape, x)?, &[c, hw])?;
    let v = tape.transpose(&tape.reshape(&p.value.apply(tape, x)?, &[c, hw])?)?;
    let mut response = tape.matmul(&k, &q)?;
    if p.scaled {
        response = tape.scale(&response, 1.0 / (c as f64).sqrt());
    }
    let out = tape.matmul(&v, &response)?;
    tape.reshape(&tape.transpose(&out)?, &[c, h, w])
}

pub fn geometric_branch<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p GeometricParams) -> Result<Var<'p>> {
    let (_, h, w) = x.value().dims3()?;
    for &r in &p.factors {
        if h % r != 0 || w % r != 0 {
            let (what, value) = if h % r != 0 { ("height", h) } else { ("width", w) };
            return Err(Error::Divisibility { op: "geometric_branch", what, value, factor: r });
        }
    }
    let scales = p
        .factors
        .iter()
        .zip(&p.sensing)
        .map(|(&r, s)| {
            let sensed = location_sensing(tape, &tape.pixel_unshuffle(x, r)?, s)?;
            tape.pixel_shuffle(&sensed, r)
        })
        .collect::<Result<Vec<_>>>()?;
    p.merge.apply(tape, &tape.cat(&scales, 0)?)
}

/// Outputs of [`geo_gran_interaction`].
pub struct Interaction<'p> {
    /// Enhanced geometric feature.
    pub geometric: Var<'p>,
    /// Enhanced granular feature.
    pub granular: Var<'p>,
    /// Single-channel sigmoid weight map.
    pub weight: Var<'p>,
}

/// `W = sigmoid(f1(cat(fs, fd)))`; returns `fs * (1 + W)` and `fd * (1 + W)`.
pub fn geo_gran_interaction<'p>(
    tape: &Tape<'p>,
    fs: &Var<'p>,
    fd: &Var<'p>,
    p: &'p InteractionParams,
) -> Result<Interaction<'p>> {
    if fs.shape() != fd.shape() {
        return Err(Error::shape("geo_gran_interaction", fs.shape(), fd.shape()));
    }
    let weight = tape.sigmoid(&p.conv.apply(tape, &tape.cat(&[fs.clone(), fd.clone()], 0)?)?);
    let gain = tape.add_scalar(&weight, 1.0);
    Ok(Interaction {
        geometric: tape.mul_channels(fs, &gain)?,
        granular: tape.mul_channels(fd, &gain)?,
        weight,
    })
}

/// Intermediate values of [`dgc_forward`].
pub struct DgcTrace<'p> {
    /// Fused enhanced feature before attention refinement.
    pub fused: Var<'p>,
    /// The attention term added to `fused`.
    pub refined: Var<'p>,
    pub output: Var<'p>,
}

pub fn dgc_forward_traced<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p DgcParams) -> Result<DgcTrace<'p>> {
    let (c, _, _) = x.value().dims3()?;
    let wide = p.expand.apply(tape, x)?;
    let detail = granular_branch(tape, &tape.narrow(&wide, 0, 0, c)?, &p.granular)?;
    let position = geometric_branch(tape, &tape.narrow(&wide, 0, c, c)?, &p.geometric)?;
    let inter = geo_gran_interaction(tape, &position, &detail, &p.interaction)?;
    let fused = p.fuse.apply(tape, &tape.cat(&[inter.geometric, inter.granular], 0)?)?;
    let attended = tape.cat(&[pca_forward(tape, &fused, &p.pca)?, psa_forward(tape, &fused, &p.psa)?], 0)?;
    let refined = p.refine.apply(tape, &attended)?;
    let output = tape.add(&fused, &refined)?;
    Ok(DgcTrace { fused, refined, output })
}

pub fn dgc_forward<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p DgcParams) -> Result<Var<'p>> {
    Ok(dgc_forward_traced(tape, x, p)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{PCA_FACTORS, PSA_FACTORS};
    use crate::params::Module;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn granular_identity_cascade_is_two_and_a_half() {
        let c = 3;
        let mut p = GranularParams::new(c, &GRANULAR_KERNELS);
        for conv in &mut p.convs {
            conv.set_identity();
        }
        // average the four stage groups channel by channel
        let w = p.merge.weight.data_mut();
        for o in 0..c {
            for g in 0..4 {
                w[o * 4 * c + g * c + o] = 0.25;
            }
        }
        let x = random(&[c, 8, 8], &mut Rng::new(1));
        let tape = Tape::inference();
        let y = granular_branch(&tape, &tape.constant(x.clone()), &p).unwrap();
        assert!(y.value().max_abs_diff(&x.map(|v| 2.5 * v)) < 1e-14);
    }

    #[test]
    fn location_sensing_basis_vector() {
        let c = 5;
        let mut p = LocationParams::new(c);
        p.set_identity();
        let tape = Tape::inference();
        for j in 0..c {
            let x = Tensor::from_fn(&[c, 1, 1], |i| if i == j { 1.0 } else { 0.0 });
            let y = location_sensing(&tape, &tape.constant(x.clone()), &p).unwrap();
            assert_eq!(y.value(), &x);
        }
    }

    #[test]
    fn interaction_with_zero_conv_scales_by_one_and_a_half() {
        let p = InteractionParams { conv: ConvParams::new(4, 1, 1) };
        let mut rng = Rng::new(2);
        let fs = random(&[2, 3, 3], &mut rng);
        let fd = random(&[2, 3, 3], &mut rng);
        let tape = Tape::inference();
        let out = geo_gran_interaction(&tape, &tape.constant(fs.clone()), &tape.constant(fd.clone()), &p).unwrap();
        assert_eq!(out.geometric.value(), &fs.map(|v| 1.5 * v));
        assert_eq!(out.granular.value(), &fd.map(|v| 1.5 * v));
    }

    #[test]
    fn interaction_rejects_mismatched_shapes() {
        let p = InteractionParams { conv: ConvParams::new(4, 1, 1) };
        let tape = Tape::inference();
        let a = tape.constant(Tensor::zeros(&[2, 3, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3, 4]));
        assert!(geo_gran_interaction(&tape, &a, &b, &p).is_err());
    }

    #[test]
    fn geometric_rejects_indivisible() {
        let p = GeometricParams::new(2, &GEOMETRIC_FACTORS);
        let tape = Tape::inference();
        assert!(geometric_branch(&tape, &tape.constant(Tensor::zeros(&[2, 6, 6])), &p).is_err());
    }

    #[test]
    fn dgc_zero_params_zero_output() {
        let p = DgcParams::new(4, &PSA_FACTORS, &[1, 2]);
        let tape = Tape::inference();
        let x = random(&[4, 12, 12], &mut Rng::new(3));
        let y = dgc_forward(&tape, &tape.constant(x), &p).unwrap();
        assert_eq!(y.value(), &Tensor::zeros(&[4, 12, 12]));
    }

    #[test]
    fn dgc_residual_wiring() {
        let mut p = DgcParams::new(4, &PSA_FACTORS, &[1, 2]);
        p.randomize(&mut Rng::new(4), 0.2);
        let x = random(&[4, 12, 12], &mut Rng::new(5));
        let tape = Tape::inference();
        let t = dgc_forward_traced(&tape, &tape.constant(x), &p).unwrap();
        let expected = t.fused.value().zip_map(t.refined.value(), |a, b| a + b).unwrap();
        assert_eq!(t.output.value(), &expected);
    }

    #[test]
    fn default_shapes() {
        let mut p = DgcParams::new(64, &PSA_FACTORS, &PCA_FACTORS);
        assert_eq!(p.expand.c_out(), 128);
        assert_eq!(p.interaction.conv.c_out(), 1);
        p.init(&mut Rng::new(0));
        let tape = Tape::inference();
        let y = dgc_forward(&tape, &tape.constant(Tensor::full(&[64, 12, 12], 0.01)), &p).unwrap();
        assert_eq!(y.shape(), [64, 12, 12]);
    }
}
