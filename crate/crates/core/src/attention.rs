//! Pyramid spatial attention (PSA) and pyramid channel attention (PCA).
//!
//! Both blocks look at a feature at several scales obtained by lossless pixel
//! unshuffling. At each scale a single-channel weight map is produced from
//! the channel-wise max and mean, multiplied into the unshuffled feature with
//! a residual, and shuffled back:
//!
//! ```text
//! In_r = unshuffle(x, r)
//! D_r  = shuffle(f1(cat(max_c In_r, mean_c In_r)) * In_r + In_r, r)
//! ```
//!
//! PSA merges the `D_r` with a 3x3 convolution over their concatenation. PCA
//! first moves channels onto a `K x K` grid (`C = K^2`), treating each of the
//! `E = H*W` pixels as a channel, runs the same refinement on that grid, and
//! merges the scales with one 3x3 convolution shared by all `E` slices.
//! The weight maps are used raw, without a sigmoid.

use crate::error::{Error, Result};
use crate::params::{impl_module, ConvParams};
use crate::tape::{Tape, Var};

pub const PSA_FACTORS: [usize; 4] = [1, 2, 4, 6];
pub const PCA_FACTORS: [usize; 3] = [1, 2, 4];

#[derive(Clone, Debug, PartialEq)]
pub struct PsaParams {
    pub factors: Vec<usize>,
    /// One 1x1 conv (2 -> 1) per factor.
    pub fuse: Vec<ConvParams>,
    /// 3x3 conv, `n*C -> C`.
    pub merge: ConvParams,
}
impl_module!(PsaParams { fuse, merge });

impl PsaParams {
    /// Zero-initialised parameters; `factors` are sorted ascending.
    pub fn new(channels: usize, factors: &[usize]) -> Self {
        let mut factors = factors.to_vec();
        factors.sort_unstable();
        Self {
            fuse: factors.iter().map(|_| ConvParams::new(2, 1, 1)).collect(),
            merge: ConvParams::new(factors.len() * channels, channels, 3),
            factors,
        }
    }

    /// Sets the merge conv to average the `n` scale outputs channel by channel.
    pub fn set_averaging_merge(&mut self) {
        let n = self.factors.len();
        let c = self.merge.c_out();
        let w = self.merge.weight.data_mut();
        w.fill(0.0);
        for o in 0..c {
            for i in 0..n {
                w[((o * n * c + i * c + o) * 3 + 1) * 3 + 1] = 1.0 / n as f64;
            }
        }
        self.merge.bias.data_mut().fill(0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaParams {
    pub factors: Vec<usize>,
    /// Side `K` of the channel grid.
    pub grid: usize,
    pub fuse: Vec<ConvParams>,
    /// 3x3 conv, `n -> 1`, shared by every pixel slice.
    pub merge: ConvParams,
}
impl_module!(PcaParams { fuse, merge });

impl PcaParams {
    pub fn new(channels: usize, factors: &[usize]) -> Self {
        let mut factors = factors.to_vec();
        factors.sort_unstable();
        Self {
            grid: grid_side(channels).unwrap_or(0),
            fuse: factors.iter().map(|_| ConvParams::new(2, 1, 1)).collect(),
            merge: ConvParams::new(factors.len(), 1, 3),
            factors,
        }
    }
}

/// `K` with `K * K == channels`, if any.
pub fn grid_side(channels: usize) -> Option<usize> {
    let k = (channels as f64).sqrt().round() as usize;
    (k * k == channels && k > 0).then_some(k)
}

/// Multi-scale refinement at factor `r`; returns a tensor shaped like `x`.
fn refine<'p>(tape: &Tape<'p>, x: &Var<'p>, r: usize, fuse: &'p ConvParams) -> Result<Var<'p>> {
    let unshuffled = tape.pixel_unshuffle(x, r)?;
    let pooled = tape.cat(&[tape.channel_max(&unshuffled)?, tape.channel_avg(&unshuffled)?], 0)?;
    let weight = fuse.apply(tape, &pooled)?;
    let refined = tape.add(&tape.mul_channels(&unshuffled, &weight)?, &unshuffled)?;
    tape.pixel_shuffle(&refined, r)
}

pub fn psa_forward<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p PsaParams) -> Result<Var<'p>> {
    let (_, h, w) = x.value().dims3()?;
    if let Some(&factor) = p.factors.iter().find(|&&r| r == 0 || h % r != 0 || w % r != 0) {
        return Err(Error::PsaDivisibility { factor, height: h, width: w });
    }
    let scales = p
        .factors
        .iter()
        .zip(&p.fuse)
        .map(|(&r, fuse)| refine(tape, x, r, fuse))
        .collect::<Result<Vec<_>>>()?;
    p.merge.apply(tape, &tape.cat(&scales, 0)?)
}

pub fn pca_forward<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p PcaParams) -> Result<Var<'p>> {
    let (c, h, w) = x.value().dims3()?;
    let k = grid_side(c).ok_or(Error::ChannelGrid { channels: c, grid: p.grid })?;
    if k != p.grid {
        return Err(Error::ChannelGrid { channels: c, grid: p.grid });
    }
    if let Some(&factor) = p.factors.iter().find(|&&r| r == 0 || k % r != 0) {
        return Err(Error::GridFactor { factor, grid: k });
    }
    let e = h * w;
    // [C,H,W] -> [C,E] -> [E,C] -> [E,K,K]
    let flat = tape.transpose(&tape.reshape(x, &[c, e])?)?;
    let grid = tape.reshape(&flat, &[e, k, k])?;

    let n = p.factors.len();
    let mut slices = Vec::with_capacity(n);
    for (&r, fuse) in p.factors.iter().zip(&p.fuse) {
        let d = refine(tape, &grid, r, fuse)?;
        slices.push(tape.reshape(&d, &[e, 1, k, k])?);
    }
    // E groups of [n,K,K] through the shared n -> 1 conv.
    let stacked = tape.cat(&slices, 1)?;
    let merged = p.merge.apply(tape, &stacked)?;
    let back = tape.transpose(&tape.reshape(&merged, &[e, c])?)?;
    tape.reshape(&back, &[c, h, w])
}
