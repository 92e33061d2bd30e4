//! Toy pyramid encoder, full network assembly and deep-supervision heads.
//!
//! Level schedule (strides 4, 4, 8, 16, 32):
//!
//! ```text
//! image [3,H,W]
//!   stem  3x3/2, relu        H/2
//!   stem  3x3/2, relu        H/4   -> F1
//!   conv  3x3/1, relu        H/4   -> F2
//!   conv  3x3/2, relu        H/8   -> F3
//!   conv  3x3/2, relu        H/16  -> F4
//!   conv  3x3/2, relu        H/32  -> F5
//! ```
//!
//! Each level is compressed to `C` channels by a 1x1 conv. F1 and F2 go
//! through MDE, F3 and F4 through DGC, F5 through DSP; the decoder fuses them
//! top-down and every decoder level gets a 1x1 head, a bilinear upsample to
//! the input size and a sigmoid.

use crate::attention::{grid_side, PCA_FACTORS, PSA_FACTORS};
use crate::dgc::{dgc_forward, DgcParams, GEOMETRIC_FACTORS};
use crate::error::{Error, Result};
use crate::fusion::{decode, dsp_forward, DspParams, LgfParams};
use crate::mde::{mde_forward, MdeParams, MDE_KERNELS};
use crate::params::{impl_module, join, ConvParams, Module};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

pub const LEVELS: usize = 5;
/// Downsampling factor of each level relative to the input.
pub const LEVEL_STRIDES: [usize; LEVELS] = [4, 4, 8, 16, 32];

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Working channel count of every inter-module feature.
    pub channels: usize,
    pub psa_factors: Vec<usize>,
    pub pca_factors: Vec<usize>,
    /// Kernel sizes of the MDE U-branches and the granular cascade.
    pub kernels: Vec<usize>,
    pub geometric_factors: Vec<usize>,
    /// Side of the square training/inference input.
    pub input_size: usize,
    /// Channels inside the toy encoder before compression.
    pub encoder_width: usize,
    /// Scale location-sensing response maps by `1/sqrt(C)`.
    pub attention_scaling: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            psa_factors: PSA_FACTORS.to_vec(),
            pca_factors: PCA_FACTORS.to_vec(),
            kernels: MDE_KERNELS.to_vec(),
            geometric_factors: GEOMETRIC_FACTORS.to_vec(),
            input_size: 384,
            encoder_width: 64,
            attention_scaling: false,
        }
    }
}

impl NetConfig {
    /// `C = 4`, 192x192 input, channel-grid factors `[1, 2]`.
    pub fn toy() -> Self {
        Self {
            channels: 4,
            pca_factors: vec![1, 2],
            input_size: 192,
            encoder_width: 16,
            ..Self::default()
        }
    }

    /// Side `K` of the channel grid used by channel attention.
    pub fn grid(&self) -> Option<usize> {
        grid_side(self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.grid().ok_or(Error::ChannelGrid { channels: self.channels, grid: 0 })?;
        if let Some(&factor) = self.pca_factors.iter().find(|&&r| r == 0 || k % r != 0) {
            return Err(Error::GridFactor { factor, grid: k });
        }
        if let Some(&k) = self.kernels.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::KernelParity(k));
        }
        for (name, list) in [("psa factors", &self.psa_factors), ("geometric factors", &self.geometric_factors)] {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::invalid("config", format!("{name} must be non-empty and positive")));
            }
        }
        if self.kernels.is_empty() || self.encoder_width == 0 {
            return Err(Error::invalid("config", "kernels and encoder width must be non-empty"));
        }
        Ok(())
    }

    /// Checks that an `h x w` image can pass through every level.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let fail = |level: usize, reason: String| Err(Error::Precondition { level, height: h, width: w, reason });
        for (i, &s) in LEVEL_STRIDES.iter().enumerate() {
            let level = i + 1;
            if !h.is_multiple_of(s) || !w.is_multiple_of(s) {
                return fail(level, format!("stride {s} must divide height and width"));
            }
            let (lh, lw) = (h / s, w / s);
            let mut needs: Vec<(&str, usize)> = Vec::new();
            if level <= 4 {
                needs.extend(self.psa_factors.iter().map(|&r| ("spatial attention factor", r)));
            }
            if level == 3 || level == 4 {
                needs.extend(self.geometric_factors.iter().map(|&r| ("geometric factor", r)));
            }
            if let Some((what, r)) = needs.into_iter().find(|&(_, r)| lh % r != 0 || lw % r != 0) {
                return fail(level, format!("{what} {r} must divide the {lh}x{lw} feature"));
            }
        }
        Ok(())
    }

    /// `(H, W)` of every level for an `h x w` input.
    pub fn level_sizes(h: usize, w: usize) -> [(usize, usize); LEVELS] {
        LEVEL_STRIDES.map(|s| (h / s, w / s))
    }
}

/// Maps an image to the five-level feature pyramid.
pub trait Backbone: Module {
    fn encode<'p>(&'p self, tape: &Tape<'p>, image: &Var<'p>) -> Result<Vec<Var<'p>>>;
}

/// Five features, finest first.
pub struct FeaturePyramid<'p> {
    pub levels: Vec<Var<'p>>,
}

/// Strided 3x3 conv stack with ReLU and per-level 1x1 compression.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEncoder {
    pub stem: Vec<ConvParams>,
    /// One conv per level; level 1 is the last stem conv.
    pub stages: Vec<ConvParams>,
    pub compress: Vec<ConvParams>,
}
impl_module!(ToyEncoder { stem, stages, compress });

impl ToyEncoder {
    pub fn new(width: usize, channels: usize) -> Self {
        Self {
            stem: vec![ConvParams::strided(3, width, 3, 2), ConvParams::strided(width, width, 3, 2)],
            stages: vec![
                ConvParams::new(width, width, 3),
                ConvParams::strided(width, width, 3, 2),
                ConvParams::strided(width, width, 3, 2),
                ConvParams::strided(width, width, 3, 2),
            ],
            compress: (0..LEVELS).map(|_| ConvParams::new(width, channels, 1)).collect(),
        }
    }
}

impl Backbone for ToyEncoder {
    fn encode<'p>(&'p self, tape: &Tape<'p>, image: &Var<'p>) -> Result<Vec<Var<'p>>> {
        let mut x = image.clone();
        for conv in &self.stem {
            x = tape.relu(&conv.apply(tape, &x)?);
        }
        let mut raw = vec![x.clone()];
        for conv in &self.stages {
            x = tape.relu(&conv.apply(tape, &x)?);
            raw.push(x.clone());
        }
        raw.iter().zip(&self.compress).map(|(f, c)| c.apply(tape, f)).collect()
    }
}

/// Everything after the backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct G2hfHead {
    pub mde1: MdeParams,
    pub mde2: MdeParams,
    pub dgc3: DgcParams,
    pub dgc4: DgcParams,
    pub dsp: DspParams,
    /// `lgf[i]` produces decoder level `i + 1`.
    pub lgf: Vec<LgfParams>,
    /// 1x1 `C -> 1` per decoder level.
    pub heads: Vec<ConvParams>,
}
impl_module!(G2hfHead { mde1, mde2, dgc3, dgc4, dsp, lgf, heads });

impl G2hfHead {
    pub fn new(config: &NetConfig) -> Self {
        let c = config.channels;
        let mde = || MdeParams::new(c, &config.kernels, &config.psa_factors, &config.pca_factors);
        let dgc = || {
            let mut d = DgcParams::with_branches(
                c,
                &config.psa_factors,
                &config.pca_factors,
                &config.kernels,
                &config.geometric_factors,
            );
            for s in &mut d.geometric.sensing {
                s.scaled = config.attention_scaling;
            }
            d
        };
        let mut dsp = DspParams::new(c);
        dsp.sensing.scaled = config.attention_scaling;
        Self {
            mde1: mde(),
            mde2: mde(),
            dgc3: dgc(),
            dgc4: dgc(),
            dsp,
            lgf: (0..LEVELS - 1).map(|_| LgfParams::new(c)).collect(),
            heads: (0..LEVELS).map(|_| ConvParams::new(c, 1, 1)).collect(),
        }
    }

    /// Enhanced features `F1^m, F2^m, F3^c, F4^c, F5^s`.
    pub fn enhance<'p>(&'p self, tape: &Tape<'p>, f: &[Var<'p>]) -> Result<Vec<Var<'p>>> {
        if f.len() != LEVELS {
            return Err(Error::invalid("enhance", format!("expected {LEVELS} features, got {}", f.len())));
        }
        Ok(vec![
            mde_forward(tape, &f[0], &self.mde1)?,
            mde_forward(tape, &f[1], &self.mde2)?,
            dgc_forward(tape, &f[2], &self.dgc3)?,
            dgc_forward(tape, &f[3], &self.dgc4)?,
            dsp_forward(tape, &f[4], &self.dsp)?,
        ])
    }

    /// Five saliency maps `[1,H,W]`, finest decoder level first.
    pub fn predict<'p>(&'p self, tape: &Tape<'p>, f: &[Var<'p>], h: usize, w: usize) -> Result<Vec<Var<'p>>> {
        let enhanced = self.enhance(tape, f)?;
        let decoded = decode(tape, &enhanced, &self.lgf)?;
        decoded
            .iter()
            .zip(&self.heads)
            .map(|(d, head)| Ok(tape.sigmoid(&tape.resize(&head.apply(tape, d)?, h, w)?)))
            .collect()
    }
}

/// Five `[1,H,W]` maps in `[0,1]`; `maps[0]` is the primary prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyOutputs {
    pub maps: Vec<Tensor>,
}

impl SaliencyOutputs {
    pub fn primary(&self) -> &Tensor {
        &self.maps[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct G2hfNet<B = ToyEncoder> {
    pub config: NetConfig,
    pub backbone: B,
    pub head: G2hfHead,
}

impl<B: Backbone> Module for G2hfNet<B> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.backbone.visit(&join(prefix, "encoder"), f);
        self.head.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.backbone.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(prefix, f);
    }
}

impl G2hfNet<ToyEncoder> {
    /// Zero-initialised network with the toy encoder.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let backbone = ToyEncoder::new(config.encoder_width, config.channels);
        Ok(Self::with_backbone(config, backbone))
    }

    /// Network with seeded initial weights.
    pub fn seeded(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::new(config)?;
        net.init(&mut Rng::new(seed));
        Ok(net)
    }

    /// Network whose parameters are loaded from `weights`.
    pub fn from_weights(config: NetConfig, weights: &ModelWeights) -> Result<Self> {
        let mut net = Self::new(config)?;
        net.load_weights(weights)?;
        Ok(net)
    }
}

impl<B: Backbone> G2hfNet<B> {
    pub fn with_backbone(config: NetConfig, backbone: B) -> Self {
        let head = G2hfHead::new(&config);
        Self { config, backbone, head }
    }

    pub fn encode<'p>(&'p self, tape: &Tape<'p>, image: &Var<'p>) -> Result<FeaturePyramid<'p>> {
        let (_, h, w) = image.value().dims3()?;
        self.check_image(image.value())?;
        let levels = self.backbone.encode(tape, image)?;
        for (i, (f, (lh, lw))) in levels.iter().zip(NetConfig::level_sizes(h, w)).enumerate() {
            if f.shape() != [self.config.channels, lh, lw] {
                return Err(Error::invalid(
                    "encode",
                    format!("level {} has shape {:?}, expected {:?}", i + 1, f.shape(), [self.config.channels, lh, lw]),
                ));
            }
        }
        Ok(FeaturePyramid { levels })
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let (c, h, w) = image.dims3()?;
        if c != 3 {
            return Err(Error::ChannelMismatch { expected: 3, got: c });
        }
        self.config.check_input(h, w)
    }

    /// Records the full forward pass on `tape`.
    pub fn forward_on<'p>(&'p self, tape: &Tape<'p>, image: &Var<'p>) -> Result<Vec<Var<'p>>> {
        let (_, h, w) = image.value().dims3()?;
        let pyramid = self.encode(tape, image)?;
        self.head.predict(tape, &pyramid.levels, h, w)
    }

    /// Inference without recording gradients.
    pub fn forward(&self, image: &Tensor) -> Result<SaliencyOutputs> {
        let tape = Tape::inference();
        let maps = self.forward_on(&tape, &tape.constant(image.clone()))?;
        Ok(SaliencyOutputs { maps: maps.iter().map(Var::to_tensor).collect() })
    }
}

/// Seeded initial weights for `config`.
pub fn init_weights(config: &NetConfig, seed: u64) -> Result<ModelWeights> {
    Ok(G2hfNet::seeded(config.clone(), seed)?.to_weights())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_model_constants() {
        let c = NetConfig::default();
        assert_eq!(c.channels, 64);
        assert_eq!(c.grid(), Some(8));
        assert_eq!(c.psa_factors, [1, 2, 4, 6]);
        assert_eq!(c.pca_factors, [1, 2, 4]);
        assert_eq!(c.kernels, [1, 3, 5, 7]);
        assert_eq!(c.input_size, 384);
    }

    #[test]
    fn input_preconditions() {
        let c = NetConfig::toy();
        assert!(c.check_input(192, 192).is_ok());
        assert!(c.check_input(384, 384).is_ok());
        let err = c.check_input(100, 100).unwrap_err();
        assert!(matches!(err, Error::Precondition { level: 1, .. }), "{err}");
        let err = c.check_input(96, 96).unwrap_err();
        assert!(matches!(err, Error::Precondition { level: 4, .. }), "{err}");
    }

    #[test]
    fn pyramid_sizes() {
        let net = G2hfNet::seeded(NetConfig::toy(), 1).unwrap();
        let tape = Tape::inference();
        let image = tape.constant(Tensor::full(&[3, 192, 192], 0.5));
        let p = net.encode(&tape, &image).unwrap();
        let sizes: Vec<usize> = p.levels.iter().map(|f| f.shape()[1]).collect();
        assert_eq!(sizes, [48, 48, 24, 12, 6]);
        assert!(p.levels.iter().all(|f| f.shape()[0] == 4));
    }

    #[test]
    fn zero_image_zero_params_zero_pyramid() {
        let net = G2hfNet::new(NetConfig::toy()).unwrap();
        let tape = Tape::inference();
        let p = net.encode(&tape, &tape.constant(Tensor::zeros(&[3, 192, 192]))).unwrap();
        assert!(p.levels.iter().all(|f| f.value().max_abs() == 0.0));
    }

    #[test]
    fn toy_forward_contract() {
        let net = G2hfNet::seeded(NetConfig::toy(), 3).unwrap();
        let mut rng = Rng::new(4);
        let image = Tensor::from_fn(&[3, 192, 192], |_| rng.uniform(0.0, 1.0));
        let out = net.forward(&image).unwrap();
        assert_eq!(out.maps.len(), 5);
        for m in &out.maps {
            assert_eq!(m.shape(), [1, 192, 192]);
            assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn names_are_unique_and_round_trip() {
        let net = G2hfNet::seeded(NetConfig::toy(), 5).unwrap();
        let w = net.to_weights();
        assert_eq!(w.len(), net.named_tensors().len());
        assert!(w.get("mde1.branches.3.conv_a.weight").is_some());
        assert!(w.get("encoder.compress.4.bias").is_some());
        let back = G2hfNet::from_weights(NetConfig::toy(), &w).unwrap();
        assert_eq!(back, net);
    }
}
