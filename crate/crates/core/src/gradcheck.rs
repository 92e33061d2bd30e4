//! Central finite-difference checks of tape gradients.
//!
//! A forward function is reduced to the scalar `sum(R * f(θ))` with a fixed
//! random weighting `R`, differentiated on a tape, and compared against
//! `(L(θ + h e_i) - L(θ - h e_i)) / 2h` at sampled coordinates of every input
//! and parameter tensor.

use std::fmt;

use crate::attention::{pca_forward, psa_forward, PcaParams, PsaParams, PSA_FACTORS};
use crate::dgc::{
    dgc_forward, geo_gran_interaction, geometric_branch, granular_branch, location_sensing, DgcParams,
    GeometricParams, GranularParams, InteractionParams, LocationParams, GEOMETRIC_FACTORS, GRANULAR_KERNELS,
};
use crate::error::Result;
use crate::fusion::{decode, dsp_forward, lgf_forward, DspParams, LgfParams};
use crate::mde::{mde_forward, MdeParams, MDE_KERNELS};
use crate::net::{G2hfNet, NetConfig};
use crate::objective::BETA2;
use crate::params::{ConvParams, Module};
use crate::rng::Rng;
use crate::tape::{Fault, Tape, Var};
use crate::tensor::Tensor;
use crate::train::{supervised_loss, synthetic_scene};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckConfig {
    pub step: f64,
    /// Minimum number of sampled coordinates.
    pub coords: usize,
    pub tolerance: f64,
    /// Added to `|numeric|` in the denominator of the relative error.
    pub floor: f64,
    pub seed: u64,
    /// Adjoint corruption applied to the analytic pass only.
    pub fault: Option<Fault>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { step: 1e-6, coords: 64, tolerance: 1e-4, floor: 1e-8, seed: 0, fault: None }
    }
}

/// Outcome of one gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub coords: usize,
    /// Largest `|analytic - numeric| / (|numeric| + floor)`.
    pub max_rel_err: f64,
    /// Coordinate with the largest error.
    pub worst: String,
    /// First non-finite value encountered, if any.
    pub non_finite: Option<String>,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.non_finite.is_none() && self.max_rel_err < self.tolerance
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<24} max_rel_err {:.3e} over {} coords", self.name, self.max_rel_err, self.coords)?;
        match &self.non_finite {
            Some(loc) => write!(f, " (non-finite at {loc})"),
            None if !self.passed() => write!(f, " (worst {})", self.worst),
            None => Ok(()),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + floor)
}

/// Checks `forward(tape, module, inputs)` with respect to every input tensor
/// and every parameter of `module`.
pub fn check<M, F>(name: &str, module: &mut M, inputs: &mut [Tensor], forward: F, cfg: &CheckConfig) -> Result<CheckReport>
where
    M: Module,
    F: for<'p> Fn(&Tape<'p>, &'p M, &[Var<'p>]) -> Result<Var<'p>>,
{
    let mut rng = Rng::new(cfg.seed);
    let mut report = CheckReport {
        name: name.to_owned(),
        coords: 0,
        max_rel_err: 0.0,
        worst: String::new(),
        non_finite: None,
        tolerance: cfg.tolerance,
    };

    // Analytic pass.
    let (weighting, analytic) = {
        let tape = match cfg.fault {
            Some(f) => Tape::with_fault(f),
            None => Tape::new(),
        };
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = forward(&tape, &*module, &vars)?;
        if let Some(i) = out.value().data().iter().position(|v| !v.is_finite()) {
            report.non_finite = Some(format!("forward output element {i}"));
            return Ok(report);
        }
        let weighting = Tensor::from_fn(out.shape(), |_| rng.uniform(-1.0, 1.0));
        let loss = tape.sum(&tape.mul(&out, &tape.constant(weighting.clone()))?);
        let grads = tape.backward(&loss)?;
        let mut analytic: Vec<(String, Tensor)> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("input{i}"), grads.get_or_zeros(v)))
            .collect();
        module.visit("", &mut |pname, t| {
            let g = grads.param(&tape, t).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
            analytic.push((pname.to_owned(), g));
        });
        (weighting, analytic)
    };
    for (pname, g) in &analytic {
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            report.non_finite = Some(format!("gradient of {pname}[{i}]"));
            return Ok(report);
        }
    }

    // One coordinate per tensor, then uniform over all elements.
    let sizes: Vec<usize> = analytic.iter().map(|(_, g)| g.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (t, &n) in sizes.iter().enumerate() {
        if n > 0 {
            coords.push((t, rng.below(n)));
        }
    }
    while coords.len() < cfg.coords.min(total) {
        let mut flat = rng.below(total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        coords.push((t, flat));
    }

    let eval = |module: &M, inputs: &[Tensor]| -> Result<f64> {
        let tape = Tape::inference();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = forward(&tape, module, &vars)?;
        Ok(out.value().data().iter().zip(weighting.data()).map(|(a, b)| a * b).sum())
    };
    for &(t, e) in &coords {
        let mut values = [0.0; 2];
        let mut original = 0.0;
        update(module, inputs, t, e, &mut |v| original = *v);
        for (slot, sign) in values.iter_mut().zip([1.0, -1.0]) {
            update(module, inputs, t, e, &mut |v| *v = original + sign * cfg.step);
            *slot = eval(module, inputs)?;
        }
        update(module, inputs, t, e, &mut |v| *v = original);
        let numeric = (values[0] - values[1]) / (2.0 * cfg.step);
        let a = analytic[t].1.data()[e];
        let loc = format!("{}[{e}]", analytic[t].0);
        if !numeric.is_finite() {
            report.non_finite = Some(format!("finite difference at {loc}"));
            return Ok(report);
        }
        let err = relative_error(a, numeric, cfg.floor);
        if err > report.max_rel_err || report.worst.is_empty() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = format!("{loc}: analytic {a:.6e}, numeric {numeric:.6e}");
        }
    }
    report.coords = coords.len();
    Ok(report)
}

/// Applies `f` to element `e` of tensor `t`, counting inputs first and then
/// module parameters in visiting order.
fn update<M: Module>(module: &mut M, inputs: &mut [Tensor], t: usize, e: usize, f: &mut dyn FnMut(&mut f64)) {
    if t < inputs.len() {
        f(&mut inputs[t].data_mut()[e]);
        return;
    }
    let mut k = inputs.len();
    module.visit_mut("", &mut |_, p| {
        if k == t {
            f(&mut p.data_mut()[e]);
        }
        k += 1;
    });
}


fn random(shape: &[usize], rng: &mut Rng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(lo, hi))
}

/// Values on `[-1, 1]` at least `0.05` away from zero, so that a finite
/// difference never straddles the kink of `relu`.
fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v = rng.uniform(0.05, 1.0);
        if rng.below(2) == 0 {
            v
        } else {
            -v
        }
    })
}

fn unary<F>(name: &str, x: Tensor, f: F, cfg: &CheckConfig) -> Result<CheckReport>
where
    F: for<'p> Fn(&Tape<'p>, &Var<'p>) -> Result<Var<'p>>,
{
    check(name, &mut (), &mut [x], |t, _, v| f(t, &v[0]), cfg)
}

fn conv_check(name: &str, conv: &mut ConvParams, x: Tensor, cfg: &CheckConfig) -> Result<CheckReport> {
    check(name, conv, &mut [x], |t, p, v| p.apply(t, &v[0]), cfg)
}

/// One check per differentiable primitive.
pub fn primitive_suite(cfg: &CheckConfig) -> Result<Vec<CheckReport>> {
    let mut rng = Rng::new(cfg.seed ^ 0x5eed);
    let mut out = Vec::new();

    for (name, k, stride, shape) in [
        ("conv2d_3x3", 3, 1, [3, 6, 6]),
        ("conv2d_5x5_stride2", 5, 2, [2, 9, 9]),
        ("conv2d_1x1", 1, 1, [4, 5, 5]),
    ] {
        let mut conv = ConvParams::strided(shape[0], 3, k, stride);
        conv.randomize(&mut rng, 0.5);
        let x = random(&shape, &mut rng, -1.0, 1.0);
        out.push(conv_check(name, &mut conv, x, cfg)?);
    }
    let mut ab = [random(&[8, 9], &mut rng, -1.0, 1.0), random(&[9, 5], &mut rng, -1.0, 1.0)];
    out.push(check("matmul", &mut (), &mut ab, |t, _, v| t.matmul(&v[0], &v[1]), cfg)?);

    out.push(unary("transpose", random(&[8, 9], &mut rng, -1.0, 1.0), |t, x| t.transpose(x), cfg)?);
    out.push(unary("reshape", random(&[4, 6, 3], &mut rng, -1.0, 1.0), |t, x| t.reshape(x, &[8, 9]), cfg)?);
    out.push(unary("pixel_unshuffle", random(&[2, 6, 6], &mut rng, -1.0, 1.0), |t, x| t.pixel_unshuffle(x, 3), cfg)?);
    out.push(unary("pixel_shuffle", random(&[8, 3, 3], &mut rng, -1.0, 1.0), |t, x| t.pixel_shuffle(x, 2), cfg)?);
    out.push(unary("channel_max", random(&[5, 4, 4], &mut rng, -1.0, 1.0), |t, x| t.channel_max(x), cfg)?);
    out.push(unary("channel_avg", random(&[5, 4, 4], &mut rng, -1.0, 1.0), |t, x| t.channel_avg(x), cfg)?);
    out.push(unary("resize_up", random(&[2, 5, 7], &mut rng, -1.0, 1.0), |t, x| t.resize(x, 11, 9), cfg)?);
    out.push(unary("resize_down", random(&[2, 10, 12], &mut rng, -1.0, 1.0), |t, x| t.resize(x, 5, 4), cfg)?);
    out.push(unary("narrow", random(&[6, 4, 4], &mut rng, -1.0, 1.0), |t, x| t.narrow(x, 0, 2, 3), cfg)?);
    out.push(unary("scale", random(&[4, 4, 4], &mut rng, -1.0, 1.0), |t, x| Ok(t.scale(x, -1.7)), cfg)?);
    out.push(unary("add_scalar", random(&[4, 4, 4], &mut rng, -1.0, 1.0), |t, x| Ok(t.add_scalar(x, 0.3)), cfg)?);
    out.push(unary("relu", away_from_zero(&[4, 4, 4], &mut rng), |t, x| Ok(t.relu(x)), cfg)?);
    out.push(unary("sigmoid", random(&[4, 4, 4], &mut rng, -3.0, 3.0), |t, x| Ok(t.sigmoid(x)), cfg)?);
    out.push(unary("sum", random(&[4, 4, 4], &mut rng, -1.0, 1.0), |t, x| Ok(t.sum(x)), cfg)?);

    let mut two = [random(&[4, 4, 4], &mut rng, -1.0, 1.0), random(&[4, 4, 4], &mut rng, -1.0, 1.0)];
    out.push(check("add", &mut (), &mut two, |t, _, v| t.add(&v[0], &v[1]), cfg)?);
    out.push(check("mul", &mut (), &mut two, |t, _, v| t.mul(&v[0], &v[1]), cfg)?);
    let mut parts = [random(&[2, 4, 4], &mut rng, -1.0, 1.0), random(&[3, 4, 4], &mut rng, -1.0, 1.0)];
    out.push(check("cat", &mut (), &mut parts, |t, _, v| t.cat(v, 0), cfg)?);
    let mut gated = [random(&[4, 5, 5], &mut rng, -1.0, 1.0), random(&[1, 5, 5], &mut rng, -1.0, 1.0)];
    out.push(check("mul_channels", &mut (), &mut gated, |t, _, v| t.mul_channels(&v[0], &v[1]), cfg)?);

    let mask = Tensor::from_fn(&[1, 8, 8], |_| rng.below(2) as f64);
    let s = random(&[1, 8, 8], &mut rng, 0.05, 0.95);
    fn gt<'p>(t: &Tape<'p>, mask: &Tensor) -> Var<'p> {
        t.constant(mask.clone())
    }
    out.push(unary("bce_loss", s.clone(), |t, x| t.bce_loss(x, &gt(t, &mask)), cfg)?);
    out.push(unary("iou_loss", s.clone(), |t, x| t.iou_loss(x, &gt(t, &mask)), cfg)?);
    out.push(unary("fm_loss", s, |t, x| t.fm_loss(x, &gt(t, &mask), BETA2), cfg)?);
    Ok(out)
}

/// One check per network module at toy sizes, with parameters drawn
/// uniformly on `[-0.5, 0.5]`.
pub fn module_suite(cfg: &CheckConfig) -> Result<Vec<CheckReport>> {
    let mut rng = Rng::new(cfg.seed ^ 0x6d0d);
    let mut out = Vec::new();
    let scale = 0.5;

    let mut psa = PsaParams::new(4, &PSA_FACTORS);
    psa.randomize(&mut rng, scale);
    let x = random(&[4, 12, 12], &mut rng, -1.0, 1.0);
    out.push(check("psa", &mut psa, &mut [x], |t, p, v| psa_forward(t, &v[0], p), cfg)?);

    let mut pca = PcaParams::new(16, &[1, 2]);
    pca.randomize(&mut rng, scale);
    let x = random(&[16, 3, 3], &mut rng, -1.0, 1.0);
    out.push(check("pca", &mut pca, &mut [x], |t, p, v| pca_forward(t, &v[0], p), cfg)?);

    let mut mde = MdeParams::new(4, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
    mde.randomize(&mut rng, 0.2);
    let x = random(&[4, 24, 24], &mut rng, -1.0, 1.0);
    out.push(check("mde", &mut mde, &mut [x], |t, p, v| mde_forward(t, &v[0], p), cfg)?);

    let mut gran = GranularParams::new(4, &GRANULAR_KERNELS);
    gran.randomize(&mut rng, 0.2);
    let x = random(&[4, 8, 8], &mut rng, -1.0, 1.0);
    out.push(check("granular", &mut gran, &mut [x], |t, p, v| granular_branch(t, &v[0], p), cfg)?);

    let mut loc = LocationParams::new(3);
    loc.randomize(&mut rng, scale);
    let x = random(&[3, 4, 4], &mut rng, -1.0, 1.0);
    out.push(check("location_sensing", &mut loc, &mut [x], |t, p, v| location_sensing(t, &v[0], p), cfg)?);

    let mut geo = GeometricParams::new(4, &GEOMETRIC_FACTORS);
    geo.randomize(&mut rng, scale);
    let x = random(&[4, 8, 8], &mut rng, -1.0, 1.0);
    out.push(check("geometric", &mut geo, &mut [x], |t, p, v| geometric_branch(t, &v[0], p), cfg)?);

    let mut inter = InteractionParams { conv: ConvParams::new(8, 1, 1) };
    inter.randomize(&mut rng, scale);
    let mut pair = [random(&[4, 6, 6], &mut rng, -1.0, 1.0), random(&[4, 6, 6], &mut rng, -1.0, 1.0)];
    out.push(check(
        "interaction",
        &mut inter,
        &mut pair,
        |t, p, v| {
            let r = geo_gran_interaction(t, &v[0], &v[1], p)?;
            t.cat(&[r.geometric, r.granular], 0)
        },
        cfg,
    )?);

    let mut dgc = DgcParams::new(4, &PSA_FACTORS, &[1, 2]);
    dgc.randomize(&mut rng, 0.2);
    let x = random(&[4, 24, 24], &mut rng, -1.0, 1.0);
    out.push(check("dgc", &mut dgc, &mut [x], |t, p, v| dgc_forward(t, &v[0], p), cfg)?);

    let mut dsp = DspParams::new(4);
    dsp.randomize(&mut rng, scale);
    let x = random(&[4, 3, 3], &mut rng, -1.0, 1.0);
    out.push(check("dsp", &mut dsp, &mut [x], |t, p, v| dsp_forward(t, &v[0], p), cfg)?);

    let mut lgf = LgfParams::new(4);
    lgf.randomize(&mut rng, scale);
    let mut pair = [random(&[4, 8, 8], &mut rng, -1.0, 1.0), random(&[4, 4, 4], &mut rng, -1.0, 1.0)];
    out.push(check("lgf", &mut lgf, &mut pair, |t, p, v| lgf_forward(t, &v[0], &v[1], p), cfg)?);

    let mut chain: Vec<LgfParams> = vec![LgfParams::new(4)];
    chain.randomize(&mut rng, scale);
    let mut levels = [random(&[4, 8, 8], &mut rng, -1.0, 1.0), random(&[4, 4, 4], &mut rng, -1.0, 1.0)];
    out.push(check(
        "decode_two_level",
        &mut chain,
        &mut levels,
        |t, p, v| {
            let d = decode(t, v, p)?;
            t.cat(&[t.resize(&d[1], 8, 8)?, d[0].clone()], 0)
        },
        cfg,
    )?);
    Ok(out)
}

/// Gradient of the five-head training loss of the toy network on the
/// synthetic scene, with respect to every parameter tensor and the image.
///
/// At the seeded initialization the decoder carries activations near 1e-8
/// and most gradients sit below finite-difference resolution, so the check
/// runs at weights drawn from `U(-0.1, 0.1)`, where every head is far from
/// saturation. The loss sums about 2e5 pixel terms, so its evaluation carries
/// a round-off of order `100 eps |L|`; the step is `1e-5` and the relative
/// error floor is that round-off divided by `2h` and by the tolerance.
pub fn network_check(cfg: &CheckConfig) -> Result<CheckReport> {
    let config = NetConfig::toy();
    let mut net = G2hfNet::seeded(config.clone(), cfg.seed)?;
    net.randomize(&mut Rng::new(cfg.seed ^ 0x6e65), 0.1);
    let (image, mask) = synthetic_scene(config.input_size, cfg.seed);
    let loss = {
        let tape = Tape::inference();
        let maps = net.forward_on(&tape, &tape.constant(image.clone()))?;
        supervised_loss(&tape, &maps, &tape.constant(mask.clone()))?.value().item()
    };
    let step = 1e-5;
    let round_off = 100.0 * f64::EPSILON * loss.abs() / (2.0 * step);
    let cfg = CheckConfig { step, floor: cfg.floor.max(round_off / cfg.tolerance), ..*cfg };
    network_check_on(&mut net, image, &mask, &cfg)
}

pub fn network_check_on(net: &mut G2hfNet, image: Tensor, mask: &Tensor, cfg: &CheckConfig) -> Result<CheckReport> {
    check(
        "network",
        net,
        &mut [image],
        |t, net, v| {
            let maps = net.forward_on(t, &v[0])?;
            supervised_loss(t, &maps, &t.constant(mask.clone()))
        },
        cfg,
    )
}
