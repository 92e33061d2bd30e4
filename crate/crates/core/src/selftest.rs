//! Named invariant checks: round trips, oracle comparisons, gradient checks
//! and loss identities.
//!
//! Every check returns `Ok(detail)` or `Err(reason)`. The same functions are
//! run by the `selftest` command and by the acceptance tests.

use crate::attention::{pca_forward, psa_forward, PcaParams, PsaParams, PSA_FACTORS};
use crate::dgc::{
    dgc_forward, dgc_forward_traced, geo_gran_interaction, geometric_branch, granular_branch, location_sensing,
    DgcParams, GeometricParams, GranularParams, InteractionParams, LocationParams, GEOMETRIC_FACTORS, GRANULAR_KERNELS,
};
use crate::error::WeightError;
use crate::fusion::{decode, dsp_forward, lgf_forward, DspParams, LgfParams};
use crate::gradcheck::{self, CheckConfig, CheckReport};
use crate::mde::{mde_branch_detail, mde_forward, MdeParams, MDE_KERNELS};
use crate::net::{G2hfNet, NetConfig};
use crate::objective::{
    bce_loss, f_measure, fm_loss, iou_loss, lr_schedule, mae_metric, total_loss, RmsConfig, RmsProp, BETA2,
};
use crate::ops;
use crate::oracle;
use crate::params::{ConvParams, Module};
use crate::rng::Rng;
use crate::tape::{Fault, Tape};
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

pub type Outcome = std::result::Result<String, String>;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Corrupts one adjoint in every gradient check.
    pub fault: Option<Fault>,
}

impl SuiteConfig {
    fn gradcheck(&self) -> CheckConfig {
        CheckConfig { seed: self.seed, fault: self.fault, ..CheckConfig::default() }
    }
}

pub struct Check {
    pub name: &'static str,
    pub run: fn(&SuiteConfig) -> Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Outcome,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn line(&self) -> String {
        match &self.outcome {
            Ok(d) => format!("PASS {:<32} {d}", self.name),
            Err(e) => format!("FAIL {:<32} {e}", self.name),
        }
    }
}

/// Runs every check whose name contains `filter`.
pub fn run(filter: Option<&str>, cfg: &SuiteConfig, mut report: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    checks()
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .map(|c| {
            let r = CheckResult { name: c.name, outcome: (c.run)(cfg) };
            report(&r);
            r
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
}

fn soft_map(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(0.0, 1.0))
}

fn binary_map(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.below(2) as f64)
}

fn within(name: &str, got: &Tensor, want: &Tensor, tol: f64) -> std::result::Result<f64, String> {
    let d = got.max_abs_diff(want);
    ensure(d <= tol, || format!("{name}: max abs diff {d:.3e} > {tol:.0e}"))?;
    Ok(d)
}

fn gradient_outcome(reports: Vec<CheckReport>) -> Outcome {
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed() || r.coords < 64).map(|r| r.to_string()).collect();
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    ensure(failed.is_empty(), || failed.join("; "))?;
    Ok(format!("{} checks, max rel err {worst:.2e}", reports.len()))
}

pub fn checks() -> Vec<Check> {
    macro_rules! list {
        ($($name:literal => $f:expr),+ $(,)?) => { vec![$(Check { name: $name, run: $f }),+] };
    }
    list![
        "unshuffle.example" => unshuffle_example,
        "unshuffle.identity_factor" => unshuffle_identity_factor,
        "unshuffle.round_trip" => |c| shuffle_round_trip(1000, c.seed),
        "unshuffle.multiset" => unshuffle_multiset,
        "unshuffle.divisibility" => unshuffle_divisibility,
        "unshuffle.gradient" => unshuffle_gradient,
        "conv.identity_1x1" => conv_identity,
        "conv.ones_counts_taps" => conv_ones_counts,
        "conv.dirac" => conv_dirac,
        "conv.errors" => conv_errors,
        "conv.oracle" => |c| oracle_conv(20, c.seed),
        "matmul.oracle" => |c| oracle_matmul(20, c.seed),
        "pool.examples" => pool_examples,
        "pool.oracle" => pool_oracle,
        "pool.avg_times_channels" => pool_avg_times_channels,
        "resize.identity_and_constant" => resize_identity_constant,
        "resize.oracle" => resize_oracle,
        "tape.sum_gradient" => tape_sum_gradient,
        "tape.non_scalar_loss" => tape_non_scalar,
        "gradient.primitives" => |c| gradient_outcome(gradcheck::primitive_suite(&c.gradcheck()).map_err(err)?),
        "gradient.modules" => |c| gradient_outcome(gradcheck::module_suite(&c.gradcheck()).map_err(err)?),
        "loss.identities" => loss_identities,
        "loss.oracle" => |c| oracle_losses(20, c.seed),
        "loss.total_perfect" => loss_total_perfect,
        "loss.batch_average" => loss_batch_average,
        "metric.sanity" => |c| metric_sanity(50, c.seed),
        "metric.oracle" => metric_oracle,
        "rmsprop.zero_gradient" => rmsprop_zero_gradient,
        "rmsprop.scalar_step" => rmsprop_scalar_step,
        "rmsprop.quadratic" => rmsprop_quadratic,
        "rmsprop.lr_zero" => rmsprop_lr_zero,
        "rmsprop.schedule" => lr_schedule_values,
        "psa.zero" => psa_zero,
        "psa.averaging_identity" => psa_averaging_identity,
        "psa.oracle" => psa_oracle,
        "pca.zero" => pca_zero,
        "pca.oracle" => pca_oracle,
        "pca.pixel_count" => pca_pixel_count,
        "mde.zero" => mde_zero,
        "mde.residual_skip" => mde_residual_skip,
        "mde.oracle" => mde_oracle,
        "granular.cascade" => granular_cascade,
        "granular.oracle" => granular_oracle,
        "location.basis" => location_basis,
        "location.oracle" => |c| oracle_location(20, c.seed),
        "geometric.oracle" => geometric_oracle,
        "interaction.half_gain" => interaction_half_gain,
        "interaction.gain_and_symmetry" => interaction_gain_symmetry,
        "interaction.oracle" => interaction_oracle,
        "dgc.zero" => dgc_zero,
        "dgc.residual" => dgc_residual,
        "dgc.oracle" => dgc_oracle,
        "dsp.oracle" => dsp_oracle,
        "lgf.zero_gates" => lgf_zero_gates,
        "lgf.oracle" => lgf_oracle,
        "decode.resolutions" => decode_resolutions,
        "weights.round_trip" => weights_round_trip,
        "weights.corrupt_codes" => |_| weight_fixture_codes().map(|c| format!("codes {c:?}")),
        "weights.unknown_name" => weights_unknown_name,
        "net.pyramid" => net_pyramid,
        "net.init" => net_init,
    ]
}

// ---- shuffle ----

fn unshuffle_example(_: &SuiteConfig) -> Outcome {
    let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).map_err(err)?;
    let u = ops::pixel_unshuffle(&x, 2).map_err(err)?;
    ensure(u.shape() == [4, 1, 1] && u.data() == [1.0, 2.0, 3.0, 4.0], || format!("got {u:?}"))?;
    let back = ops::pixel_shuffle(&u, 2).map_err(err)?;
    ensure(back == x, || format!("shuffle gave {back:?}"))?;
    Ok("[[1,2],[3,4]] <-> (1,2,3,4)".into())
}

fn unshuffle_identity_factor(c: &SuiteConfig) -> Outcome {
    let x = random(&[3, 5, 7], &mut Rng::new(c.seed));
    ensure(ops::pixel_unshuffle(&x, 1).map_err(err)? == x, || "r=1 unshuffle changed x".into())?;
    ensure(ops::pixel_shuffle(&x, 1).map_err(err)? == x, || "r=1 shuffle changed x".into())?;
    Ok("r=1 is the identity".into())
}

/// `shuffle(unshuffle(x, r), r) == x` bit-exactly for `n` random shapes and
/// factors `r` in `{1, 2, 4, 6}`.
pub fn shuffle_round_trip(n: usize, seed: u64) -> Outcome {
    let mut rng = Rng::new(seed);
    for i in 0..n {
        let r = [1, 2, 4, 6][rng.below(4)];
        let shape = [1 + rng.below(4), r * (1 + rng.below(4)), r * (1 + rng.below(4))];
        let x = random(&shape, &mut rng);
        let back = ops::pixel_shuffle(&ops::pixel_unshuffle(&x, r).map_err(err)?, r).map_err(err)?;
        ensure(back == x, || format!("case {i}: shape {shape:?} r={r} not restored"))?;
    }
    Ok(format!("{n} random (shape, r) pairs"))
}

fn unshuffle_multiset(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 1);
    for r in [2, 3, 4, 6] {
        let x = random(&[2, 12, 12], &mut rng);
        let mut a = x.data().to_vec();
        let mut b = ops::pixel_unshuffle(&x, r).map_err(err)?.into_data();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        ensure(a == b, || format!("r={r}: values changed"))?;
    }
    Ok("sorted values identical for r = 2, 3, 4, 6".into())
}

fn unshuffle_divisibility(_: &SuiteConfig) -> Outcome {
    let e = ops::pixel_unshuffle(&Tensor::zeros(&[1, 6, 6]), 4).err().ok_or("6x6 with r=4 accepted")?;
    ensure(e.to_string().contains("divisibility"), || format!("message {e}"))?;
    let e = ops::pixel_shuffle(&Tensor::zeros(&[3, 2, 2]), 2).err().ok_or("3 channels with r=2 accepted")?;
    ensure(e.to_string().contains("divisibility"), || format!("message {e}"))?;
    Ok("indivisible inputs rejected".into())
}

fn unshuffle_gradient(c: &SuiteConfig) -> Outcome {
    let tape = match c.fault {
        Some(f) => Tape::with_fault(f),
        None => Tape::new(),
    };
    let x = tape.leaf(random(&[2, 4, 4], &mut Rng::new(c.seed)));
    let loss = tape.sum(&tape.pixel_unshuffle(&x, 2).map_err(err)?);
    let g = tape.backward(&loss).map_err(err)?;
    let grad = g.get_or_zeros(&x);
    ensure(grad.data().iter().all(|&v| v == 1.0), || "d sum(unshuffle(x)) / dx is not all ones".into())?;
    let cfg = c.gradcheck();
    let mut reports = Vec::new();
    for (name, shape, r, unshuffle) in [("pixel_unshuffle", [2, 6, 6], 3, true), ("pixel_shuffle", [8, 3, 3], 2, false)] {
        let x = random(&shape, &mut Rng::new(c.seed ^ 7));
        let report = gradcheck::check(
            name,
            &mut (),
            &mut [x],
            |t, _, v| if unshuffle { t.pixel_unshuffle(&v[0], r) } else { t.pixel_shuffle(&v[0], r) },
            &cfg,
        )
        .map_err(err)?;
        reports.push(report);
    }
    gradient_outcome(reports)
}

// ---- conv, matmul, pools, resize ----

fn conv_identity(c: &SuiteConfig) -> Outcome {
    let x = random(&[4, 5, 6], &mut Rng::new(c.seed));
    let mut p = ConvParams::new(4, 4, 1);
    p.set_identity();
    let y = ops::conv2d(&x, &p.weight, &p.bias, 1, 0).map_err(err)?;
    ensure(y == x, || "1x1 identity conv changed the input".into())?;
    Ok("exact".into())
}

fn conv_ones_counts(_: &SuiteConfig) -> Outcome {
    let c = 1.5;
    let y = ops::conv2d(&Tensor::full(&[1, 5, 5], c), &Tensor::ones(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 1, 1)
        .map_err(err)?;
    ensure(y.at3(0, 2, 2) == 9.0 * c && y.at3(0, 0, 0) == 4.0 * c && y.at3(0, 0, 2) == 6.0 * c, || {
        format!("interior {} corner {} edge {}", y.at3(0, 2, 2), y.at3(0, 0, 0), y.at3(0, 0, 2))
    })?;
    Ok("interior 9c, corner 4c, edge 6c".into())
}

fn conv_dirac(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 2);
    for k in [1, 3, 5, 7] {
        let x = random(&[3, 9, 8], &mut rng);
        let mut p = ConvParams::new(3, 3, k);
        p.set_identity();
        let y = ops::conv2d(&x, &p.weight, &p.bias, 1, p.padding).map_err(err)?;
        ensure(y == x, || format!("k={k}: Dirac conv is not the identity"))?;
    }
    Ok("k = 1, 3, 5, 7".into())
}

fn conv_errors(_: &SuiteConfig) -> Outcome {
    let x = Tensor::zeros(&[2, 5, 5]);
    let e = ops::conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1]), 1, 1).unwrap_err();
    ensure(e.to_string().contains("channel mismatch"), || format!("got {e}"))?;
    let e = ops::conv2d(&x, &Tensor::zeros(&[1, 2, 2, 2]), &Tensor::zeros(&[1]), 1, 0).unwrap_err();
    ensure(e.to_string().contains("kernel parity"), || format!("got {e}"))?;
    Ok("channel mismatch and kernel parity reported".into())
}

/// Random small convolutions against the nested-loop oracle, `<= 1e-10`.
pub fn oracle_conv(n: usize, seed: u64) -> Outcome {
    let mut rng = Rng::new(seed ^ 0xc0);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let k = [1, 3, 5][rng.below(3)];
        let stride = 1 + rng.below(2);
        let pad = rng.below(k / 2 + 1);
        let (cin, cout) = (1 + rng.below(4), 1 + rng.below(4));
        let (h, w) = (k + rng.below(6), k + rng.below(6));
        let x = random(&[cin, h, w], &mut rng);
        let wt = random(&[cout, cin, k, k], &mut rng);
        let b = random(&[cout], &mut rng);
        let got = ops::conv2d(&x, &wt, &b, stride, pad).map_err(err)?;
        worst = worst.max(within("conv2d", &got, &oracle::conv2d(&x, &wt, &b, stride, pad), 1e-10)?);
    }
    Ok(format!("{n} instances, max diff {worst:.1e}"))
}

pub fn oracle_matmul(n: usize, seed: u64) -> Outcome {
    let mut rng = Rng::new(seed ^ 0x3a);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (m, k, p) = (1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8));
        let a = random(&[m, k], &mut rng);
        let b = random(&[k, p], &mut rng);
        let got = ops::matmul(&a, &b).map_err(err)?;
        worst = worst.max(within("matmul", &got, &oracle::matmul(&a, &b), 1e-10)?);
    }
    Ok(format!("{n} instances, max diff {worst:.1e}"))
}

fn pool_examples(_: &SuiteConfig) -> Outcome {
    let x = Tensor::new(&[3, 1, 1], vec![-1.0, 0.0, 3.0]).map_err(err)?;
    let (mx, _) = ops::channel_max(&x).map_err(err)?;
    let avg = ops::channel_avg(&x).map_err(err)?;
    ensure(mx.item() == 3.0 && (avg.item() - 2.0 / 3.0).abs() < 1e-15, || format!("max {mx:?} avg {avg:?}"))?;
    let k = Tensor::full(&[4, 2, 3], 0.7);
    ensure(ops::channel_max(&k).map_err(err)?.0 == Tensor::full(&[1, 2, 3], 0.7), || "constant max".into())?;
    ensure(ops::channel_avg(&k).map_err(err)?.max_abs_diff(&Tensor::full(&[1, 2, 3], 0.7)) < 1e-15, || {
        "constant avg".into()
    })?;
    Ok("(-1,0,3) -> max 3, avg 2/3".into())
}

fn pool_oracle(c: &SuiteConfig) -> Outcome {
    let x = random(&[7, 4, 4], &mut Rng::new(c.seed ^ 3));
    ensure(ops::channel_max(&x).map_err(err)?.0 == oracle::channel_max(&x), || "max differs".into())?;
    within("avg", &ops::channel_avg(&x).map_err(err)?, &oracle::channel_avg(&x), 1e-15)?;
    Ok("[7,4,4] max exact, avg within 1e-15".into())
}

fn pool_avg_times_channels(c: &SuiteConfig) -> Outcome {
    let x = random(&[9, 5, 5], &mut Rng::new(c.seed ^ 4));
    let avg = ops::channel_avg(&x).map_err(err)?;
    let sum = Tensor::from_fn(&[1, 5, 5], |p| (0..9).map(|ch| x.data()[ch * 25 + p]).sum());
    within("avg*C", &avg.map(|v| v * 9.0), &sum, 1e-12)?;
    Ok("avg * C == channel sum within 1e-12".into())
}

fn resize_identity_constant(c: &SuiteConfig) -> Outcome {
    let x = random(&[2, 5, 7], &mut Rng::new(c.seed));
    ensure(ops::resize_bilinear(&x, 5, 7).map_err(err)? == x, || "same-size resize changed x".into())?;
    let k = ops::resize_bilinear(&Tensor::full(&[1, 3, 4], 0.25), 10, 7).map_err(err)?;
    within("constant", &k, &Tensor::full(&[1, 10, 7], 0.25), 1e-15)?;
    Ok("identity at equal size, constants preserved".into())
}

fn resize_oracle(c: &SuiteConfig) -> Outcome {
    let x = Tensor::new(&[1, 2, 2], vec![0.0, 2.0, 0.0, 2.0]).map_err(err)?;
    let y = ops::resize_bilinear(&x, 2, 4).map_err(err)?;
    ensure(y.data() == [0.0, 0.5, 1.5, 2.0, 0.0, 0.5, 1.5, 2.0], || format!("[[0,2],[0,2]] -> {y:?}"))?;
    let mut rng = Rng::new(c.seed ^ 5);
    for _ in 0..10 {
        let x = random(&[2, 1 + rng.below(9), 1 + rng.below(9)], &mut rng);
        let (ho, wo) = (1 + rng.below(20), 1 + rng.below(20));
        within("resize", &ops::resize_bilinear(&x, ho, wo).map_err(err)?, &oracle::resize_bilinear(&x, ho, wo), 1e-12)?;
    }
    Ok("hand example and 10 random sizes".into())
}

fn tape_sum_gradient(c: &SuiteConfig) -> Outcome {
    let tape = Tape::new();
    let x = tape.leaf(random(&[2, 3, 4], &mut Rng::new(c.seed)));
    let g = tape.backward(&tape.sum(&x)).map_err(err)?;
    ensure(g.get_or_zeros(&x).data().iter().all(|&v| v == 1.0), || "not all ones".into())?;
    Ok("d sum(x) / dx = 1".into())
}

fn tape_non_scalar(_: &SuiteConfig) -> Outcome {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[2, 2]));
    ensure(tape.backward(&x).is_err(), || "backward accepted a [2,2] loss".into())?;
    Ok("rejected".into())
}

// ---- objective ----

fn loss_identities(_: &SuiteConfig) -> Outcome {
    let g = Tensor::from_fn(&[1, 8, 8], |i| ((i / 8 + i % 8) % 3 == 0) as u8 as f64);
    let half = Tensor::full(&[1, 8, 8], 0.5);
    let bce_half = bce_loss(&half, &g).map_err(err)?;
    ensure((bce_half - std::f64::consts::LN_2).abs() <= 1e-9, || format!("bce(0.5) = {bce_half}"))?;
    let perfect = bce_loss(&g, &g).map_err(err)?;
    ensure(perfect <= 1e-6, || format!("bce perfect = {perfect}"))?;
    let iou_perfect = iou_loss(&g, &g).map_err(err)?;
    ensure(iou_perfect <= 1e-7, || format!("iou perfect = {iou_perfect}"))?;
    let iou_disjoint = iou_loss(&Tensor::ones(&[1, 8, 8]), &Tensor::zeros(&[1, 8, 8])).map_err(err)?;
    ensure((iou_disjoint - 1.0).abs() <= 1e-7, || format!("iou disjoint = {iou_disjoint}"))?;
    let fm_perfect = fm_loss(&g, &g, BETA2).map_err(err)?;
    ensure(fm_perfect <= 1e-7, || format!("fm perfect = {fm_perfect}"))?;
    let fm_zero = fm_loss(&Tensor::zeros(&[1, 8, 8]), &Tensor::ones(&[1, 8, 8]), BETA2).map_err(err)?;
    ensure(fm_zero == 1.0, || format!("fm(0, 1) = {fm_zero}"))?;
    Ok(format!(
        "bce(0.5) - ln2 = {:.1e}, iou disjoint {iou_disjoint}, fm perfect {fm_perfect:.1e}",
        bce_half - std::f64::consts::LN_2
    ))
}

pub fn oracle_losses(n: usize, seed: u64) -> Outcome {
    let mut rng = Rng::new(seed ^ 0x10);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let shape = [1, 1 + rng.below(9), 1 + rng.below(9)];
        let s = soft_map(&shape, &mut rng);
        let g = if rng.below(2) == 0 { binary_map(&shape, &mut rng) } else { soft_map(&shape, &mut rng) };
        for (name, got, want) in [
            ("bce", bce_loss(&s, &g).map_err(err)?, oracle::bce(&s, &g)),
            ("iou", iou_loss(&s, &g).map_err(err)?, oracle::iou(&s, &g)),
            ("fm", fm_loss(&s, &g, BETA2).map_err(err)?, oracle::fm(&s, &g, BETA2)),
        ] {
            let d = (got - want).abs();
            ensure(d <= 1e-12, || format!("{name}: {got} vs {want}"))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("{n} instances x 3 losses, max diff {worst:.1e}"))
}

fn loss_total_perfect(_: &SuiteConfig) -> Outcome {
    let g = Tensor::from_fn(&[1, 12, 12], |i| ((i / 12) > 5) as u8 as f64);
    let preds = vec![g.clone(); 5];
    let total = total_loss(&[(&preds, &g)]).map_err(err)?;
    ensure(total.total <= 5e-6, || format!("total {}", total.total))?;
    ensure(total.total == total.bce + total.iou + total.fm, || "breakdown does not add up".into())?;
    Ok(format!("five perfect heads: total {:.2e}", total.total))
}

fn loss_batch_average(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x11);
    let g = binary_map(&[1, 6, 6], &mut rng);
    let preds: Vec<Tensor> = (0..5).map(|_| soft_map(&[1, 6, 6], &mut rng)).collect();
    let one = total_loss(&[(&preds, &g)]).map_err(err)?;
    let two = total_loss(&[(&preds, &g), (&preds, &g)]).map_err(err)?;
    ensure((one.total - two.total).abs() <= 1e-12, || format!("{} vs {}", one.total, two.total))?;
    ensure(total_loss(&[]).is_err(), || "empty batch accepted".into())?;
    let g2 = binary_map(&[1, 6, 6], &mut rng);
    let preds2: Vec<Tensor> = (0..5).map(|_| soft_map(&[1, 6, 6], &mut rng)).collect();
    let pair = total_loss(&[(&preds, &g), (&preds2, &g2)]).map_err(err)?;
    let mut by_hand = 0.0;
    for (ps, gt) in [(&preds, &g), (&preds2, &g2)] {
        for s in ps.iter() {
            by_hand += oracle::bce(s, gt) + oracle::iou(s, gt) + oracle::fm(s, gt, BETA2);
        }
    }
    by_hand /= 2.0;
    ensure((pair.total - by_hand).abs() <= 1e-10, || format!("{} vs loop {}", pair.total, by_hand))?;
    Ok("duplicate batch equals single item; random pair matches loop".into())
}

/// `mae(g,g) = 0`, `F(g,g) = 1` for `n` random masks; complementary maps
/// have MAE exactly 1.
pub fn metric_sanity(n: usize, seed: u64) -> Outcome {
    let mut rng = Rng::new(seed ^ 0x12);
    for i in 0..n {
        let shape = [1, 2 + rng.below(15), 2 + rng.below(15)];
        let mut g = binary_map(&shape, &mut rng);
        if g.sum() == 0.0 {
            g.data_mut()[0] = 1.0;
        }
        let r = f_measure(&g, &g, BETA2).map_err(err)?;
        ensure(r.mae == 0.0 && r.f_beta == 1.0, || format!("mask {i}: mae {} F {}", r.mae, r.f_beta))?;
        let inv = g.map(|v| 1.0 - v);
        let m = mae_metric(&inv, &g).map_err(err)?;
        ensure(m == 1.0, || format!("mask {i}: complement mae {m}"))?;
    }
    let black = f_measure(&Tensor::zeros(&[1, 4, 4]), &Tensor::ones(&[1, 4, 4]), BETA2).map_err(err)?;
    ensure(black.mae == 1.0 && black.f_beta == 0.0, || format!("black vs white {black:?}"))?;
    Ok(format!("{n} masks"))
}

fn metric_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x13);
    for _ in 0..20 {
        let shape = [1, 1 + rng.below(9), 1 + rng.below(9)];
        let s = soft_map(&shape, &mut rng);
        let g = binary_map(&shape, &mut rng);
        let r = f_measure(&s, &g, BETA2).map_err(err)?;
        ensure((r.mae - oracle::mae(&s, &g)).abs() <= 1e-12, || "mae differs".into())?;
        ensure((r.f_beta - oracle::f_measure(&s, &g, BETA2)).abs() <= 1e-12, || "F differs".into())?;
        ensure(mae_metric(&s, &g).map_err(err)? == mae_metric(&g, &s).map_err(err)?, || "mae asymmetric".into())?;
    }
    Ok("20 random pairs".into())
}

fn rmsprop_zero_gradient(_: &SuiteConfig) -> Outcome {
    let mut opt = RmsProp::new(RmsConfig::default());
    let mut w = Tensor::from_fn(&[3, 3], |i| i as f64);
    let before = w.clone();
    opt.update("w", &mut w, &Tensor::zeros(&[3, 3])).map_err(err)?;
    ensure(w == before, || "weights moved".into())?;
    Ok("unchanged".into())
}

fn rmsprop_scalar_step(_: &SuiteConfig) -> Outcome {
    let mut opt = RmsProp::new(RmsConfig::default());
    let mut w = Tensor::scalar(1.0);
    opt.update("w", &mut w, &Tensor::scalar(1.0)).map_err(err)?;
    let expected = 0.9996837722497945;
    ensure(w.item() == expected, || format!("w' = {:.17}", w.item()))?;
    Ok(format!("w' = {expected}"))
}

fn rmsprop_quadratic(_: &SuiteConfig) -> Outcome {
    let mut opt = RmsProp::new(RmsConfig::default());
    let mut w = Tensor::scalar(1.0);
    let mut last = f64::INFINITY;
    for step in 0..100 {
        let loss = w.item() * w.item();
        ensure(loss < last, || format!("loss rose at step {step}"))?;
        last = loss;
        let g = Tensor::scalar(2.0 * w.item());
        opt.update("w", &mut w, &g).map_err(err)?;
    }
    Ok(format!("w^2 after 100 steps: {last:.6}"))
}

fn rmsprop_lr_zero(c: &SuiteConfig) -> Outcome {
    let mut opt = RmsProp::new(RmsConfig { lr: 0.0, ..RmsConfig::default() });
    let mut rng = Rng::new(c.seed);
    let mut w = random(&[4, 4], &mut rng);
    let before = w.clone();
    for _ in 0..3 {
        let g = random(&[4, 4], &mut rng);
        opt.update("w", &mut w, &g).map_err(err)?;
    }
    ensure(w == before, || "lr = 0 moved the weights".into())?;
    Ok("identity".into())
}

fn lr_schedule_values(_: &SuiteConfig) -> Outcome {
    for (epoch, want) in [(0, 1e-4), (29, 1e-4), (30, 7e-5), (41, 7e-5), (42, 4.9e-5)] {
        let got = lr_schedule(epoch);
        ensure((got - want).abs() <= 1e-18, || format!("epoch {epoch}: {got}"))?;
    }
    Ok("1e-4 until 29, 7e-5 at 30, 4.9e-5 at 42".into())
}

// ---- attention and modules ----

fn psa_zero(_: &SuiteConfig) -> Outcome {
    let p = PsaParams::new(4, &PSA_FACTORS);
    let tape = Tape::inference();
    let y = psa_forward(&tape, &tape.constant(Tensor::zeros(&[4, 12, 12])), &p).map_err(err)?;
    ensure(y.value().max_abs() == 0.0, || "nonzero output".into())?;
    Ok("zero in, zero out".into())
}

fn psa_averaging_identity(c: &SuiteConfig) -> Outcome {
    let mut p = PsaParams::new(3, &PSA_FACTORS);
    p.set_averaging_merge();
    let x = random(&[3, 12, 12], &mut Rng::new(c.seed));
    let tape = Tape::inference();
    let y = psa_forward(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("psa", y.value(), &x, 1e-14)?;
    Ok(format!("max diff {d:.1e}"))
}

fn psa_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x20);
    let mut p = PsaParams::new(4, &PSA_FACTORS);
    p.randomize(&mut rng, 0.5);
    let x = random(&[4, 12, 12], &mut rng);
    let tape = Tape::inference();
    let y = psa_forward(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("psa", y.value(), &oracle::psa(&x, &p), 1e-10)?;
    Ok(format!("[4,12,12], max diff {d:.1e}"))
}

fn pca_zero(_: &SuiteConfig) -> Outcome {
    let p = PcaParams::new(16, &[1, 2, 4]);
    let tape = Tape::inference();
    let y = pca_forward(&tape, &tape.constant(Tensor::zeros(&[16, 3, 3])), &p).map_err(err)?;
    ensure(y.value().max_abs() == 0.0, || "nonzero output".into())?;
    ensure(PcaParams::new(64, &[1, 2, 4]).grid == 8, || "C=64 does not give K=8".into())?;
    Ok("zero in, zero out; C=64 -> K=8".into())
}

fn pca_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x21);
    let mut p = PcaParams::new(16, &[1, 2]);
    p.randomize(&mut rng, 0.5);
    let x = random(&[16, 3, 3], &mut rng);
    let tape = Tape::inference();
    let y = pca_forward(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("pca", y.value(), &oracle::pca(&x, &p), 1e-10)?;
    Ok(format!("[16,3,3] K=4, max diff {d:.1e}"))
}

fn pca_pixel_count(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x22);
    let mut p = PcaParams::new(16, &[1, 2]);
    p.randomize(&mut rng, 0.5);
    let x = random(&[16, 2, 6], &mut rng);
    let y = x.clone().reshape(&[16, 3, 4]).map_err(err)?;
    let tape = Tape::inference();
    let a = pca_forward(&tape, &tape.constant(x), &p).map_err(err)?;
    let b = pca_forward(&tape, &tape.constant(y), &p).map_err(err)?;
    ensure(a.value().data() == b.value().data(), || "outputs differ".into())?;
    Ok("[16,2,6] and [16,3,4] agree".into())
}

fn mde_zero(_: &SuiteConfig) -> Outcome {
    let p = MdeParams::new(4, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
    let tape = Tape::inference();
    let y = mde_forward(&tape, &tape.constant(Tensor::zeros(&[4, 24, 24])), &p).map_err(err)?;
    ensure(y.value().max_abs() == 0.0, || "nonzero output".into())?;
    Ok("zero in, zero out".into())
}

fn mde_residual_skip(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x23);
    let mut p = MdeParams::new(4, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
    p.randomize(&mut rng, 0.3);
    for b in &mut p.branches {
        b.conv_a.set_identity();
        b.inner.weight.data_mut().fill(0.0);
        b.inner.bias.data_mut().fill(0.0);
        b.conv_b.bias.data_mut().fill(0.0);
    }
    let x = random(&[4, 24, 24], &mut rng);
    let tape = Tape::inference();
    for (i, b) in p.branches.iter().enumerate() {
        let f = mde_branch_detail(&tape, &tape.constant(x.clone()), b).map_err(err)?;
        ensure(f.value() == &x, || format!("branch {i} is not the identity"))?;
    }
    Ok("four branches reduce to x".into())
}

fn mde_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x24);
    let mut p = MdeParams::new(4, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
    p.randomize(&mut rng, 0.3);
    let x = random(&[4, 24, 24], &mut rng);
    let tape = Tape::inference();
    let y = mde_forward(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("mde", y.value(), &oracle::mde(&x, &p), 1e-10)?;
    Ok(format!("[4,24,24], max diff {d:.1e}"))
}

fn granular_cascade(c: &SuiteConfig) -> Outcome {
    let ch = 4;
    let mut p = GranularParams::new(ch, &GRANULAR_KERNELS);
    for conv in &mut p.convs {
        conv.set_identity();
    }
    let w = p.merge.weight.data_mut();
    for o in 0..ch {
        for g in 0..4 {
            w[o * 4 * ch + g * ch + o] = 0.25;
        }
    }
    let x = random(&[ch, 8, 8], &mut Rng::new(c.seed));
    let tape = Tape::inference();
    let y = granular_branch(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("granular", y.value(), &x.map(|v| 2.5 * v), 1e-14)?;
    let zero = GranularParams::new(ch, &GRANULAR_KERNELS);
    let z = granular_branch(&tape, &tape.constant(x), &zero).map_err(err)?;
    ensure(z.value().max_abs() == 0.0, || "zero params gave nonzero output".into())?;
    Ok(format!("identity cascade gives 2.5x (diff {d:.1e}); zero params give 0"))
}

fn granular_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x25);
    let mut p = GranularParams::new(4, &GRANULAR_KERNELS);
    p.randomize(&mut rng, 0.3);
    let x = random(&[4, 8, 8], &mut rng);
    let tape = Tape::inference();
    let y = granular_branch(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("granular", y.value(), &oracle::granular(&x, &p), 1e-10)?;
    Ok(format!("[4,8,8], max diff {d:.1e}"))
}

fn location_basis(_: &SuiteConfig) -> Outcome {
    let c = 5;
    let mut p = LocationParams::new(c);
    p.set_identity();
    let tape = Tape::inference();
    for j in 0..c {
        let e = Tensor::from_fn(&[c, 1, 1], |i| (i == j) as u8 as f64);
        let y = location_sensing(&tape, &tape.constant(e.clone()), &p).map_err(err)?;
        ensure(y.value() == &e, || format!("e_{j} not preserved"))?;
    }
    let y = location_sensing(&tape, &tape.constant(Tensor::zeros(&[c, 3, 3])), &p).map_err(err)?;
    ensure(y.value().max_abs() == 0.0, || "zero input gave nonzero output".into())?;
    Ok("e_j -> e_j for j < 5; zero -> zero".into())
}

/// Location sensing against the triple-loop oracle, `<= 1e-10`.
pub fn oracle_location(n: usize, seed: u64) -> Outcome {
    let mut rng = Rng::new(seed ^ 0x26);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let c = 1 + rng.below(5);
        let mut p = LocationParams::new(c);
        p.randomize(&mut rng, 0.5);
        let x = random(&[c, 1 + rng.below(5), 1 + rng.below(5)], &mut rng);
        let tape = Tape::inference();
        let y = location_sensing(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
        worst = worst.max(within("location", y.value(), &oracle::location_sensing(&x, &p), 1e-10)?);
    }
    Ok(format!("{n} instances, max diff {worst:.1e}"))
}

fn geometric_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x27);
    let mut p = GeometricParams::new(4, &GEOMETRIC_FACTORS);
    p.randomize(&mut rng, 0.3);
    let x = random(&[4, 8, 8], &mut rng);
    let tape = Tape::inference();
    let y = geometric_branch(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("geometric", y.value(), &oracle::geometric(&x, &p), 1e-10)?;
    let zero = GeometricParams::new(4, &GEOMETRIC_FACTORS);
    let tape = Tape::inference();
    let z = geometric_branch(&tape, &tape.constant(Tensor::zeros(&[4, 8, 8])), &zero).map_err(err)?;
    ensure(z.value().max_abs() == 0.0, || "zero input gave nonzero output".into())?;
    Ok(format!("[4,8,8], max diff {d:.1e}"))
}

fn interaction_half_gain(c: &SuiteConfig) -> Outcome {
    let p = InteractionParams { conv: ConvParams::new(8, 1, 1) };
    let mut rng = Rng::new(c.seed);
    let (fs, fd) = (random(&[4, 5, 5], &mut rng), random(&[4, 5, 5], &mut rng));
    let tape = Tape::inference();
    let r = geo_gran_interaction(&tape, &tape.constant(fs.clone()), &tape.constant(fd.clone()), &p).map_err(err)?;
    ensure(r.geometric.value() == &fs.map(|v| 1.5 * v), || "fs not scaled by 1.5".into())?;
    ensure(r.granular.value() == &fd.map(|v| 1.5 * v), || "fd not scaled by 1.5".into())?;
    Ok("W = 0.5 gives (1.5 fs, 1.5 fd)".into())
}

fn interaction_gain_symmetry(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x28);
    let mut p = InteractionParams { conv: ConvParams::new(8, 1, 1) };
    p.randomize(&mut rng, 1.0);
    let (fs, fd) = (random(&[4, 5, 5], &mut rng), random(&[4, 5, 5], &mut rng));
    let tape = Tape::inference();
    let r = geo_gran_interaction(&tape, &tape.constant(fs.clone()), &tape.constant(fd), &p).map_err(err)?;
    let w = r.weight.value();
    ensure(w.shape() == [1, 5, 5] && w.data().iter().all(|&v| v > 0.0 && v < 1.0), || "W outside (0,1)".into())?;
    let expected = Tensor::from_fn(fs.shape(), |i| fs.data()[i] * (1.0 + w.data()[i % 25]));
    ensure(r.geometric.value() == &expected, || "out != in * (1 + W)".into())?;
    let same = geo_gran_interaction(&tape, &tape.constant(fs.clone()), &tape.constant(fs), &p).map_err(err)?;
    ensure(same.geometric.value() == same.granular.value(), || "fs == fd gave different outputs".into())?;
    Ok("W in (0,1), out == in * (1 + W), symmetric".into())
}

fn interaction_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x29);
    let mut p = InteractionParams { conv: ConvParams::new(8, 1, 1) };
    p.randomize(&mut rng, 1.0);
    let (fs, fd) = (random(&[4, 6, 6], &mut rng), random(&[4, 6, 6], &mut rng));
    let tape = Tape::inference();
    let r = geo_gran_interaction(&tape, &tape.constant(fs.clone()), &tape.constant(fd.clone()), &p).map_err(err)?;
    let (a, b, _) = oracle::interaction(&fs, &fd, &p);
    let d = within("interaction", r.geometric.value(), &a, 1e-12)?.max(within("interaction", r.granular.value(), &b, 1e-12)?);
    Ok(format!("max diff {d:.1e}"))
}

fn dgc_zero(c: &SuiteConfig) -> Outcome {
    let p = DgcParams::new(4, &PSA_FACTORS, &[1, 2]);
    let tape = Tape::inference();
    let x = random(&[4, 24, 24], &mut Rng::new(c.seed));
    let y = dgc_forward(&tape, &tape.constant(x), &p).map_err(err)?;
    ensure(y.value().max_abs() == 0.0, || "nonzero output".into())?;
    Ok("zero params give zero output".into())
}

fn dgc_residual(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x2a);
    let mut p = DgcParams::new(4, &PSA_FACTORS, &[1, 2]);
    p.randomize(&mut rng, 0.2);
    let tape = Tape::inference();
    let t = dgc_forward_traced(&tape, &tape.constant(random(&[4, 24, 24], &mut rng)), &p).map_err(err)?;
    let diff = t.output.value().zip_map(t.refined.value(), |a, b| a - b).map_err(err)?;
    within("residual", &diff, t.fused.value(), 1e-12)?;
    Ok("output - refinement == fused feature".into())
}

fn dgc_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x2b);
    let mut p = DgcParams::new(4, &PSA_FACTORS, &[1, 2]);
    p.randomize(&mut rng, 0.2);
    let x = random(&[4, 24, 24], &mut rng);
    let tape = Tape::inference();
    let y = dgc_forward(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("dgc", y.value(), &oracle::dgc(&x, &p), 1e-9)?;
    Ok(format!("[4,24,24], max diff {d:.1e}"))
}

fn dsp_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x2c);
    let mut p = DspParams::new(4);
    p.randomize(&mut rng, 0.5);
    let x = random(&[4, 3, 3], &mut rng);
    let tape = Tape::inference();
    let y = dsp_forward(&tape, &tape.constant(x.clone()), &p).map_err(err)?;
    let d = within("dsp", y.value(), &oracle::dsp(&x, &p.sensing), 1e-10)?;
    Ok(format!("[4,3,3], max diff {d:.1e}"))
}

fn lgf_zero_gates(c: &SuiteConfig) -> Outcome {
    let p = LgfParams::new(4);
    let mut rng = Rng::new(c.seed);
    let (low, high) = (random(&[4, 8, 8], &mut rng), random(&[4, 4, 4], &mut rng));
    let up = ops::resize_bilinear(&high, 8, 8).map_err(err)?;
    let tape = Tape::inference();
    let y = lgf_forward(&tape, &tape.constant(low.clone()), &tape.constant(high.clone()), &p).map_err(err)?;
    let expected = Tensor::from_fn(&[4, 8, 8], |i| up.data()[i] * low.data()[i] + up.data()[i]);
    ensure(y.value() == &expected, || "zero gates: output != up * low + up".into())?;
    let z = lgf_forward(&tape, &tape.constant(Tensor::zeros(&[4, 8, 8])), &tape.constant(high.clone()), &p)
        .map_err(err)?;
    ensure(z.value() == &up, || "low = 0: output != up".into())?;
    let o = lgf_forward(&tape, &tape.constant(Tensor::ones(&[4, 8, 8])), &tape.constant(high), &p).map_err(err)?;
    ensure(o.value() == &up.map(|v| 2.0 * v), || "low = 1: output != 2 up".into())?;
    Ok("up*low+up, low=0 -> up, low=1 -> 2 up".into())
}

fn lgf_oracle(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x2d);
    let mut p = LgfParams::new(4);
    p.randomize(&mut rng, 0.5);
    let (low, high) = (random(&[4, 8, 8], &mut rng), random(&[4, 4, 4], &mut rng));
    let tape = Tape::inference();
    let y = lgf_forward(&tape, &tape.constant(low.clone()), &tape.constant(high.clone()), &p).map_err(err)?;
    let d = within("lgf", y.value(), &oracle::lgf(&low, &high, &p), 1e-10)?;
    Ok(format!("([4,8,8],[4,4,4]), max diff {d:.1e}"))
}

fn decode_resolutions(c: &SuiteConfig) -> Outcome {
    let mut rng = Rng::new(c.seed ^ 0x2e);
    let mut lgf: Vec<LgfParams> = (0..4).map(|_| LgfParams::new(4)).collect();
    lgf.randomize(&mut rng, 0.2);
    let feats: Vec<Tensor> = [48, 48, 24, 12, 6].iter().map(|&s| random(&[4, s, s], &mut rng)).collect();
    let tape = Tape::inference();
    let vars: Vec<_> = feats.iter().map(|f| tape.constant(f.clone())).collect();
    let d = decode(&tape, &vars, &lgf).map_err(err)?;
    let sizes: Vec<usize> = d.iter().map(|v| v.shape()[1]).collect();
    ensure(sizes == [48, 48, 24, 12, 6] && d.iter().all(|v| v.shape()[0] == 4), || format!("sizes {sizes:?}"))?;
    let want = oracle::decode(&feats, &lgf);
    for (got, want) in d.iter().zip(&want) {
        within("decode", got.value(), want, 1e-10)?;
    }
    let zeros: Vec<_> = feats.iter().map(|f| tape.constant(Tensor::zeros(f.shape()))).collect();
    let zero_params: Vec<LgfParams> = (0..4).map(|_| LgfParams::new(4)).collect();
    let dz = decode(&tape, &zeros, &zero_params).map_err(err)?;
    ensure(dz.iter().all(|v| v.value().max_abs() == 0.0), || "zero decode nonzero".into())?;
    Ok("48,48,24,12,6 with C=4; matches oracle".into())
}

// ---- weights and network ----

fn weights_round_trip(c: &SuiteConfig) -> Outcome {
    let net = G2hfNet::seeded(NetConfig::toy(), c.seed).map_err(err)?;
    let w = net.to_weights();
    let back = ModelWeights::from_bytes(&w.to_bytes()).map_err(err)?;
    ensure(back == w, || "round trip changed a tensor".into())?;
    Ok(format!("{} tensors", w.len()))
}

/// Codes of three crafted corrupt files: bad magic, wrong version,
/// truncated data.
pub fn weight_fixture_codes() -> std::result::Result<[u32; 3], String> {
    let mut w = ModelWeights::default();
    w.insert("a.weight".into(), Tensor::from_fn(&[2, 1, 3, 3], |i| i as f64 / 8.0));
    let good = w.to_bytes();
    let mut magic = good.clone();
    magic[..4].copy_from_slice(b"G2HX");
    let mut version = good.clone();
    version[4..8].copy_from_slice(&2u32.to_le_bytes());
    let truncated = &good[..good.len() - 5];
    let code = |b: &[u8]| ModelWeights::from_bytes(b).err().map(|e| e.code()).ok_or("corrupt file accepted");
    let codes = [code(&magic)?, code(&version)?, code(truncated)?];
    ensure(codes == [10, 11, 12], || format!("codes {codes:?}"))?;
    Ok(codes)
}

fn weights_unknown_name(c: &SuiteConfig) -> Outcome {
    let mut net = G2hfNet::seeded(NetConfig::toy(), c.seed).map_err(err)?;
    let mut w = net.to_weights();
    let t = w.remove("dsp.sensing.query.bias").ok_or("missing tensor")?;
    w.insert("dsp.sensing.qeury.bias".into(), t);
    match net.load_weights(&w) {
        Err(e @ WeightError::UnknownName(_)) => Ok(format!("{e} (code {})", e.code())),
        other => Err(format!("expected unknown name, got {other:?}")),
    }
}

fn net_pyramid(c: &SuiteConfig) -> Outcome {
    let net = G2hfNet::seeded(NetConfig::toy(), c.seed).map_err(err)?;
    let tape = Tape::inference();
    let p = net.encode(&tape, &tape.constant(Tensor::full(&[3, 192, 192], 0.5))).map_err(err)?;
    let sizes: Vec<usize> = p.levels.iter().map(|f| f.shape()[1]).collect();
    ensure(sizes == [48, 48, 24, 12, 6], || format!("levels {sizes:?}"))?;
    let e = NetConfig::toy().check_input(100, 100).unwrap_err();
    ensure(e.to_string().contains("level 1"), || format!("100x100: {e}"))?;
    Ok("192 -> 48,48,24,12,6; 100x100 rejected at level 1".into())
}

fn net_init(_: &SuiteConfig) -> Outcome {
    let config = NetConfig::toy();
    let a = crate::net::init_weights(&config, 1).map_err(err)?.to_bytes();
    let b = crate::net::init_weights(&config, 1).map_err(err)?.to_bytes();
    let c = crate::net::init_weights(&config, 2).map_err(err)?.to_bytes();
    ensure(a == b, || "same seed gave different bytes".into())?;
    ensure(a != c, || "different seeds gave identical weights".into())?;
    // 64 -> 64 3x3 conv: 36864 samples of U(-b, b), sd b / sqrt(3)
    let net = G2hfNet::seeded(NetConfig::default(), 3).map_err(err)?;
    let w = &net.head.mde1.branches[1].inner.weight;
    let bound = 1.0 / ((64 * 9) as f64).sqrt();
    let se = bound / 3f64.sqrt() / (w.len() as f64).sqrt();
    ensure(w.mean().abs() < 3.0 * se, || format!("mean {} vs 3 se {}", w.mean(), 3.0 * se))?;
    ensure(w.max_abs() < bound, || "sample outside (-b, b)".into())?;
    Ok(format!("deterministic; mean {:.2e} within 3 se {:.2e}", w.mean(), 3.0 * se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        let results = run(None, &SuiteConfig::default(), |_| {});
        assert!(results.len() >= 30);
        let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(CheckResult::line).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn filter_selects_shuffle_checks() {
        let names: Vec<&str> = checks().iter().map(|c| c.name).filter(|n| n.contains("unshuffle")).collect();
        assert!(names.len() >= 5);
        assert!(names.iter().all(|n| n.starts_with("unshuffle.")));
    }

    #[test]
    fn injected_fault_is_caught() {
        let cfg = SuiteConfig { seed: 0, fault: Some(Fault { op: "pixel_unshuffle", scale: 1.5 }) };
        let results = run(Some("unshuffle.gradient"), &cfg, |_| {});
        assert_eq!(results.len(), 1);
        assert!(!results[0].passed());
    }
}
