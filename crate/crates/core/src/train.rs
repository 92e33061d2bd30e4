//! Single-image overfitting loop and the synthetic training scene.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::{Backbone, G2hfNet};
use crate::objective::{f_measure, EvalResult, HeadLoss, LossBreakdown, RmsConfig, RmsProp, BETA2};
use crate::params::Module;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A `size x size` RGB image with a centred bright square of side `size / 3`
/// on a darker textured background, and the square's binary mask.
pub fn synthetic_scene(size: usize, seed: u64) -> (Tensor, Tensor) {
    let side = size / 3;
    let lo = (size - side) / 2;
    let inside = |y: usize, x: usize| (lo..lo + side).contains(&y) && (lo..lo + side).contains(&x);
    let mut rng = Rng::new(seed);
    let background = [0.25, 0.35, 0.3];
    let object = [0.85, 0.6, 0.3];
    let mut image = Tensor::zeros(&[3, size, size]);
    let data = image.data_mut();
    for y in 0..size {
        for x in 0..size {
            let base = if inside(y, x) { object } else { background };
            let noise = rng.uniform(-0.08, 0.08);
            for (c, b) in base.iter().enumerate() {
                data[(c * size + y) * size + x] = (b + noise).clamp(0.0, 1.0);
            }
        }
    }
    let mask = Tensor::from_fn(&[1, size, size], |i| if inside(i / size, i % size) { 1.0 } else { 0.0 });
    (image, mask)
}

/// Loss terms of one training step, measured before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub bce: f64,
    pub iou: f64,
    pub fm: f64,
    pub total: f64,
}

impl StepLog {
    pub const CSV_HEADER: &'static str = "step,bce,iou,fm,total";

    pub fn csv(&self) -> String {
        format!("{},{:.9},{:.9},{:.9},{:.9}", self.step, self.bce, self.iou, self.fm, self.total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    /// Loss of the trained weights.
    pub final_loss: LossBreakdown,
    /// Metrics of the primary prediction of the trained weights.
    pub eval: EvalResult,
}

/// Records the five-head loss for one image on `tape`.
pub fn supervised_loss<'p>(tape: &Tape<'p>, maps: &[Var<'p>], mask: &Var<'p>) -> Result<Var<'p>> {
    let mut total: Option<Var<'p>> = None;
    for s in maps {
        let terms = [tape.bce_loss(s, mask)?, tape.iou_loss(s, mask)?, tape.fm_loss(s, mask, BETA2)?];
        for t in terms {
            total = Some(match total {
                Some(acc) => tape.add(&acc, &t)?,
                None => t,
            });
        }
    }
    total.ok_or(Error::EmptyBatch)
}

/// Gradients of the five-head loss with respect to every named parameter.
pub fn loss_and_grads<B: Backbone>(
    net: &G2hfNet<B>,
    image: &Tensor,
    mask: &Tensor,
) -> Result<(LossBreakdown, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let maps = net.forward_on(&tape, &tape.constant(image.clone()))?;
    let mask_var = tape.constant(mask.clone());
    let loss = supervised_loss(&tape, &maps, &mask_var)?;
    let breakdown = breakdown(&maps.iter().map(Var::to_tensor).collect::<Vec<_>>(), mask)?;
    let grads = tape.backward(&loss)?;
    let mut named = BTreeMap::new();
    net.visit("", &mut |name, t| {
        if let Some(g) = grads.param(&tape, t) {
            named.insert(name.to_owned(), g.clone());
        }
    });
    Ok((breakdown, named))
}

fn breakdown(maps: &[Tensor], mask: &Tensor) -> Result<LossBreakdown> {
    let heads = maps.iter().map(|s| HeadLoss::compute(s, mask)).collect::<Result<Vec<_>>>()?;
    LossBreakdown::from_heads(&[heads])
}

/// Overfits `net` to one image for `steps` RMSprop steps, calling `log` with
/// the loss of every step.
pub fn train_single<B: Backbone>(
    net: &mut G2hfNet<B>,
    image: &Tensor,
    mask: &Tensor,
    steps: usize,
    config: RmsConfig,
    mut log: impl FnMut(&StepLog),
) -> Result<TrainReport> {
    let (_, h, w) = image.dims3()?;
    if mask.shape() != [1, h, w] {
        return Err(Error::shape("train mask", mask.shape(), &[1, h, w]));
    }
    let mut opt = RmsProp::new(config);
    for step in 0..steps {
        let (loss, grads) = loss_and_grads(net, image, mask)?;
        log(&StepLog { step, bce: loss.bce, iou: loss.iou, fm: loss.fm, total: loss.total });
        if !loss.total.is_finite() {
            return Err(Error::invalid("train", format!("loss became {} at step {step}", loss.total)));
        }
        let mut result = Ok(());
        net.visit_mut("", &mut |name, t| {
            if let (Ok(()), Some(g)) = (&result, grads.get(name)) {
                result = opt.update(name, t, g);
            }
        });
        result?;
        opt.state.steps += 1;
    }
    let out = net.forward(image)?;
    Ok(TrainReport {
        steps,
        final_loss: breakdown(&out.maps, mask)?,
        eval: f_measure(out.primary(), mask, BETA2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    #[test]
    fn scene_mask_is_centred_square() {
        let (image, mask) = synthetic_scene(192, 1);
        assert_eq!(image.shape(), [3, 192, 192]);
        assert_eq!(mask.sum(), 64.0 * 64.0);
        assert_eq!(mask.at3(0, 64, 64), 1.0);
        assert_eq!(mask.at3(0, 63, 100), 0.0);
        assert_eq!(mask.at3(0, 127, 127), 1.0);
        assert_eq!(mask.at3(0, 128, 127), 0.0);
    }

    #[test]
    fn a_few_steps_reduce_the_loss() {
        let mut net = G2hfNet::seeded(NetConfig::toy(), 7).unwrap();
        let (image, mask) = synthetic_scene(192, 7);
        let mut losses = Vec::new();
        train_single(&mut net, &image, &mask, 5, RmsConfig::default(), |s| losses.push(s.total)).unwrap();
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(losses[4] < losses[0], "{losses:?}");
    }
}
