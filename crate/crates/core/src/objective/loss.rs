//! Hybrid saliency loss: binary cross-entropy, soft IoU and soft F-measure.
//!
//! BCE is averaged over pixels so that its scale matches the unit-range IoU
//! and F-measure terms. IoU and F-measure use soft (differentiable) counts.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clamp applied to predictions inside the logarithms of BCE.
pub const BCE_EPS: f64 = 1e-7;
/// Denominator guard for the IoU and F-measure ratios.
pub const RATIO_EPS: f64 = 1e-8;
/// β² weighting precision against recall.
pub const BETA2: f64 = 0.3;

fn check(s: &Tensor, g: &Tensor, op: &'static str) -> Result<()> {
    if s.shape() != g.shape() {
        return Err(Error::shape(op, s.shape(), g.shape()));
    }
    if s.is_empty() {
        return Err(Error::invalid(op, "empty prediction"));
    }
    Ok(())
}

fn clamp(s: f64) -> f64 {
    s.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

pub fn bce(s: &Tensor, g: &Tensor) -> Result<f64> {
    check(s, g, "bce_loss")?;
    let total: f64 = s
        .data()
        .iter()
        .zip(g.data())
        .map(|(&s, &g)| {
            let s = clamp(s);
            -(g * s.ln() + (1.0 - g) * (1.0 - s).ln())
        })
        .sum();
    Ok(total / s.len() as f64)
}

/// `d bce / d s`; zero where the clamp is active.
pub fn bce_grad(s: &Tensor, g: &Tensor) -> Tensor {
    let n = s.len() as f64;
    Tensor::from_fn(s.shape(), |i| {
        let (s, g) = (s.data()[i], g.data()[i]);
        if s <= BCE_EPS || s >= 1.0 - BCE_EPS {
            0.0
        } else {
            -(g / s - (1.0 - g) / (1.0 - s)) / n
        }
    })
}

fn overlap(s: &Tensor, g: &Tensor) -> (f64, f64) {
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&s, &g) in s.data().iter().zip(g.data()) {
        inter += s * g;
        union += s + g - s * g;
    }
    (inter, union)
}

pub fn iou(s: &Tensor, g: &Tensor) -> Result<f64> {
    check(s, g, "iou_loss")?;
    if s.data().iter().chain(g.data()).all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let (inter, union) = overlap(s, g);
    Ok(1.0 - inter / (union + RATIO_EPS))
}

pub fn iou_grad(s: &Tensor, g: &Tensor) -> Tensor {
    let (inter, union) = overlap(s, g);
    let u = union + RATIO_EPS;
    Tensor::from_fn(s.shape(), |i| {
        let g = g.data()[i];
        -(g * u - inter * (1.0 - g)) / (u * u)
    })
}

/// Soft `(TP, FP, FN)`.
fn soft_counts(s: &Tensor, g: &Tensor) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &g) in s.data().iter().zip(g.data()) {
        tp += s * g;
        fp += s * (1.0 - g);
        fn_ += (1.0 - s) * g;
    }
    (tp, fp, fn_)
}

pub fn fm(s: &Tensor, g: &Tensor, beta2: f64) -> Result<f64> {
    check(s, g, "fm_loss")?;
    let (tp, fp, fn_) = soft_counts(s, g);
    let h = beta2 * (tp + fn_) + (tp + fp);
    Ok(1.0 - (1.0 + beta2) * tp / (h + RATIO_EPS))
}

pub fn fm_grad(s: &Tensor, g: &Tensor, beta2: f64) -> Tensor {
    let (tp, fp, fn_) = soft_counts(s, g);
    // d TP/ds = g and d H/ds = 1 for every pixel.
    let h = beta2 * (tp + fn_) + (tp + fp) + RATIO_EPS;
    Tensor::from_fn(s.shape(), |i| {
        let g = g.data()[i];
        -(1.0 + beta2) * (g * h - tp) / (h * h)
    })
}

pub fn bce_loss(s: &Tensor, g: &Tensor) -> Result<f64> {
    bce(s, g)
}

pub fn iou_loss(s: &Tensor, g: &Tensor) -> Result<f64> {
    iou(s, g)
}

pub fn fm_loss(s: &Tensor, g: &Tensor, beta2: f64) -> Result<f64> {
    fm(s, g, beta2)
}

/// The three loss terms of one supervised prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeadLoss {
    pub bce: f64,
    pub iou: f64,
    pub fm: f64,
    pub total: f64,
}

impl HeadLoss {
    pub fn new(bce: f64, iou: f64, fm: f64) -> Self {
        Self { bce, iou, fm, total: bce + iou + fm }
    }

    pub fn compute(s: &Tensor, g: &Tensor) -> Result<Self> {
        Ok(Self::new(bce(s, g)?, iou(s, g)?, fm(s, g, BETA2)?))
    }
}

/// Loss terms summed over the supervised heads and averaged over the batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    /// Per-head terms, batch-averaged.
    pub heads: Vec<HeadLoss>,
    pub bce: f64,
    pub iou: f64,
    pub fm: f64,
    /// Always `bce + iou + fm`.
    pub total: f64,
}

impl LossBreakdown {
    /// Averages per-image head losses; `per_image[n][h]` is image `n`, head `h`.
    pub fn from_heads(per_image: &[Vec<HeadLoss>]) -> Result<Self> {
        let n = per_image.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let heads_per = per_image[0].len();
        let mut heads = vec![HeadLoss::default(); heads_per];
        for item in per_image {
            if item.len() != heads_per {
                return Err(Error::invalid("total_loss", "images have different head counts"));
            }
            for (acc, h) in heads.iter_mut().zip(item) {
                acc.bce += h.bce;
                acc.iou += h.iou;
                acc.fm += h.fm;
            }
        }
        let inv = 1.0 / n as f64;
        let heads: Vec<HeadLoss> = heads.iter().map(|h| HeadLoss::new(h.bce * inv, h.iou * inv, h.fm * inv)).collect();
        let bce = heads.iter().map(|h| h.bce).sum::<f64>();
        let iou = heads.iter().map(|h| h.iou).sum::<f64>();
        let fm = heads.iter().map(|h| h.fm).sum::<f64>();
        Ok(Self { heads, bce, iou, fm, total: bce + iou + fm })
    }
}

/// Batch loss: for each image, the three terms summed over all predictions,
/// then averaged over the batch.
pub fn total_loss(batch: &[(&[Tensor], &Tensor)]) -> Result<LossBreakdown> {
    let per_image = batch
        .iter()
        .map(|(preds, gt)| preds.iter().map(|s| HeadLoss::compute(s, gt)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    LossBreakdown::from_heads(&per_image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> Tensor {
        Tensor::new(&[1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn bce_of_half_is_ln2() {
        let s = Tensor::full(&[1, 4, 4], 0.5);
        let g = Tensor::from_fn(&[1, 4, 4], |i| (i % 2) as f64);
        assert!((bce(&s, &g).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let g = map(&[0.0, 1.0, 1.0, 0.0]);
        assert!(bce(&g, &g).unwrap() <= 1e-6);
        assert!(iou(&g, &g).unwrap() <= 1e-7);
        assert!(fm(&g, &g, BETA2).unwrap() <= 1e-7);
    }

    #[test]
    fn disjoint_maps() {
        let s = map(&[1.0; 4]);
        let g = map(&[0.0; 4]);
        assert!((iou(&s, &g).unwrap() - 1.0).abs() <= 1e-7);
        assert!((fm(&g, &s, BETA2).unwrap() - 1.0).abs() <= 1e-7);
        assert_eq!(iou(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(bce(&map(&[0.5]), &map(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert_eq!(total_loss(&[]), Err(Error::EmptyBatch));
    }

    #[test]
    fn breakdown_total_is_sum_of_terms() {
        let s = map(&[0.2, 0.7, 0.9, 0.1]);
        let g = map(&[0.0, 1.0, 1.0, 0.0]);
        let preds = vec![s.clone(), s.map(|v| v * 0.5)];
        let b = total_loss(&[(&preds, &g)]).unwrap();
        assert_eq!(b.total, b.bce + b.iou + b.fm);
        assert_eq!(b.heads.len(), 2);
    }
}
