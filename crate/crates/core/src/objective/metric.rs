//! Evaluation metrics: mean absolute error and adaptive-threshold F-measure.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub mae: f64,
    pub f_beta: f64,
    /// Binarization threshold applied to the prediction.
    pub threshold: f64,
}

pub fn mae_metric(s: &Tensor, g: &Tensor) -> Result<f64> {
    if s.shape() != g.shape() {
        return Err(Error::shape("mae", s.shape(), g.shape()));
    }
    let sum: f64 = s.data().iter().zip(g.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / s.len() as f64)
}

/// F-measure after binarizing `s` at `min(1, 2 * mean(s))`.
///
/// A pixel is predicted salient when `s >= t` and `s > 0`, so an all-zero
/// map predicts nothing. Undefined precision or recall count as zero.
pub fn f_measure(s: &Tensor, g: &Tensor, beta2: f64) -> Result<EvalResult> {
    let mae = mae_metric(s, g)?;
    let threshold = (2.0 * s.mean()).min(1.0);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &g) in s.data().iter().zip(g.data()) {
        let pred = s > 0.0 && s >= threshold;
        let truth = g >= 0.5;
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let denom = beta2 * precision + recall;
    let f_beta = if denom == 0.0 { 0.0 } else { (1.0 + beta2) * precision * recall / denom };
    Ok(EvalResult { mae, f_beta, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::BETA2;

    #[test]
    fn identical_maps() {
        let g = Tensor::from_fn(&[1, 4, 4], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
        let r = f_measure(&g, &g, BETA2).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.f_beta, 1.0);
    }

    #[test]
    fn mostly_foreground_mask_still_scores_one() {
        let g = Tensor::from_fn(&[1, 4, 4], |i| if i == 0 { 0.0 } else { 1.0 });
        assert_eq!(f_measure(&g, &g, BETA2).unwrap().f_beta, 1.0);
    }

    #[test]
    fn black_prediction_against_white_truth() {
        let s = Tensor::zeros(&[1, 3, 3]);
        let g = Tensor::ones(&[1, 3, 3]);
        let r = f_measure(&s, &g, BETA2).unwrap();
        assert_eq!(r.mae, 1.0);
        assert_eq!(r.f_beta, 0.0);
    }
}
