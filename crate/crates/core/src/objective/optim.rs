//! RMSprop with a momentum buffer, and the step learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsConfig {
    pub lr: f64,
    /// Smoothing constant of the squared-gradient average.
    pub alpha: f64,
    pub momentum: f64,
    pub eps: f64,
}

impl Default for RmsConfig {
    fn default() -> Self {
        Self { lr: 1e-4, alpha: 0.9, momentum: 0.9, eps: 1e-8 }
    }
}

/// Per-parameter accumulators, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RmsState {
    pub square_avg: BTreeMap<String, Tensor>,
    pub momentum: BTreeMap<String, Tensor>,
    pub steps: u64,
}

/// ```text
/// acc <- alpha * acc + (1 - alpha) * g^2
/// m   <- momentum * m + g / sqrt(acc + eps)
/// w   <- w - lr * m
/// ```
#[derive(Clone, Debug, Default)]
pub struct RmsProp {
    pub config: RmsConfig,
    pub state: RmsState,
}

impl RmsProp {
    pub fn new(config: RmsConfig) -> Self {
        Self { config, state: RmsState::default() }
    }

    /// Updates one named parameter in place.
    pub fn update(&mut self, name: &str, w: &mut Tensor, g: &Tensor) -> Result<()> {
        if w.shape() != g.shape() {
            return Err(Error::shape("rmsprop", w.shape(), g.shape()));
        }
        let RmsConfig { lr, alpha, momentum, eps } = self.config;
        let acc = self.state.square_avg.entry(name.to_owned()).or_insert_with(|| Tensor::zeros(w.shape()));
        let mom = self.state.momentum.entry(name.to_owned()).or_insert_with(|| Tensor::zeros(w.shape()));
        if acc.shape() != w.shape() {
            return Err(Error::shape("rmsprop state", acc.shape(), w.shape()));
        }
        let it = w.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut().iter_mut().zip(mom.data_mut()));
        for ((w, &g), (a, m)) in it {
            *a = alpha * *a + (1.0 - alpha) * g * g;
            *m = momentum * *m + g / (*a + eps).sqrt();
            *w -= lr * *m;
        }
        Ok(())
    }

    /// One optimizer step over named parameters. Parameters without a
    /// gradient entry are left untouched.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor)>,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, w) in params {
            if let Some(g) = grads.get(name) {
                self.update(name, w, g)?;
            }
        }
        self.state.steps += 1;
        Ok(())
    }
}

/// Learning rate for `epoch`: constant for the first 30 epochs, then
/// multiplied by 0.7 at epochs 30, 42, 54, ...
pub fn lr_schedule(epoch: usize) -> f64 {
    const BASE: f64 = 1e-4;
    if epoch < 30 {
        BASE
    } else {
        BASE * 0.7f64.powi(1 + ((epoch - 30) / 12) as i32)
    }
}
