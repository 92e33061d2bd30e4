//! Learnable parameters and the named-parameter visitor shared by every module.

use crate::error::{Result, WeightError};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

/// Convolution weights `[C_out, C_in, k, k]`, bias `[C_out]` and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    /// Zero-initialised, stride 1, shape-preserving padding `(k - 1) / 2`.
    pub fn new(c_in: usize, c_out: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "kernel parity: {k}");
        Self::strided(c_in, c_out, k, 1)
    }

    pub fn strided(c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[c_out, c_in, k, k]),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding: (k - 1) / 2,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Sets the weight to the Dirac kernel mapping channel `i` to `i`.
    /// Needs `C_in == C_out`.
    pub fn set_identity(&mut self) {
        assert_eq!(self.c_in(), self.c_out());
        let k = self.kernel();
        let c = self.c_in();
        let w = self.weight.data_mut();
        w.fill(0.0);
        for o in 0..c {
            w[((o * c + o) * k + k / 2) * k + k / 2] = 1.0;
        }
        self.bias.data_mut().fill(0.0);
    }

    pub fn apply<'p>(&'p self, tape: &Tape<'p>, x: &Var<'p>) -> Result<Var<'p>> {
        tape.conv2d(x, &tape.param(&self.weight), &tape.param(&self.bias), self.stride, self.padding)
    }
}

/// Anything that owns named parameter tensors.
///
/// Names are dotted paths such as `mde1.branches.2.conv_a.weight`.
pub trait Module {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.to_owned(), t)));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn to_weights(&self) -> ModelWeights {
        let mut w = ModelWeights::default();
        self.visit("", &mut |name, t| {
            w.insert(name.to_owned(), t.clone());
        });
        w
    }

    /// Copies every tensor from `weights` into this module. Names must match
    /// one-to-one and shapes exactly.
    fn load_weights(&mut self, weights: &ModelWeights) -> Result<(), WeightError> {
        let mut expected = std::collections::BTreeMap::new();
        self.visit("", &mut |name, t| {
            expected.insert(name.to_owned(), t.shape().to_vec());
        });
        if let Some(name) = weights.names().find(|n| !expected.contains_key(*n)) {
            return Err(WeightError::UnknownName(name.to_owned()));
        }
        for (name, shape) in &expected {
            let t = weights.get(name).ok_or_else(|| WeightError::MissingName(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(WeightError::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        self.visit_mut("", &mut |name, t| *t = weights.get(name).expect("checked above").clone());
        Ok(())
    }

    /// Weights uniform on `(-b, b)` with `b = 1 / sqrt(fan_in)`, biases zero.
    /// Values are drawn in `f32` so that saving them is lossless.
    fn init(&mut self, rng: &mut Rng) {
        self.visit_mut("", &mut |_, t| {
            if t.ndim() == 4 {
                let fan_in = (t.shape()[1] * t.shape()[2] * t.shape()[3]) as f32;
                let bound = 1.0 / fan_in.sqrt();
                for v in t.data_mut() {
                    *v = ((2.0 * rng.unit_f32() - 1.0) * bound) as f64;
                }
            } else {
                t.data_mut().fill(0.0);
            }
        });
    }

    /// Fills every parameter uniformly on `[-scale, scale)`, biases included.
    fn randomize(&mut self, rng: &mut Rng, scale: f64) {
        self.visit_mut("", &mut |_, t| {
            for v in t.data_mut() {
                *v = rng.uniform(-scale, scale);
            }
        });
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Module for ConvParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

impl<T: Module> Module for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        for (i, m) in self.iter().enumerate() {
            m.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, m) in self.iter_mut().enumerate() {
            m.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl Module for () {
    fn visit<'a>(&'a self, _: &str, _: &mut dyn FnMut(&str, &'a Tensor)) {}
    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Tensor)) {}
}

/// Implements [`Module`] by visiting the listed fields under their own names.
macro_rules! impl_module {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::params::Module for $ty {
            fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a $crate::Tensor)) {
                $( $crate::params::Module::visit(&self.$field, &$crate::params::join(prefix, stringify!($field)), f); )+
            }

            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut $crate::Tensor)) {
                $( $crate::params::Module::visit_mut(&mut self.$field, &$crate::params::join(prefix, stringify!($field)), f); )+
            }
        }
    };
}
pub(crate) use impl_module;

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Pair {
        a: ConvParams,
        b: Vec<ConvParams>,
    }
    impl_module!(Pair { a, b });

    fn pair() -> Pair {
        Pair { a: ConvParams::new(2, 3, 3), b: vec![ConvParams::new(3, 1, 1)] }
    }

    #[test]
    fn names_are_dotted_paths() {
        let p = pair();
        let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["a.weight", "a.bias", "b.0.weight", "b.0.bias"]);
        assert_eq!(p.param_count(), 2 * 3 * 9 + 3 + 3 + 1);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let mut p = pair();
        let mut q = pair();
        p.init(&mut Rng::new(3));
        q.init(&mut Rng::new(3));
        assert_eq!(p.a, q.a);
        let bound = 1.0 / (18.0f64).sqrt();
        assert!(p.a.weight.data().iter().all(|v| v.abs() <= bound));
        assert!(p.a.bias.data().iter().all(|&v| v == 0.0));
        let mut r = pair();
        r.init(&mut Rng::new(4));
        assert_ne!(p.a.weight, r.a.weight);
    }

    #[test]
    fn load_rejects_unknown_and_mismatched() {
        let p = pair();
        let mut w = p.to_weights();
        let t = w.remove("a.bias").unwrap();
        w.insert("a.bias_renamed".into(), t);
        let mut q = pair();
        assert!(matches!(q.load_weights(&w), Err(WeightError::UnknownName(_))));

        let mut w = p.to_weights();
        w.insert("a.bias".into(), Tensor::zeros(&[4]));
        assert!(matches!(q.load_weights(&w), Err(WeightError::ShapeMismatch { .. })));

        let mut w = p.to_weights();
        w.remove("a.bias");
        assert!(matches!(q.load_weights(&w), Err(WeightError::MissingName(_))));
    }

    #[test]
    fn identity_kernel() {
        let mut c = ConvParams::new(2, 2, 5);
        c.set_identity();
        let x = Tensor::from_fn(&[2, 4, 4], |i| i as f64);
        let tape = Tape::inference();
        let y = c.apply(&tape, &tape.constant(x.clone())).unwrap();
        assert_eq!(y.value(), &x);
    }
}
