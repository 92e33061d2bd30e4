//! Multi-scale detail enhancement for the two shallowest features.
//!
//! Four U-shaped branches with kernel sizes 1, 3, 5 and 7:
//!
//! ```text
//! a   = conv_a(x)
//! F_i = up(conv_b(inner3x3(down(a)))) + a
//! P_i = fuse3x3(cat(psa(F_i), pca(F_i)))
//! out = merge3x3(cat(P_1..P_4))
//! ```
//!
//! `down`/`up` are factor-2 bilinear resizes. `conv_a` and `conv_b` are
//! separate parameter sets.

use crate::attention::{pca_forward, psa_forward, PcaParams, PsaParams};
use crate::error::Result;
use crate::params::{impl_module, ConvParams};
use crate::tape::{Tape, Var};

pub const MDE_KERNELS: [usize; 4] = [1, 3, 5, 7];

#[derive(Clone, Debug, PartialEq)]
pub struct MdeBranch {
    pub conv_a: ConvParams,
    pub inner: ConvParams,
    pub conv_b: ConvParams,
    pub psa: PsaParams,
    pub pca: PcaParams,
    pub fuse: ConvParams,
}
impl_module!(MdeBranch { conv_a, inner, conv_b, psa, pca, fuse });

#[derive(Clone, Debug, PartialEq)]
pub struct MdeParams {
    pub branches: Vec<MdeBranch>,
    pub merge: ConvParams,
}
impl_module!(MdeParams { branches, merge });

impl MdeParams {
    pub fn new(channels: usize, kernels: &[usize], psa_factors: &[usize], pca_factors: &[usize]) -> Self {
        let c = channels;
        let branches = kernels
            .iter()
            .map(|&k| MdeBranch {
                conv_a: ConvParams::new(c, c, k),
                inner: ConvParams::new(c, c, 3),
                conv_b: ConvParams::new(c, c, k),
                psa: PsaParams::new(c, psa_factors),
                pca: PcaParams::new(c, pca_factors),
                fuse: ConvParams::new(2 * c, c, 3),
            })
            .collect::<Vec<_>>();
        Self { merge: ConvParams::new(branches.len() * c, c, 3), branches }
    }
}

/// The U-branch detail feature `F_i` before attention.
pub fn mde_branch_detail<'p>(tape: &Tape<'p>, x: &Var<'p>, b: &'p MdeBranch) -> Result<Var<'p>> {
    let (_, h, w) = x.value().dims3()?;
    let a = b.conv_a.apply(tape, x)?;
    let down = tape.resize(&a, (h / 2).max(1), (w / 2).max(1))?;
    let inner = b.conv_b.apply(tape, &b.inner.apply(tape, &down)?)?;
    tape.add(&tape.resize(&inner, h, w)?, &a)
}

pub fn mde_branch<'p>(tape: &Tape<'p>, x: &Var<'p>, b: &'p MdeBranch) -> Result<Var<'p>> {
    let detail = mde_branch_detail(tape, x, b)?;
    let attended = tape.cat(&[psa_forward(tape, &detail, &b.psa)?, pca_forward(tape, &detail, &b.pca)?], 0)?;
    b.fuse.apply(tape, &attended)
}

pub fn mde_forward<'p>(tape: &Tape<'p>, x: &Var<'p>, p: &'p MdeParams) -> Result<Var<'p>> {
    let branches = p.branches.iter().map(|b| mde_branch(tape, x, b)).collect::<Result<Vec<_>>>()?;
    p.merge.apply(tape, &tape.cat(&branches, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{PCA_FACTORS, PSA_FACTORS};
    use crate::params::Module;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    #[test]
    fn zero_params_zero_output() {
        let p = MdeParams::new(4, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
        let tape = Tape::inference();
        let y = mde_forward(&tape, &tape.constant(Tensor::zeros(&[4, 24, 24])), &p).unwrap();
        assert_eq!(y.value(), &Tensor::zeros(&[4, 24, 24]));
    }

    #[test]
    fn residual_skip_with_zero_inner_path() {
        let mut p = MdeParams::new(4, &MDE_KERNELS, &PSA_FACTORS, &[1, 2]);
        let mut rng = Rng::new(9);
        p.randomize(&mut rng, 0.3);
        let x = Tensor::from_fn(&[4, 12, 12], |_| rng.uniform(-1.0, 1.0));
        for b in &mut p.branches {
            b.conv_a.set_identity();
            b.inner.weight.data_mut().fill(0.0);
            b.inner.bias.data_mut().fill(0.0);
            b.conv_b.bias.data_mut().fill(0.0);
        }
        let tape = Tape::inference();
        for b in &p.branches {
            let f = mde_branch_detail(&tape, &tape.constant(x.clone()), b).unwrap();
            assert_eq!(f.value(), &x);
        }
    }

    #[test]
    fn default_channels_keep_shape() {
        let mut p = MdeParams::new(64, &MDE_KERNELS, &PSA_FACTORS, &PCA_FACTORS);
        p.init(&mut Rng::new(1));
        let tape = Tape::inference();
        let y = mde_forward(&tape, &tape.constant(Tensor::full(&[64, 12, 12], 0.1)), &p).unwrap();
        assert_eq!(y.shape(), [64, 12, 12]);
    }
}
