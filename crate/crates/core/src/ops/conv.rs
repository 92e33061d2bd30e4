//! 2-D cross-correlation with zero padding, lowered to GEMM over row bands.

use rayon::prelude::*;

use super::gemm::{gemm, Mat};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Target number of elements in one im2col buffer.
const COL_BUDGET: usize = 1 << 20;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], weight: &[usize], bias: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (batch, cin, h, w) = match *x {
            [c, h, w] => (1, c, h, w),
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(Error::invalid("conv2d", format!("input must be [C,H,W] or [N,C,H,W], got {x:?}"))),
        };
        let (cout, wcin, k) = match *weight {
            [o, i, kh, kw] if kh == kw => (o, i, kh),
            _ => return Err(Error::invalid("conv2d", format!("weight must be [Co,Ci,k,k], got {weight:?}"))),
        };
        if k % 2 == 0 {
            return Err(Error::KernelParity(k));
        }
        if wcin != cin {
            return Err(Error::ChannelMismatch { expected: wcin, got: cin });
        }
        if bias != [cout] {
            return Err(Error::shape("conv2d bias", bias, &[cout]));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::invalid("conv2d", format!("{h}x{w} input with padding {pad} is smaller than kernel {k}")));
        }
        Ok(Self {
            batch,
            cin,
            h,
            w,
            cout,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        })
    }

    pub fn out_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.cout, self.ho, self.wo]
        } else {
            vec![self.cout, self.ho, self.wo]
        }
    }

    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    /// Output-row bands `[y0, y1)` sized so that one im2col buffer stays small.
    fn bands(&self) -> Vec<(usize, usize)> {
        let rows = (COL_BUDGET / (self.patch() * self.wo).max(1)).clamp(1, self.ho);
        (0..self.ho)
            .step_by(rows)
            .map(|y0| (y0, (y0 + rows).min(self.ho)))
            .collect()
    }

    fn im2col(&self, x: &[f64], (y0, y1): (usize, usize), col: &mut Vec<f64>) {
        let (k, s, wo) = (self.k, self.stride, self.wo);
        let n = (y1 - y0) * wo;
        col.clear();
        col.resize(self.patch() * n, 0.0);
        for ci in 0..self.cin {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in y0..y1 {
                        let iy = (oy * s + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..][..self.w];
                        let dst = &mut row[(oy - y0) * wo..][..wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], (y0, y1): (usize, usize), gx: &mut [f64]) {
        let (k, s, wo) = (self.k, self.stride, self.wo);
        let n = (y1 - y0) * wo;
        for ci in 0..self.cin {
            let plane = &mut gx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in y0..y1 {
                        let iy = (oy * s + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..][..self.w];
                        let src = &row[(oy - y0) * wo..][..wo];
                        for (ox, g) in src.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution. `x` is `[C,H,W]` or `[N,C,H,W]`; the output keeps the
/// same rank.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = ConvGeom::new(x.shape(), weight.shape(), bias.shape(), stride, pad)?;
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * g.ho * g.wo;
    let mut out = vec![0.0; g.batch * out_len];
    let wmat = Mat::row_major(weight.data(), g.cout, g.patch());
    for (xb, ob) in x.data().chunks(in_len).zip(out.chunks_mut(out_len)) {
        conv_one(&g, xb, wmat, bias.data(), ob);
    }
    Tensor::new(&g.out_shape(x.ndim() == 4), out)
}

fn conv_one(g: &ConvGeom, x: &[f64], wmat: Mat<'_>, bias: &[f64], out: &mut [f64]) {
    let hw = g.ho * g.wo;
    for (o, row) in out.chunks_mut(hw).enumerate() {
        row.fill(bias[o]);
    }
    if g.pointwise() {
        gemm(wmat, Mat::row_major(x, g.cin, hw), 1.0, out, hw, 1);
        return;
    }
    let bands = g.bands();
    if bands.len() == 1 {
        let mut col = Vec::new();
        g.im2col(x, bands[0], &mut col);
        gemm(wmat, Mat::row_major(&col, g.patch(), hw), 1.0, out, hw, 1);
        return;
    }
    // Each band owns a disjoint set of output columns, so the per-element
    // summation order does not depend on how bands are scheduled.
    let partial: Vec<Vec<f64>> = bands
        .par_iter()
        .map_init(Vec::new, |col, &(y0, y1)| {
            g.im2col(x, (y0, y1), col);
            let n = (y1 - y0) * g.wo;
            let mut tmp = vec![0.0; g.cout * n];
            gemm(wmat, Mat::row_major(col, g.patch(), n), 0.0, &mut tmp, n, 1);
            tmp
        })
        .collect();
    for (&(y0, y1), tmp) in bands.iter().zip(&partial) {
        let n = (y1 - y0) * g.wo;
        for o in 0..g.cout {
            let dst = &mut out[o * hw + y0 * g.wo..][..n];
            for (d, t) in dst.iter_mut().zip(&tmp[o * n..(o + 1) * n]) {
                *d += t;
            }
        }
    }
}

/// Gradients of a convolution with respect to its input, weight and bias.
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Adjoint of [`conv2d`]. The input gradient is the transposed convolution of
/// `grad_out`; it is skipped when `need_input` is false.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    need_input: bool,
) -> Result<ConvGrads> {
    let cout = weight.shape()[0];
    let g = ConvGeom::new(x.shape(), weight.shape(), &[cout], stride, pad)?;
    if grad_out.shape() != g.out_shape(x.ndim() == 4).as_slice() {
        return Err(Error::shape("conv2d backward", grad_out.shape(), &g.out_shape(x.ndim() == 4)));
    }
    let hw = g.ho * g.wo;
    let in_len = g.cin * g.h * g.w;
    let patch = g.patch();
    let wmat_t = Mat::row_major_t(weight.data(), g.cout, patch);
    let mut gw = vec![0.0; cout * patch];
    let mut gb = vec![0.0; cout];
    let mut gx = if need_input { vec![0.0; x.len()] } else { Vec::new() };
    let mut col = Vec::new();
    let mut gcol = Vec::new();

    for (b, xb) in x.data().chunks(in_len).enumerate() {
        let gob = &grad_out.data()[b * cout * hw..(b + 1) * cout * hw];
        for (o, row) in gob.chunks(hw).enumerate() {
            gb[o] += row.iter().sum::<f64>();
        }
        let gomat = Mat::row_major(gob, cout, hw);
        if g.pointwise() {
            gemm(gomat, Mat::row_major_t(xb, g.cin, hw), 1.0, &mut gw, patch, 1);
            if need_input {
                let gxb = &mut gx[b * in_len..(b + 1) * in_len];
                gemm(wmat_t, gomat, 1.0, gxb, hw, 1);
            }
            continue;
        }
        for (y0, y1) in g.bands() {
            let n = (y1 - y0) * g.wo;
            let go_band = gomat.col_range(y0 * g.wo, n);
            g.im2col(xb, (y0, y1), &mut col);
            gemm(go_band, Mat::row_major_t(&col, patch, n), 1.0, &mut gw, patch, 1);
            if need_input {
                gcol.clear();
                gcol.resize(patch * n, 0.0);
                gemm(wmat_t, go_band, 0.0, &mut gcol, n, 1);
                g.col2im(&gcol, (y0, y1), &mut gx[b * in_len..(b + 1) * in_len]);
            }
        }
    }
    Ok(ConvGrads {
        input: if need_input { Some(Tensor::new(x.shape(), gx)?) } else { None },
        weight: Tensor::new(weight.shape(), gw)?,
        bias: Tensor::new(&[cout], gb)?,
    })
}
