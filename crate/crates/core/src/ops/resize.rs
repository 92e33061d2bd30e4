//! Bilinear resampling with half-pixel centres (`align_corners = false`).
//!
//! Upscaling followed by downscaling by the same factor is not the identity.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source taps for one output coordinate: `(i0, i1, weight of i1)`.
#[derive(Clone, Copy, Debug)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap { i0, i1, frac: src - i0 as f64 }
        })
        .collect()
}

pub fn resize_bilinear(x: &Tensor, ho: usize, wo: usize) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if ho == 0 || wo == 0 || h == 0 || w == 0 {
        return Err(Error::invalid("resize_bilinear", "sizes must be positive"));
    }
    if (ho, wo) == (h, w) {
        return Ok(x.clone());
    }
    let (ty, tx) = (taps(h, ho), taps(w, wo));
    let d = x.data();
    let mut out = vec![0.0; c * ho * wo];
    for ci in 0..c {
        let plane = &d[ci * h * w..(ci + 1) * h * w];
        for (oy, t) in ty.iter().enumerate() {
            let r0 = &plane[t.i0 * w..][..w];
            let r1 = &plane[t.i1 * w..][..w];
            let dst = &mut out[(ci * ho + oy) * wo..][..wo];
            for (o, s) in dst.iter_mut().zip(&tx) {
                let top = r0[s.i0] * (1.0 - s.frac) + r0[s.i1] * s.frac;
                let bot = r1[s.i0] * (1.0 - s.frac) + r1[s.i1] * s.frac;
                *o = top * (1.0 - t.frac) + bot * t.frac;
            }
        }
    }
    Tensor::new(&[c, ho, wo], out)
}

/// Adjoint of [`resize_bilinear`] back to an `h x w` grid.
pub fn resize_bilinear_backward(grad: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, ho, wo) = grad.dims3()?;
    if (ho, wo) == (h, w) {
        return Ok(grad.clone());
    }
    let (ty, tx) = (taps(h, ho), taps(w, wo));
    let gd = grad.data();
    let mut gx = vec![0.0; c * h * w];
    for ci in 0..c {
        let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
        for (oy, t) in ty.iter().enumerate() {
            let src = &gd[(ci * ho + oy) * wo..][..wo];
            for (g, s) in src.iter().zip(&tx) {
                let top = g * (1.0 - t.frac);
                let bot = g * t.frac;
                plane[t.i0 * w + s.i0] += top * (1.0 - s.frac);
                plane[t.i0 * w + s.i1] += top * s.frac;
                plane[t.i1 * w + s.i0] += bot * (1.0 - s.frac);
                plane[t.i1 * w + s.i1] += bot * s.frac;
            }
        }
    }
    Tensor::new(&[c, h, w], gx)
}
