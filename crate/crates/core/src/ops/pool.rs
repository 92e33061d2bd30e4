//! Reductions over the channel axis of a `[C,H,W]` tensor.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-pixel maximum over channels, plus the winning channel index (first
/// occurrence on ties).
pub fn channel_max(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let (c, h, w) = x.dims3()?;
    if c == 0 {
        return Err(Error::invalid("channel_max", "needs at least one channel"));
    }
    let hw = h * w;
    let d = x.data();
    let mut out = d[..hw].to_vec();
    let mut arg = vec![0u32; hw];
    for ci in 1..c {
        for (p, v) in d[ci * hw..(ci + 1) * hw].iter().enumerate() {
            if *v > out[p] {
                out[p] = *v;
                arg[p] = ci as u32;
            }
        }
    }
    Ok((Tensor::new(&[1, h, w], out)?, arg))
}

pub fn channel_max_backward(grad: &Tensor, arg: &[u32], shape: &[usize]) -> Tensor {
    let hw = arg.len();
    let mut gx = Tensor::zeros(shape);
    let gd = gx.data_mut();
    for (p, (&a, g)) in arg.iter().zip(grad.data()).enumerate() {
        gd[a as usize * hw + p] = *g;
    }
    gx
}

/// Per-pixel arithmetic mean over channels.
pub fn channel_avg(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if c == 0 {
        return Err(Error::invalid("channel_avg", "needs at least one channel"));
    }
    let hw = h * w;
    let d = x.data();
    let mut out = vec![0.0; hw];
    for ci in 0..c {
        for (o, v) in out.iter_mut().zip(&d[ci * hw..(ci + 1) * hw]) {
            *o += v;
        }
    }
    let inv = c as f64;
    for o in &mut out {
        *o /= inv;
    }
    Tensor::new(&[1, h, w], out)
}

pub fn channel_avg_backward(grad: &Tensor, shape: &[usize]) -> Tensor {
    let c = shape[0];
    let hw = grad.len();
    let scale = 1.0 / c as f64;
    Tensor::from_fn(shape, |i| grad.data()[i % hw] * scale)
}
