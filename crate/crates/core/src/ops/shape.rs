//! Concatenation and slicing along one axis.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Splits a shape around `axis` into `(outer, extent, inner)` element counts.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn cat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::invalid("cat", "nothing to concatenate"))?;
    if axis >= first.ndim() {
        return Err(Error::invalid("cat", format!("axis {axis} out of range for {:?}", first.shape())));
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = 0;
    for p in parts {
        let ok = p.ndim() == first.ndim()
            && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::shape("cat", first.shape(), p.shape()));
        }
        shape[axis] += p.shape()[axis];
    }
    let (outer, _, inner) = split(&shape, axis);
    let mut out = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for p in parts {
            let n = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * n..(o + 1) * n]);
        }
    }
    Tensor::new(&shape, out)
}

/// Elements `[start, start + len)` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.ndim() || start + len > x.shape()[axis] {
        return Err(Error::invalid("narrow", format!("[{start}, {}) out of range on axis {axis} of {:?}", start + len, x.shape())));
    }
    let (outer, extent, inner) = split(x.shape(), axis);
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    Tensor::new(&shape, out)
}

/// Adjoint of [`narrow`]: scatters `grad` into zeros of `shape`.
pub fn narrow_backward(grad: &Tensor, shape: &[usize], axis: usize, start: usize) -> Tensor {
    let (outer, extent, inner) = split(shape, axis);
    let len = grad.shape()[axis];
    let mut gx = Tensor::zeros(shape);
    let gd = gx.data_mut();
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        gd[base..base + len * inner].copy_from_slice(&grad.data()[o * len * inner..(o + 1) * len * inner]);
    }
    gx
}
