//! Pixel unshuffle (space-to-depth) and pixel shuffle (depth-to-space).
//!
//! Ordering: `unshuffled[c*r*r + dy*r + dx][h][w] = x[c][h*r + dy][w*r + dx]`,
//! i.e. the source channel is the major index and the offset inside each
//! `r x r` block is row-major. Shuffle is the exact inverse, so each is the
//! other's adjoint.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if r == 0 {
        return Err(Error::invalid("pixel_unshuffle", "factor must be positive"));
    }
    if h % r != 0 {
        return Err(Error::Divisibility { op: "pixel_unshuffle", what: "height", value: h, factor: r });
    }
    if w % r != 0 {
        return Err(Error::Divisibility { op: "pixel_unshuffle", what: "width", value: w, factor: r });
    }
    let (ho, wo) = (h / r, w / r);
    let src = x.data();
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                let oc = ci * r * r + dy * r + dx;
                for y in 0..ho {
                    let srow = &src[(ci * h + y * r + dy) * w..][..w];
                    let drow = &mut out[(oc * ho + y) * wo..][..wo];
                    for (xo, d) in drow.iter_mut().enumerate() {
                        *d = srow[xo * r + dx];
                    }
                }
            }
        }
    }
    Tensor::new(&[c * r * r, ho, wo], out)
}

pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let (cr, h, w) = x.dims3()?;
    if r == 0 {
        return Err(Error::invalid("pixel_shuffle", "factor must be positive"));
    }
    if cr % (r * r) != 0 {
        return Err(Error::Divisibility { op: "pixel_shuffle", what: "channel count", value: cr, factor: r * r });
    }
    let c = cr / (r * r);
    let (ho, wo) = (h * r, w * r);
    let src = x.data();
    let mut out = vec![0.0; x.len()];
    for ci in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                let sc = ci * r * r + dy * r + dx;
                for y in 0..h {
                    let srow = &src[(sc * h + y) * w..][..w];
                    let drow = &mut out[(ci * ho + y * r + dy) * wo..][..wo];
                    for (xs, v) in srow.iter().enumerate() {
                        drow[xs * r + dx] = *v;
                    }
                }
            }
        }
    }
    Tensor::new(&[c, ho, wo], out)
}
