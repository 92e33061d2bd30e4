//! Raw numerical kernels on [`Tensor`](crate::Tensor) values.
//!
//! These functions compute values and adjoints eagerly; the
//! [`Tape`](crate::Tape) records them for reverse-mode differentiation.

mod conv;
mod gemm;
mod linalg;
mod pool;
mod resize;
mod shape;
mod shuffle;

pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use linalg::{matmul, matmul_backward, transpose};
pub use pool::{channel_avg, channel_avg_backward, channel_max, channel_max_backward};
pub use resize::{resize_bilinear, resize_bilinear_backward};
pub use shape::{cat, narrow, narrow_backward};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
