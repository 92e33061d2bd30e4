use super::gemm::{gemm, Mat};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [m, n] => Ok((m, n)),
        _ => Err(Error::invalid(op, format!("expected a matrix, got {:?}", t.shape()))),
    }
}

/// `[M,K] x [K,N] -> [M,N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = dims2(a, "matmul")?;
    let (k2, n) = dims2(b, "matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; m * n];
    gemm(Mat::row_major(a.data(), m, k), Mat::row_major(b.data(), k, n), 0.0, &mut out, n, 1);
    Tensor::new(&[m, n], out)
}

/// Returns `(grad_a, grad_b)` for `c = a b`: `g bᵀ` and `aᵀ g`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, k) = dims2(a, "matmul")?;
    let (_, n) = dims2(b, "matmul")?;
    let mut ga = vec![0.0; m * k];
    let mut gb = vec![0.0; k * n];
    let g = Mat::row_major(grad.data(), m, n);
    gemm(g, Mat::row_major_t(b.data(), k, n), 0.0, &mut ga, k, 1);
    gemm(Mat::row_major_t(a.data(), m, k), g, 0.0, &mut gb, n, 1);
    Ok((Tensor::new(&[m, k], ga)?, Tensor::new(&[k, n], gb)?))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = dims2(a, "transpose")?;
    let d = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new(&[n, m], out)
}
