//! Bounds-checked wrapper over the `matrixmultiply` dgemm kernel.

/// Strided view of a row-major-or-not matrix stored in a slice.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> Mat<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// The transpose of a row-major `rows x cols` matrix.
    pub fn row_major_t(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows: cols,
            cols: rows,
            row_stride: 1,
            col_stride: cols,
        }
    }

    /// Columns `[start, start + n)` of this matrix.
    pub fn col_range(self, start: usize, n: usize) -> Self {
        assert!(start + n <= self.cols);
        Self {
            data: &self.data[start * self.col_stride..],
            cols: n,
            ..self
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride;
            assert!(last < self.data.len(), "matrix view out of bounds");
        }
    }
}

/// `c = a * b + beta * c`, with `c` a strided `m x n` block of `out`.
pub(crate) fn gemm(
    a: Mat<'_>,
    b: Mat<'_>,
    beta: f64,
    out: &mut [f64],
    row_stride: usize,
    col_stride: usize,
) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    a.check();
    b.check();
    let last = (m - 1) * row_stride + (n - 1) * col_stride;
    assert!(last < out.len(), "gemm output out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                out[i * row_stride + j * col_stride] *= beta;
            }
        }
        return;
    }
    // SAFETY: every view was bounds-checked above against its backing slice
    // and `out` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            out.as_mut_ptr(),
            row_stride as isize,
            col_stride as isize,
        );
    }
}
