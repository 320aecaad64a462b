//! Strided dense products on plain slices.

/// A read-only matrix view: data with row and column strides.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f64], cols: usize) -> Self {
        View { data, rs: cols, cs: 1 }
    }

    pub fn col_major(data: &'a [f64], rows: usize) -> Self {
        View { data, rs: 1, cs: rows }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn covers(&self, rows: usize, cols: usize) -> bool {
        rows == 0 || cols == 0 || (rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len()
    }
}

/// `C = alpha A B + beta C` with `A: m x k`, `B: k x n`, `C: m x n` row-major (stride `n`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View, b: View, beta: f64, c: &mut [f64]) {
    gemm_strided(m, k, n, alpha, a, b, beta, c, n, 1);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View,
    b: View,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    assert!(a.covers(m, k) && b.covers(k, n), "gemm operand out of bounds");
    assert!(m == 0 || n == 0 || (m - 1) * rsc + (n - 1) * csc < c.len(), "gemm output out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    // SAFETY: the bounds of all three operands were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
