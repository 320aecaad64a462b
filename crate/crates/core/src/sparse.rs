//! Compressed sparse row storage for real and complex matrices.

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Sort triplets by (row, col) keeping insertion order among equal keys, so duplicates
/// are summed in the order they were pushed.
fn compress<T: Copy>(
    nrows: usize,
    ncols: usize,
    mut triplets: Vec<(usize, usize, T)>,
    mut add: impl FnMut(&mut T, T),
) -> Result<(Vec<usize>, Vec<usize>, Vec<T>)> {
    if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= nrows || *c >= ncols) {
        return Err(Error::InvalidInput(format!(
            "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
        )));
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));
    let mut indptr = vec![0usize; nrows + 1];
    let mut indices = Vec::with_capacity(triplets.len());
    let mut values: Vec<T> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            add(values.last_mut().expect("previous entry"), v);
        } else {
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for r in 0..nrows {
        indptr[r + 1] += indptr[r];
    }
    Ok((indptr, indices, values))
}

impl CsrMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        let (indptr, indices, values) = compress(nrows, ncols, triplets, |a, b| *a += b)?;
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: values.to_vec(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.indptr[r]..self.indptr[r + 1];
        match self.indices[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `y = A^T x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transpose_matvec dimension");
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, trip).expect("indices in range")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.nrows == self.ncols && self.asymmetry() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// `alpha * self + beta * diag(d)`.
    pub fn add_diagonal(&self, alpha: f64, beta: f64, d: &[f64]) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz() + d.len());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((r, c, alpha * v));
            }
            trip.push((r, r, beta * d[r]));
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, trip).expect("indices in range")
    }

    /// `P A P^T` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> CsrMatrix {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push((inv[r], inv[c], v));
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, trip).expect("indices in range")
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Multiply a dense column-major block: `Y = A X`.
    pub fn mul_dense(&self, x: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols, "mul_dense dimension");
        let mut y = nalgebra::DMatrix::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            for r in 0..self.nrows {
                let mut s = 0.0;
                for (c, v) in self.row(r) {
                    s += v * col[c];
                }
                y[(r, j)] = s;
            }
        }
        y
    }
}

/// Complex sparse matrix with split real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexCsr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexCsr {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: Vec<(usize, usize, [f64; 2])>,
    ) -> Result<Self> {
        let (indptr, indices, values) = compress(nrows, ncols, triplets, |a, b| {
            a[0] += b[0];
            a[1] += b[1];
        })?;
        let re = values.iter().map(|v| v[0]).collect();
        let im = values.iter().map(|v| v[1]).collect();
        Ok(ComplexCsr {
            nrows,
            ncols,
            indptr,
            indices,
            re,
            im,
        })
    }

    pub fn nnz(&self) -> usize {
        self.re.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.re[k], self.im[k]))
    }

    /// Apply to a real vector, returning (real, imaginary) parts.
    pub fn apply_real(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), self.ncols, "apply_real dimension");
        let mut yr = vec![0.0; self.nrows];
        let mut yi = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            for (c, a, b) in self.row(r) {
                yr[r] += a * x[c];
                yi[r] += b * x[c];
            }
        }
        (yr, yi)
    }

    /// Multiply row `r` by the unit complex number `e^{i angle}`.
    pub fn rotate_row(&mut self, r: usize, angle: f64) {
        let (s, c) = angle.sin_cos();
        for k in self.indptr[r]..self.indptr[r + 1] {
            let (a, b) = (self.re[k], self.im[k]);
            self.re[k] = a * c - b * s;
            self.im[k] = a * s + b * c;
        }
    }

    /// `P G P^T` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> ComplexCsr {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, a, b) in self.row(r) {
                trip.push((inv[r], inv[c], [a, b]));
            }
        }
        ComplexCsr::from_triplets(self.nrows, self.ncols, trip).expect("indices in range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(m.get(0, 1), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn transpose_matvec_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]).unwrap();
        let y = m.transpose_matvec(&[1.0, 2.0]);
        assert_eq!(y, vec![1.0, -2.0, 2.0]);
        assert_eq!(m.transpose().matvec(&[1.0, 2.0]), y);
    }

    #[test]
    fn complex_rotation() {
        let mut g = ComplexCsr::from_triplets(1, 1, vec![(0, 0, [1.0, 0.0])]).unwrap();
        g.rotate_row(0, std::f64::consts::FRAC_PI_2);
        assert!((g.re[0]).abs() < 1e-15 && (g.im[0] - 1.0).abs() < 1e-15);
    }
}
