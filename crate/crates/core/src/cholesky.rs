//! Envelope (profile) Cholesky factorization for sparse symmetric positive-definite systems.
//!
//! Rows are reordered with reverse Cuthill–McKee to shrink the profile, then factored
//! row by row as `A = L L^T` where row `i` of `L` is dense from its first nonzero column.

use std::collections::VecDeque;

use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First column of the envelope for each (permuted) row.
    first: Vec<usize>,
    /// Offset of row `i`'s envelope in `data`; the row holds columns `first[i]..=i`.
    offset: Vec<usize>,
    data: Vec<f64>,
}

/// Reverse Cuthill–McKee ordering of the symmetric sparsity pattern, component by component.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| a.row(r).map(|(c, _)| c).filter(|&c| c != r).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &mut Vec<bool>, out: &mut Vec<usize>| -> usize {
        // Returns the last vertex reached (a far vertex) and appends the BFS order.
        let mut q = VecDeque::new();
        q.push_back(start);
        visited[start] = true;
        let mut last = start;
        while let Some(v) = q.pop_front() {
            out.push(v);
            last = v;
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nb.sort_by_key(|&u| (degree[u], u));
            for u in nb {
                visited[u] = true;
                q.push_back(u);
            }
        }
        last
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start: min-degree vertex of the component, then two BFS sweeps.
        let mut scratch_vis = visited.clone();
        let mut comp = Vec::new();
        bfs(seed, &mut scratch_vis, &mut comp);
        let mut start = *comp.iter().min_by_key(|&&v| (degree[v], v)).expect("non-empty");
        for _ in 0..2 {
            let mut vis = visited.clone();
            let mut tmp = Vec::new();
            start = bfs(start, &mut vis, &mut tmp);
        }
        bfs(start, &mut visited, &mut order);
    }
    order.reverse();
    order
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::InvalidInput("cholesky needs a square matrix".into()));
        }
        let n = a.nrows;
        let perm = reverse_cuthill_mckee(a);
        let pa = a.permute_symmetric(&perm);
        let mut first: Vec<usize> = (0..n).collect();
        for r in 0..n {
            for (c, _) in pa.row(r) {
                if c < first[r] {
                    first[r] = c;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for r in 0..n {
            offset.push(total);
            total += r - first[r] + 1;
        }
        offset.push(total);
        let mut data = vec![0.0; total];
        for r in 0..n {
            for (c, v) in pa.row(r) {
                if c <= r {
                    data[offset[r] + c - first[r]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let ri = offset[i] + (start - fi);
                let rj = offset[j] + (start - fj);
                let len = j - start;
                let mut s = data[offset[i] + j - fi];
                s -= dot(&data[ri..ri + len], &data[rj..rj + len]);
                data[offset[i] + j - fi] = s / data[offset[j] + j - fj];
            }
            let row = &data[offset[i]..offset[i] + (i - fi)];
            let d = data[offset[i] + i - fi] - dot(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            data[offset[i] + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "cholesky solve dimension");
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // Forward: L y = b.
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i] + (i - fi)];
            let s = y[i] - dot(row, &y[fi..i]);
            y[i] = s / self.data[self.offset[i] + i - fi];
        }
        // Backward: L^T x = y.
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = y[i] / self.data[self.offset[i] + i - fi];
            y[i] = xi;
            let row = &self.data[self.offset[i]..self.offset[i] + (i - fi)];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solve with `steps` rounds of iterative refinement against the original matrix.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let dx = self.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        x
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators keep the loop vectorizable while fixing the summation order.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn solves_tridiagonal() {
        let a = laplacian_1d(50, 0.1);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = chol.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)])
            .unwrap();
        assert!(matches!(
            EnvelopeCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(17, 0.0);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }
}
