//! Smallest eigenpairs of `L phi = lambda M phi` by block shift-invert Krylov iteration.
//!
//! The Krylov space is built from `K = (L - sigma M)^{-1} M`, kept fully M-orthonormal, and
//! Rayleigh-Ritz is applied to `L` projected on it. Small problems use the dense path.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;

use super::dense::{dense_eigenbasis, DENSE_LIMIT};
use super::EigenBasis;
use crate::blas::{gemm_strided, View};
use crate::cholesky::EnvelopeCholesky;
use crate::rng;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub const DEFAULT_K: usize = 128;
pub const DEFAULT_SHIFT: f64 = -1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions {
    pub k: usize,
    pub shift: f64,
    /// Convergence when `||L phi - lambda M phi|| <= tol * ||M phi||` for every pair.
    pub tol: f64,
    pub block_size: usize,
    /// Largest Krylov dimension before giving up; defaults to `min(V, 3k + 200)`.
    pub max_dim: Option<usize>,
    pub seed: u64,
    /// Problems with at most this many vertices use the dense solver.
    pub dense_threshold: usize,
}

impl EigenOptions {
    pub fn new(k: usize) -> Self {
        EigenOptions {
            k,
            shift: DEFAULT_SHIFT,
            tol: 1e-8,
            block_size: 8,
            max_dim: None,
            seed: 0x5eed,
            dense_threshold: DENSE_LIMIT,
        }
    }
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions::new(DEFAULT_K)
    }
}

pub fn solve_eigenbasis(l: &CsrMatrix, mass: &[f64], opts: &EigenOptions) -> Result<EigenBasis> {
    let n = mass.len();
    if l.nrows != n || l.ncols != n {
        return Err(Error::ShapeMismatch {
            op: "solve_eigenbasis",
            lhs: vec![l.nrows, l.ncols],
            rhs: vec![n],
        });
    }
    if opts.k == 0 || opts.k >= n {
        return Err(Error::InvalidInput(format!(
            "basis size k = {} must satisfy 1 <= k < V = {n}",
            opts.k
        )));
    }
    if mass.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidInput("mass entries must be positive".into()));
    }
    if n <= opts.dense_threshold.min(DENSE_LIMIT) {
        return dense_eigenbasis(l, mass, opts.k);
    }
    block_krylov(l, mass, opts)
}

/// Per-pair `||L phi_i - lambda_i M phi_i|| / ||M phi_i||`.
pub fn eigen_residuals(l: &CsrMatrix, mass: &[f64], basis: &EigenBasis) -> Vec<f64> {
    (0..basis.k())
        .map(|i| {
            let phi: Vec<f64> = basis.vectors.column(i).iter().copied().collect();
            let lphi = l.matvec(&phi);
            let mut r2 = 0.0;
            let mut m2 = 0.0;
            for v in 0..phi.len() {
                let mp = mass[v] * phi[v];
                r2 += (lphi[v] - basis.values[i] * mp).powi(2);
                m2 += mp * mp;
            }
            (r2 / m2).sqrt()
        })
        .collect()
}

fn factor_shifted(l: &CsrMatrix, mass: &[f64], shift: f64) -> Result<(EnvelopeCholesky, f64)> {
    let mut sigma = shift;
    let mut last = None;
    for _ in 0..4 {
        let a = l.add_diagonal(1.0, -sigma, mass);
        match EnvelopeCholesky::factor(&a) {
            Ok(chol) => return Ok((chol, sigma)),
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                log::warn!("shifted factorization failed at sigma = {sigma:e}; retrying with a larger shift");
                last = Some(e);
                sigma *= 10.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// `C = A^T B` with `A: n x m`, `B: n x p`, all column-major; `C: m x p`.
fn gemm_tn(a: &[f64], b: &[f64], n: usize, m: usize, p: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * p];
    let (a, b) = (View::col_major(a, n).t(), View::col_major(b, n));
    gemm_strided(m, n, p, 1.0, a, b, 0.0, &mut c, 1, m);
    c
}

/// `W -= A C` with `A: n x m`, `C: m x p`, `W: n x p`.
fn gemm_sub(w: &mut [f64], a: &[f64], c: &[f64], n: usize, m: usize, p: usize) {
    let (a, c) = (View::col_major(a, n), View::col_major(c, m));
    gemm_strided(n, m, p, -1.0, a, c, 1.0, w, 1, n);
}

/// `C = A B` with `A: n x m`, `B: m x p`.
fn gemm_nn(a: &[f64], b: &[f64], n: usize, m: usize, p: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * p];
    let (a, b) = (View::col_major(a, n), View::col_major(b, m));
    gemm_strided(n, m, p, 1.0, a, b, 0.0, &mut c, 1, n);
    c
}

struct Krylov<'a> {
    l: &'a CsrMatrix,
    mass: &'a [f64],
    n: usize,
    /// M-orthonormal basis, column-major `n x m`.
    q: Vec<f64>,
    /// `L Q`, same layout.
    lq: Vec<f64>,
    m: usize,
}

impl Krylov<'_> {
    fn m_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(self.mass).map(|((x, y), m)| x * y * m).sum()
    }

    fn col_norms(&self, w: &[f64], p: usize) -> Vec<f64> {
        let n = self.n;
        (0..p)
            .map(|j| self.m_dot(&w[j * n..(j + 1) * n], &w[j * n..(j + 1) * n]).sqrt())
            .collect()
    }

    /// M-orthogonalize a block against the basis and append its independent columns.
    ///
    /// Block Gram-Schmidt is repeated until no column loses more than half its norm in a
    /// pass; columns that shrink below `DROP` of their original norm are discarded.
    fn append(&mut self, mut w: Vec<f64>, p: usize) -> usize {
        const DROP: f64 = 1e-13;
        let n = self.n;
        let orig = self.col_norms(&w, p);
        let mut before = orig.clone();
        for _ in 0..4 {
            let mw: Vec<f64> = w.iter().enumerate().map(|(i, x)| x * self.mass[i % n]).collect();
            let c = gemm_tn(&self.q, &mw, n, self.m, p);
            gemm_sub(&mut w, &self.q, &c, n, self.m, p);
            let after = self.col_norms(&w, p);
            let settled = (0..p).all(|j| after[j] >= 0.5 * before[j] || after[j] < DROP * orig[j]);
            before = after;
            if settled {
                break;
            }
        }
        let mut added = 0;
        let first_new = self.m;
        for j in 0..p {
            let mut col = w[j * n..(j + 1) * n].to_vec();
            let mut norm = before[j];
            for _ in 0..3 {
                let prev = norm;
                for k in first_new..self.m {
                    let qk = &self.q[k * n..(k + 1) * n];
                    let d = self.m_dot(qk, &col);
                    for (x, y) in col.iter_mut().zip(qk) {
                        *x -= d * y;
                    }
                }
                norm = self.m_dot(&col, &col).sqrt();
                if norm >= 0.5 * prev {
                    break;
                }
            }
            if !(norm > DROP * orig[j]) || !norm.is_finite() {
                continue;
            }
            col.iter_mut().for_each(|x| *x /= norm);
            self.lq.extend(self.l.matvec(&col));
            self.q.extend(col);
            self.m += 1;
            added += 1;
        }
        added
    }

    /// Ritz pairs for the `k` smallest values, with relative residuals.
    fn ritz(&self, k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let t = gemm_tn(&self.q, &self.lq, n, m, m);
        let t = DMatrix::from_vec(m, m, t);
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut y = Vec::with_capacity(m * k);
        for &i in &order[..k] {
            y.extend(eig.eigenvectors.column(i).iter());
        }
        let x = gemm_nn(&self.q, &y, n, m, k);
        let lx = gemm_nn(&self.lq, &y, n, m, k);
        let residuals = (0..k)
            .map(|j| {
                let mut r2 = 0.0;
                let mut m2 = 0.0;
                for v in 0..n {
                    let mx = self.mass[v] * x[j * n + v];
                    r2 += (lx[j * n + v] - values[j] * mx).powi(2);
                    m2 += mx * mx;
                }
                (r2 / m2).sqrt()
            })
            .collect();
        (values, x, residuals)
    }
}

/// M-normalized indicators of the connected components of the sparsity graph of `L`, when
/// every row sums to zero so that they span its kernel exactly; empty otherwise.
///
/// Deflating them up front keeps the large shift-invert amplification of the kernel from
/// injecting rounding noise into the rest of the Krylov space.
fn kernel_indicators(l: &CsrMatrix, mass: &[f64]) -> Vec<Vec<f64>> {
    let n = mass.len();
    let scale = l.max_abs().max(f64::MIN_POSITIVE);
    let row_sum_ok = (0..n).all(|r| l.row(r).map(|(_, v)| v).sum::<f64>().abs() <= 1e-10 * scale);
    if !row_sum_ok {
        return Vec::new();
    }
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = count;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for (u, w) in l.row(v) {
                if w != 0.0 && comp[u] == usize::MAX {
                    comp[u] = count;
                    stack.push(u);
                }
            }
        }
        count += 1;
    }
    let mut area = vec![0.0; count];
    for v in 0..n {
        area[comp[v]] += mass[v];
    }
    (0..count)
        .map(|c| {
            let h = 1.0 / area[c].sqrt();
            (0..n).map(|v| if comp[v] == c { h } else { 0.0 }).collect()
        })
        .collect()
}

fn block_krylov(l: &CsrMatrix, mass: &[f64], opts: &EigenOptions) -> Result<EigenBasis> {
    let n = mass.len();
    let k = opts.k;
    let b = opts.block_size.max(1);
    let max_dim = opts.max_dim.unwrap_or(3 * k + 200).min(n);
    if max_dim < k + 1 {
        return Err(Error::InvalidInput(format!("max_dim = {max_dim} too small for k = {k}")));
    }
    let (chol, sigma) = factor_shifted(l, mass, opts.shift)?;
    log::debug!(
        "shift-invert factorization: V = {n}, sigma = {sigma:e}, envelope = {}",
        chol.envelope_size()
    );
    let mut rng = rng::seeded(opts.seed);
    let mut random_block = |p: usize| -> Vec<f64> { (0..n * p).map(|_| rng.gen_range(-1.0..1.0)).collect() };

    let mut kry = Krylov {
        l,
        mass,
        n,
        q: Vec::new(),
        lq: Vec::new(),
        m: 0,
    };
    let kernel = kernel_indicators(l, mass);
    let n_kernel = kernel.len();
    for col in kernel {
        kry.lq.extend(l.matvec(&col));
        kry.q.extend(col);
        kry.m += 1;
    }
    if n_kernel >= k {
        let (values, x, _) = kry.ritz(k);
        return Ok(EigenBasis {
            values,
            vectors: DMatrix::from_vec(n, k, x),
        });
    }
    kry.append(random_block(b), b);
    let mut last_block = (n_kernel, kry.m);
    let mut next_check = k + 2 * b;
    let mut worst = f64::INFINITY;
    loop {
        if kry.m >= next_check || kry.m >= max_dim {
            let (values, x, residuals) = kry.ritz(k);
            worst = residuals.iter().cloned().fold(0.0, f64::max);
            let unconverged = residuals.iter().filter(|&&r| r > opts.tol).count();
            log::debug!("krylov dim {}: {unconverged} of {k} pairs unconverged, worst residual {worst:e}", kry.m);
            if unconverged == 0 {
                return Ok(EigenBasis {
                    values,
                    vectors: DMatrix::from_vec(n, k, x),
                });
            }
            if kry.m >= max_dim {
                break;
            }
            next_check = kry.m + (kry.m / 6).max(2 * b);
        }
        let (start, end) = last_block;
        let p = end - start;
        let mut w = Vec::with_capacity(n * p);
        for j in start..end {
            let mq: Vec<f64> = kry.q[j * n..(j + 1) * n].iter().zip(mass).map(|(x, m)| x * m).collect();
            w.extend(chol.solve(&mq));
        }
        let room = max_dim - kry.m;
        let before = kry.m;
        let mut added = kry.append(w, p);
        if added == 0 {
            added = kry.append(random_block(b), b);
            if added == 0 {
                break;
            }
        }
        if kry.m > before + room {
            kry.m = before + room;
            kry.q.truncate(n * kry.m);
            kry.lq.truncate(n * kry.m);
        }
        last_block = (before, kry.m);
    }
    Err(Error::NonConvergence(format!(
        "{k} eigenpairs not converged within Krylov dimension {max_dim} (worst relative residual {worst:e}, tolerance {:e})",
        opts.tol
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> (CsrMatrix, Vec<f64>) {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, 1.0));
            t.push((i + 1, i + 1, 1.0));
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
        (CsrMatrix::from_triplets(n, n, t).unwrap(), vec![1.0; n])
    }

    #[test]
    fn krylov_matches_path_graph_spectrum() {
        let n = 700;
        let (l, m) = path_laplacian(n);
        let mut opts = EigenOptions::new(12);
        opts.dense_threshold = 0;
        let basis = solve_eigenbasis(&l, &m, &opts).unwrap();
        for (i, &lam) in basis.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * i as f64 / n as f64).cos();
            assert!((lam - exact).abs() < 1e-9 * exact.max(1e-3), "{i}: {lam} vs {exact}");
        }
        assert!(basis.orthonormality_error(&m) < 1e-10);
    }

    #[test]
    fn rejects_k_not_below_v() {
        let (l, m) = path_laplacian(10);
        assert!(solve_eigenbasis(&l, &m, &EigenOptions::new(10)).is_err());
        assert!(solve_eigenbasis(&l, &m, &EigenOptions::new(0)).is_err());
    }

    #[test]
    fn tiny_budget_reports_nonconvergence() {
        let (l, m) = path_laplacian(800);
        let mut opts = EigenOptions::new(40);
        opts.dense_threshold = 0;
        opts.max_dim = Some(48);
        assert!(matches!(solve_eigenbasis(&l, &m, &opts), Err(Error::NonConvergence(_))));
    }
}
