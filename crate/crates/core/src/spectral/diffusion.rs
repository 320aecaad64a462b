use nalgebra::DMatrix;

use super::EigenBasis;
use crate::cholesky::EnvelopeCholesky;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

const REFINEMENT_STEPS: usize = 2;

fn check_times(u: &DMatrix<f64>, t: &[f64]) -> Result<()> {
    if t.len() != u.ncols() {
        return Err(Error::ShapeMismatch {
            op: "diffusion times",
            lhs: vec![u.nrows(), u.ncols()],
            rhs: vec![t.len()],
        });
    }
    if let Some(bad) = t.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("diffusion time {bad} is not a finite non-negative value")));
    }
    Ok(())
}

/// One implicit Euler step per channel: solve `(M + t_c L) x = M u_c`.
pub fn diffuse_implicit(u: &DMatrix<f64>, t: &[f64], l: &CsrMatrix, mass: &[f64]) -> Result<DMatrix<f64>> {
    check_times(u, t)?;
    if u.nrows() != mass.len() || l.nrows != mass.len() {
        return Err(Error::ShapeMismatch {
            op: "diffuse_implicit",
            lhs: vec![u.nrows(), u.ncols()],
            rhs: vec![l.nrows, mass.len()],
        });
    }
    let mut out = u.clone();
    let mut order: Vec<usize> = (0..t.len()).filter(|&c| t[c] > 0.0).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    let mut i = 0;
    while i < order.len() {
        let tc = t[order[i]];
        let a = l.add_diagonal(tc, 1.0, mass);
        let chol = EnvelopeCholesky::factor(&a)?;
        while i < order.len() && t[order[i]] == tc {
            let c = order[i];
            let rhs: Vec<f64> = u.column(c).iter().zip(mass).map(|(x, m)| x * m).collect();
            let x = chol.solve_refined(&a, &rhs, REFINEMENT_STEPS);
            out.column_mut(c).copy_from_slice(&x);
            i += 1;
        }
    }
    Ok(out)
}

/// Spectral diffusion: `Phi (exp(-lambda t) * (Phi^T M u))`.
///
/// At `t = 0` this is the M-orthogonal projection onto the basis span, not the identity.
pub fn diffuse_spectral(u: &DMatrix<f64>, t: &[f64], basis: &EigenBasis, mass: &[f64]) -> Result<DMatrix<f64>> {
    check_times(u, t)?;
    if u.nrows() != basis.n_vertices() || mass.len() != u.nrows() {
        return Err(Error::ShapeMismatch {
            op: "diffuse_spectral",
            lhs: vec![u.nrows(), u.ncols()],
            rhs: vec![basis.n_vertices(), basis.k()],
        });
    }
    let mu = DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| mass[r] * u[(r, c)]);
    let mut coeffs = basis.vectors.tr_mul(&mu);
    for c in 0..u.ncols() {
        for (i, lambda) in basis.values.iter().enumerate() {
            coeffs[(i, c)] *= (-lambda * t[c]).exp();
        }
    }
    Ok(&basis.vectors * coeffs)
}

/// Per-channel `(sum_i M_ii u_i) / (sum_i M_ii)`.
pub fn m_weighted_mean(u: &DMatrix<f64>, mass: &[f64]) -> Vec<f64> {
    let total: f64 = mass.iter().sum();
    (0..u.ncols())
        .map(|c| u.column(c).iter().zip(mass).map(|(x, m)| x * m).sum::<f64>() / total)
        .collect()
}

/// `u^T L u` for a single channel.
pub fn dirichlet_energy(l: &CsrMatrix, u: &[f64]) -> f64 {
    l.matvec(u).iter().zip(u).map(|(a, b)| a * b).sum()
}
