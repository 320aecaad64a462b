//! Generalized eigenbasis of `(L, M)`, heat diffusion by implicit Euler and by spectral
//! expansion, heat kernel signatures, and dense oracles for testing.

mod dense;
mod diffusion;
mod eigen;
mod hks;

use nalgebra::DMatrix;

pub use dense::{dense_eigenbasis, dense_heat_oracle, DenseHeatOracle, DENSE_LIMIT};
pub use diffusion::{diffuse_implicit, diffuse_spectral, dirichlet_energy, m_weighted_mean};
pub use eigen::{eigen_residuals, solve_eigenbasis, EigenOptions, DEFAULT_K, DEFAULT_SHIFT};
pub use hks::{compute_hks, default_hks_times, HksFeatures, HKS_TIME_COUNT};

use crate::{Error, Result};

/// `k` eigenpairs with ascending eigenvalues; columns of `vectors` are M-orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    pub values: Vec<f64>,
    /// `V x k`.
    pub vectors: DMatrix<f64>,
}

impl EigenBasis {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vectors.nrows()
    }

    /// Rows reordered so that new row `i` is old row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> EigenBasis {
        let v = &self.vectors;
        EigenBasis {
            values: self.values.clone(),
            vectors: DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(perm[r], c)]),
        }
    }

    pub fn truncated(&self, k: usize) -> Result<EigenBasis> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidInput(format!(
                "cannot truncate a {}-vector basis to k = {k}",
                self.k()
            )));
        }
        Ok(EigenBasis {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.columns(0, k).into_owned(),
        })
    }

    /// Largest deviation of `Phi^T M Phi` from the identity.
    pub fn orthonormality_error(&self, mass: &[f64]) -> f64 {
        let mphi = DMatrix::from_fn(self.vectors.nrows(), self.k(), |r, c| mass[r] * self.vectors[(r, c)]);
        let gram = self.vectors.transpose() * mphi;
        let mut worst: f64 = 0.0;
        for i in 0..self.k() {
            for j in 0..self.k() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}
