use nalgebra::{DMatrix, SymmetricEigen};

use super::EigenBasis;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Largest vertex count accepted by the dense routines.
pub const DENSE_LIMIT: usize = 512;

fn check_dims(l: &CsrMatrix, mass: &[f64]) -> Result<()> {
    if l.nrows != l.ncols || l.nrows != mass.len() {
        return Err(Error::ShapeMismatch {
            op: "dense eigen",
            lhs: vec![l.nrows, l.ncols],
            rhs: vec![mass.len()],
        });
    }
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidInput("mass entries must be positive".into()));
    }
    Ok(())
}

/// Eigendecomposition of `M^{-1/2} L M^{-1/2}`, ascending.
fn symmetric_decomposition(l: &CsrMatrix, mass: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = mass.len();
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut s = l.to_dense();
    for c in 0..n {
        for r in 0..n {
            s[(r, c)] *= inv_sqrt[r] * inv_sqrt[c];
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// The `k` smallest eigenpairs by dense decomposition; `k` may equal `V`.
pub fn dense_eigenbasis(l: &CsrMatrix, mass: &[f64], k: usize) -> Result<EigenBasis> {
    check_dims(l, mass)?;
    let n = mass.len();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidInput(format!(
            "dense eigensolver limited to {DENSE_LIMIT} vertices, got {n}"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..={n}")));
    }
    let (values, y) = symmetric_decomposition(l, mass);
    let vectors = DMatrix::from_fn(n, k, |r, c| y[(r, c)] / mass[r].sqrt());
    Ok(EigenBasis {
        values: values[..k].to_vec(),
        vectors,
    })
}

/// `exp(-t M^{-1} L)` for any `t` from one cached decomposition.
#[derive(Clone, Debug)]
pub struct DenseHeatOracle {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    sqrt_mass: Vec<f64>,
}

impl DenseHeatOracle {
    pub fn new(l: &CsrMatrix, mass: &[f64]) -> Result<Self> {
        check_dims(l, mass)?;
        if mass.len() > DENSE_LIMIT {
            return Err(Error::InvalidInput(format!(
                "dense heat oracle limited to {DENSE_LIMIT} vertices, got {}",
                mass.len()
            )));
        }
        let (values, vectors) = symmetric_decomposition(l, mass);
        Ok(DenseHeatOracle {
            values,
            vectors,
            sqrt_mass: mass.iter().map(|m| m.sqrt()).collect(),
        })
    }

    pub fn operator(&self, t: f64) -> DMatrix<f64> {
        let n = self.values.len();
        let scaled = DMatrix::from_fn(n, n, |r, c| self.vectors[(r, c)] * (-self.values[c] * t).exp());
        let mut h = scaled * self.vectors.transpose();
        for c in 0..n {
            for r in 0..n {
                h[(r, c)] *= self.sqrt_mass[c] / self.sqrt_mass[r];
            }
        }
        h
    }
}

pub fn dense_heat_oracle(l: &CsrMatrix, mass: &[f64], t: f64) -> Result<DMatrix<f64>> {
    Ok(DenseHeatOracle::new(l, mass)?.operator(t))
}
