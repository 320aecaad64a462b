use nalgebra::DMatrix;

use super::EigenBasis;
use crate::{Error, Result};

pub const HKS_TIME_COUNT: usize = 16;

/// Sixteen times spaced logarithmically on `[0.01, 1]`.
pub fn default_hks_times() -> Vec<f64> {
    let (lo, hi) = (0.01f64.ln(), 1.0f64.ln());
    (0..HKS_TIME_COUNT)
        .map(|i| (lo + (hi - lo) * i as f64 / (HKS_TIME_COUNT - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HksFeatures {
    /// `V x times.len()`.
    pub values: DMatrix<f64>,
    pub times: Vec<f64>,
}

/// `hks(v, t) = sum_i exp(-lambda_i t) phi_i(v)^2`.
pub fn compute_hks(basis: &EigenBasis, times: &[f64]) -> Result<HksFeatures> {
    if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("HKS times must be positive and finite".into()));
    }
    let v = basis.n_vertices();
    let mut values = DMatrix::zeros(v, times.len());
    for (j, &t) in times.iter().enumerate() {
        let w: Vec<f64> = basis.values.iter().map(|l| (-l.max(0.0) * t).exp()).collect();
        for i in 0..basis.k() {
            let col = basis.vectors.column(i);
            for r in 0..v {
                values[(r, j)] += w[i] * col[r] * col[r];
            }
        }
    }
    Ok(HksFeatures {
        values,
        times: times.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_times_span_the_interval() {
        let t = default_hks_times();
        assert_eq!(t.len(), 16);
        assert!((t[0] - 0.01).abs() < 1e-15);
        assert!((t[15] - 1.0).abs() < 1e-14);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let ratio = t[1] / t[0];
        assert!(t.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
    }

    #[test]
    fn rejects_nonpositive_times() {
        let basis = EigenBasis {
            values: vec![0.0],
            vectors: DMatrix::from_element(3, 1, 1.0),
        };
        assert!(compute_hks(&basis, &[0.0]).is_err());
        assert!(compute_hks(&basis, &[0.5]).is_ok());
    }
}
