use std::f64::consts::TAU;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::geometry::Vec3;
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    #[default]
    None,
    /// Rotation about the vertical (`z`) axis.
    RotZ,
    /// Uniformly random rotation.
    RotFull,
}

/// A random rotation for `mode`; the identity for `Augmentation::None`.
pub fn rotation_matrix(mode: Augmentation, seed: u64) -> Matrix3<f64> {
    let mut r = rng::seeded(seed);
    match mode {
        Augmentation::None => Matrix3::identity(),
        Augmentation::RotZ => {
            let a: f64 = r.gen_range(0.0..TAU);
            let (s, c) = a.sin_cos();
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
        }
        Augmentation::RotFull => {
            // Shoemake's uniform unit quaternion.
            let (u1, u2, u3): (f64, f64, f64) = (r.gen(), r.gen_range(0.0..TAU), r.gen_range(0.0..TAU));
            let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
            let q = Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
            *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
        }
    }
}

pub fn random_rotation(positions: &[Vec3], mode: Augmentation, seed: u64) -> Vec<Vec3> {
    if mode == Augmentation::None {
        return positions.to_vec();
    }
    let r = rotation_matrix(mode, seed);
    positions.iter().map(|p| r * p).collect()
}

/// Rotate `[V, 3]` position features row by row.
pub fn rotate_features(features: &Tensor, r: &Matrix3<f64>) -> Tensor {
    let rows = features.rows();
    Tensor::from_fn(rows, 3, |i, c| {
        let p = features.row(i);
        r[(c, 0)] * p[0] + r[(c, 1)] * p[1] + r[(c, 2)] * p[2]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_are_proper() {
        for mode in [Augmentation::RotZ, Augmentation::RotFull] {
            for seed in 0..20 {
                let r = rotation_matrix(mode, seed);
                assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
                assert!((r.determinant() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rot_z_preserves_heights() {
        let p = vec![Vec3::new(0.3, -1.0, 0.77), Vec3::new(2.0, 0.0, -4.5)];
        let q = random_rotation(&p, Augmentation::RotZ, 9);
        for (a, b) in p.iter().zip(&q) {
            assert_eq!(a.z, b.z);
        }
    }

    #[test]
    fn full_rotations_cover_the_sphere() {
        // Mean of R e_z over many draws tends to zero for the uniform measure.
        let n = 4000;
        let mean = (0..n).fold(Vec3::zeros(), |acc, s| acc + rotation_matrix(Augmentation::RotFull, s) * Vec3::z()) / n as f64;
        assert!(mean.norm() < 4.0 / (n as f64).sqrt(), "{mean:?}");
    }
}
