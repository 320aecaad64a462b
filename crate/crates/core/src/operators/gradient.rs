use crate::geometry::{Discretization, Shape, Vec3};
use crate::sparse::ComplexCsr;
use crate::Result;

use super::frames::TangentFrames;
use super::pointcloud::knn;
use super::AssemblyStats;

/// Least-squares tangent gradients assembled as a complex `V x V` matrix.
///
/// Row `v` fits `g` in `min sum_j |d_j . g - (f_j - f_v)|^2` over the projected
/// displacements `d_j` of the neighbors; the weight of neighbor `j` is the complex number
/// whose real/imaginary parts are the `e1`/`e2` components of `(D^T D)^{-1} d_j`, and the
/// center weight is minus their sum.
pub fn build_gradient_matrix(shape: &Shape, frames: &TangentFrames) -> Result<(ComplexCsr, AssemblyStats)> {
    let neighbors = match &shape.geometry {
        Discretization::Mesh(mesh) => mesh.vertex_neighbors(),
        Discretization::Cloud(cloud) => knn(&cloud.positions, cloud.k_neighbors),
    };
    gradient_from_neighbors(shape.positions(), &neighbors, frames)
}

pub(crate) fn gradient_from_neighbors(
    positions: &[Vec3],
    neighbors: &[Vec<usize>],
    frames: &TangentFrames,
) -> Result<(ComplexCsr, AssemblyStats)> {
    let n = positions.len();
    let mut stats = AssemblyStats::default();
    let mut trip = Vec::with_capacity(n * 8);
    for v in 0..n {
        let nb = &neighbors[v];
        if nb.is_empty() {
            continue;
        }
        let d: Vec<[f64; 2]> = nb
            .iter()
            .map(|&j| frames.project(v, &(positions[j] - positions[v])))
            .collect();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        let mut mean_sq = 0.0;
        for [x, y] in &d {
            a += x * x;
            b += x * y;
            c += y * y;
            mean_sq += x * x + y * y;
        }
        mean_sq /= d.len() as f64;
        let mut det = a * c - b * b;
        let scale = (a + c).max(f64::MIN_POSITIVE);
        if !(det > 1e-10 * scale * scale) {
            let eps = 1e-8 * mean_sq.max(f64::MIN_POSITIVE);
            a += eps;
            c += eps;
            det = a * c - b * b;
            stats.regularized_rows += 1;
        }
        // (D^T D)^{-1} = [c, -b; -b, a] / det
        let mut center = [0.0, 0.0];
        for (&j, [x, y]) in nb.iter().zip(&d) {
            let wr = (c * x - b * y) / det;
            let wi = (a * y - b * x) / det;
            trip.push((v, j, [wr, wi]));
            center[0] -= wr;
            center[1] -= wi;
        }
        trip.push((v, v, center));
    }
    if stats.regularized_rows > 0 {
        log::warn!(
            "{} gradient rows were rank deficient and regularized",
            stats.regularized_rows
        );
    }
    Ok((ComplexCsr::from_triplets(n, n, trip)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{flat_grid, icosphere, Shape};
    use crate::operators::compute_normals_and_frames;

    #[test]
    fn linear_function_on_grid() {
        let shape = Shape::mesh(flat_grid(6).unwrap());
        let (fr, _) = compute_normals_and_frames(&shape);
        let (g, _) = build_gradient_matrix(&shape, &fr).unwrap();
        let f: Vec<f64> = shape.positions().iter().map(|p| p.x).collect();
        let (re, im) = g.apply_real(&f);
        for v in 0..re.len() {
            assert!((re[v] - 1.0).abs() < 1e-10 && im[v].abs() < 1e-10);
        }
        let f: Vec<f64> = shape.positions().iter().map(|p| 2.0 * p.x - 3.0 * p.y + 0.5).collect();
        let (re, im) = g.apply_real(&f);
        for v in 0..re.len() {
            assert!((re[v] - 2.0).abs() < 1e-8 && (im[v] + 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn constants_have_zero_gradient() {
        let shape = Shape::mesh(icosphere(2));
        let (fr, _) = compute_normals_and_frames(&shape);
        let (g, _) = build_gradient_matrix(&shape, &fr).unwrap();
        let (re, im) = g.apply_real(&vec![3.5; shape.n_vertices()]);
        assert!(re.iter().chain(&im).all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn frame_rotation_multiplies_row_by_phase() {
        let shape = Shape::mesh(icosphere(1));
        let (mut fr, _) = compute_normals_and_frames(&shape);
        let (g0, _) = build_gradient_matrix(&shape, &fr).unwrap();
        let theta = 0.7;
        fr.rotate(5, theta);
        let (g1, _) = build_gradient_matrix(&shape, &fr).unwrap();
        let f: Vec<f64> = shape.positions().iter().map(|p| p.x * p.y + p.z).collect();
        let (r0, i0) = g0.apply_real(&f);
        let (r1, i1) = g1.apply_real(&f);
        // expected: e^{-i theta} * (r0 + i i0)
        let (s, c) = theta.sin_cos();
        let er = r0[5] * c + i0[5] * s;
        let ei = i0[5] * c - r0[5] * s;
        assert!((r1[5] - er).abs() < 1e-12 && (i1[5] - ei).abs() < 1e-12);
        for v in (0..r0.len()).filter(|&v| v != 5) {
            assert_eq!((r0[v], i0[v]), (r1[v], i1[v]));
        }
    }
}
