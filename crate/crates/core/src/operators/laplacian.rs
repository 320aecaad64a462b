use crate::geometry::SurfaceMesh;
use crate::sparse::CsrMatrix;
use crate::Result;

use super::AssemblyStats;

/// Cotangents are clamped to this magnitude on nearly degenerate corners.
pub const COT_CLAMP: f64 = 1e6;
/// Faces with area below `DEGENERATE_AREA * bbox_diagonal^2` are skipped.
pub const DEGENERATE_AREA: f64 = 1e-14;

/// Lumped mass diagonal: one third of the incident triangle areas per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalMass(pub Vec<f64>);

impl DiagonalMass {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Replace non-positive entries (isolated vertices) with `1e-12 * mean`, returning how many.
    pub(crate) fn fix_isolated(&mut self) -> usize {
        let positive: Vec<f64> = self.0.iter().copied().filter(|&m| m > 0.0).collect();
        let mean = if positive.is_empty() {
            1.0
        } else {
            positive.iter().sum::<f64>() / positive.len() as f64
        };
        let mut count = 0;
        for m in &mut self.0 {
            if !(*m > 0.0) {
                *m = 1e-12 * mean;
                count += 1;
            }
        }
        if count > 0 {
            log::warn!("{count} isolated vertices received a tiny placeholder mass");
        }
        count
    }
}

/// Accumulates the symmetric stiffness of one triangle into a triplet list.
///
/// Each off-diagonal weight is pushed for (i,j) and (j,i) together so that duplicate
/// summation happens in the same order for both, keeping the result exactly symmetric.
pub(crate) fn push_triangle_stiffness(
    trip: &mut Vec<(usize, usize, f64)>,
    ids: [usize; 3],
    pts: [nalgebra::Vector3<f64>; 3],
    scale: f64,
    stats: &mut AssemblyStats,
) {
    for c in 0..3 {
        let (i, j, k) = (ids[(c + 1) % 3], ids[(c + 2) % 3], c);
        let u = pts[(c + 1) % 3] - pts[k];
        let v = pts[(c + 2) % 3] - pts[k];
        let cross = u.cross(&v).norm();
        let mut cot = u.dot(&v) / cross;
        if !cot.is_finite() || cot.abs() > COT_CLAMP {
            cot = if cot.is_nan() { 0.0 } else { cot.signum() * COT_CLAMP };
            stats.clamped_cotans += 1;
        }
        let w = 0.5 * cot * scale;
        trip.push((i, j, -w));
        trip.push((j, i, -w));
    }
}

/// Rebuilds the diagonal as the negated sum of each row's off-diagonal entries.
pub(crate) fn finalize_laplacian(n: usize, trip: Vec<(usize, usize, f64)>) -> Result<CsrMatrix> {
    let off = CsrMatrix::from_triplets(n, n, trip)?;
    let mut full = Vec::with_capacity(off.nnz() + n);
    for r in 0..n {
        let mut diag = 0.0;
        for (c, v) in off.row(r) {
            if c != r {
                full.push((r, c, v));
                diag -= v;
            }
        }
        full.push((r, r, diag));
    }
    CsrMatrix::from_triplets(n, n, full)
}

/// Weak cotan Laplacian: `L_ij = -1/2 sum cot(opposite angles)`, `L_ii = -sum_j L_ij`.
pub fn build_cotan_laplacian(mesh: &SurfaceMesh) -> Result<(CsrMatrix, AssemblyStats)> {
    mesh.validate()?;
    let n = mesh.n_vertices();
    let mut stats = AssemblyStats::default();
    let area_floor = DEGENERATE_AREA * mesh.bounding_box_diagonal().powi(2);
    let mut trip = Vec::with_capacity(mesh.faces.len() * 6);
    for (f, &ids) in mesh.faces.iter().enumerate() {
        if mesh.face_area(f) < area_floor {
            stats.degenerate_faces += 1;
            continue;
        }
        let pts = ids.map(|v| mesh.positions[v]);
        push_triangle_stiffness(&mut trip, ids, pts, 1.0, &mut stats);
    }
    if stats.degenerate_faces > 0 {
        log::warn!("skipped {} degenerate faces", stats.degenerate_faces);
    }
    Ok((finalize_laplacian(n, trip)?, stats))
}

/// Lumped (barycentric) mass matrix.
pub fn build_mass_matrix(mesh: &SurfaceMesh) -> Result<(DiagonalMass, AssemblyStats)> {
    mesh.validate()?;
    let mut stats = AssemblyStats::default();
    let area_floor = DEGENERATE_AREA * mesh.bounding_box_diagonal().powi(2);
    let mut mass = vec![0.0; mesh.n_vertices()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area(f);
        if a < area_floor {
            stats.degenerate_faces += 1;
            continue;
        }
        for &v in face {
            mass[v] += a / 3.0;
        }
    }
    let mut mass = DiagonalMass(mass);
    stats.isolated_vertices = mass.fix_isolated();
    Ok((mass, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{flat_grid, icosphere, midpoint_refine, Vec3};
    use rand::Rng;

    fn equilateral() -> SurfaceMesh {
        SurfaceMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn equilateral_entries() {
        let (l, _) = build_cotan_laplacian(&equilateral()).unwrap();
        let off = -1.0 / (2.0 * 3f64.sqrt());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / 3f64.sqrt() } else { off };
                assert!((l.get(i, j) - expected).abs() < 1e-14, "({i},{j})");
            }
        }
        let (m, _) = build_mass_matrix(&equilateral()).unwrap();
        for v in m.as_slice() {
            assert!((v - 3f64.sqrt() / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn constants_in_kernel_and_symmetric() {
        let mesh = icosphere(2);
        let (l, _) = build_cotan_laplacian(&mesh).unwrap();
        let y = l.matvec(&vec![1.0; mesh.n_vertices()]);
        let bound = 1e-12 * l.max_abs();
        assert!(y.iter().all(|v| v.abs() <= bound));
        assert_eq!(l.asymmetry(), 0.0);
    }

    #[test]
    fn psd_on_random_vectors() {
        let mut mesh = icosphere(2);
        let mut r = crate::rng::seeded(5);
        for p in &mut mesh.positions {
            *p *= 1.0 + 0.2 * r.gen::<f64>();
        }
        let (l, _) = build_cotan_laplacian(&mesh).unwrap();
        for _ in 0..100 {
            let u: Vec<f64> = (0..mesh.n_vertices()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let lu = l.matvec(&u);
            let e: f64 = u.iter().zip(&lu).map(|(a, b)| a * b).sum();
            let n2: f64 = u.iter().map(|a| a * a).sum();
            assert!(e >= -1e-10 * n2);
        }
    }

    #[test]
    fn mass_partitions_area() {
        let mesh = icosphere(3);
        let (m, _) = build_mass_matrix(&mesh).unwrap();
        assert!((m.total() - mesh.total_area()).abs() <= 1e-12 * mesh.total_area());
        let g = flat_grid(5).unwrap();
        let (m0, _) = build_mass_matrix(&g).unwrap();
        let (m1, _) = build_mass_matrix(&midpoint_refine(&g)).unwrap();
        assert!((m0.total() - m1.total()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_face_is_skipped_and_counted() {
        let mesh = SurfaceMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        let (_, stats) = build_cotan_laplacian(&mesh).unwrap();
        assert_eq!(stats.degenerate_faces, 1);
        let (m, stats) = build_mass_matrix(&mesh).unwrap();
        assert_eq!(stats.isolated_vertices, 1);
        assert!(m.as_slice().iter().all(|&v| v > 0.0));
    }
}
