use nalgebra::{Matrix3, SymmetricEigen};

use crate::geometry::{Discretization, Shape, SurfaceMesh, Vec3};

use super::pointcloud::knn;
use super::AssemblyStats;

/// Per-vertex unit normal and tangent basis `(e1, e2)`; `e1 x e2 = n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrames {
    pub normals: Vec<Vec3>,
    pub e1: Vec<Vec3>,
    pub e2: Vec<Vec3>,
}

impl TangentFrames {
    /// Frames from normals with the deterministic x-axis rule: `e1` is the normalized
    /// projection of the x-axis (the y-axis when `|n.x| > 0.99`), `e2 = n x e1`.
    pub fn from_normals(normals: Vec<Vec3>) -> Self {
        let mut e1 = Vec::with_capacity(normals.len());
        let mut e2 = Vec::with_capacity(normals.len());
        for n in &normals {
            let axis = if n.x.abs() > 0.99 { Vec3::y() } else { Vec3::x() };
            let t = (axis - n * n.dot(&axis)).normalize();
            e2.push(n.cross(&t));
            e1.push(t);
        }
        TangentFrames { normals, e1, e2 }
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Rotate the tangent basis at vertex `v` by `angle` about the normal.
    pub fn rotate(&mut self, v: usize, angle: f64) {
        let (s, c) = angle.sin_cos();
        let (a, b) = (self.e1[v], self.e2[v]);
        self.e1[v] = a * c + b * s;
        self.e2[v] = b * c - a * s;
    }

    /// Coordinates of a 3D vector in the tangent basis of `v` (real = e1, imaginary = e2).
    pub fn project(&self, v: usize, d: &Vec3) -> [f64; 2] {
        [d.dot(&self.e1[v]), d.dot(&self.e2[v])]
    }

    pub fn permute(&self, perm: &[usize]) -> TangentFrames {
        TangentFrames {
            normals: perm.iter().map(|&o| self.normals[o]).collect(),
            e1: perm.iter().map(|&o| self.e1[o]).collect(),
            e2: perm.iter().map(|&o| self.e2[o]).collect(),
        }
    }
}

/// Unit eigenvector of the smallest eigenvalue of the neighborhood covariance.
pub(crate) fn covariance_normal(points: &[Vec3], center: &Vec3, neighbors: &[usize]) -> Option<Vec3> {
    if neighbors.len() < 2 {
        return None;
    }
    let mut mean = *center;
    for &j in neighbors {
        mean += points[j];
    }
    mean /= (neighbors.len() + 1) as f64;
    let mut cov = Matrix3::zeros();
    for p in std::iter::once(center).chain(neighbors.iter().map(|&j| &points[j])) {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let n: Vec3 = eig.eigenvectors.column(imin).into_owned();
    let len = n.norm();
    (len > 0.0 && len.is_finite()).then(|| n / len)
}

/// Angle-weighted vertex normals; degenerate stars fall back to the 1-ring covariance.
pub fn mesh_vertex_normals(mesh: &SurfaceMesh, stats: &mut AssemblyStats) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); mesh.n_vertices()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let cross = mesh.face_cross(f);
        let len = cross.norm();
        if !(len > 0.0) {
            continue;
        }
        let fnormal = cross / len;
        for c in 0..3 {
            let p = mesh.positions[face[c]];
            let u = mesh.positions[face[(c + 1) % 3]] - p;
            let v = mesh.positions[face[(c + 2) % 3]] - p;
            let angle = u.cross(&v).norm().atan2(u.dot(&v));
            normals[face[c]] += fnormal * angle;
        }
    }
    let mut ring: Option<Vec<Vec<usize>>> = None;
    for v in 0..normals.len() {
        let len = normals[v].norm();
        if len > 1e-300 && len.is_finite() {
            normals[v] /= len;
            continue;
        }
        stats.fallback_normals += 1;
        let ring = ring.get_or_insert_with(|| mesh.vertex_neighbors());
        normals[v] = covariance_normal(&mesh.positions, &mesh.positions[v], &ring[v])
            .unwrap_or_else(Vec3::z);
    }
    normals
}

/// Normals and tangent frames for any shape. Point clouds use their given normals or,
/// if absent, an unoriented covariance estimate over the k nearest neighbors.
pub fn compute_normals_and_frames(shape: &Shape) -> (TangentFrames, AssemblyStats) {
    let mut stats = AssemblyStats::default();
    let normals = match &shape.geometry {
        Discretization::Mesh(mesh) => mesh_vertex_normals(mesh, &mut stats),
        Discretization::Cloud(cloud) => match &cloud.normals {
            Some(n) => n.clone(),
            None => {
                let nbrs = knn(&cloud.positions, cloud.k_neighbors);
                cloud
                    .positions
                    .iter()
                    .zip(&nbrs)
                    .map(|(p, nb)| {
                        covariance_normal(&cloud.positions, p, nb).unwrap_or_else(|| {
                            stats.fallback_normals += 1;
                            Vec3::z()
                        })
                    })
                    .collect()
            }
        },
    };
    (TangentFrames::from_normals(normals), stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{flat_grid, icosphere, PointCloud};
    use rand::Rng;

    fn assert_orthonormal(fr: &TangentFrames) {
        for v in 0..fr.len() {
            let (n, a, b) = (fr.normals[v], fr.e1[v], fr.e2[v]);
            for (x, y, want) in [
                (n, n, 1.0),
                (a, a, 1.0),
                (b, b, 1.0),
                (n, a, 0.0),
                (n, b, 0.0),
                (a, b, 0.0),
            ] {
                assert!((x.dot(&y) - want).abs() < 1e-10);
            }
            assert!((a.cross(&b) - n).norm() < 1e-10);
        }
    }

    #[test]
    fn flat_grid_frames() {
        let (fr, _) = compute_normals_and_frames(&Shape::mesh(flat_grid(4).unwrap()));
        for v in 0..fr.len() {
            assert!((fr.normals[v] - Vec3::z()).norm() < 1e-15);
            assert!((fr.e1[v] - Vec3::x()).norm() < 1e-15);
            assert!((fr.e2[v] - Vec3::y()).norm() < 1e-15);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mesh = icosphere(3);
        let (fr, _) = compute_normals_and_frames(&Shape::mesh(mesh.clone()));
        for (v, p) in mesh.positions.iter().enumerate() {
            assert!((fr.normals[v] - p.normalize()).norm() < 1e-2);
        }
        assert_orthonormal(&fr);
    }

    #[test]
    fn random_frames_orthonormal() {
        let mut mesh = icosphere(2);
        let mut r = crate::rng::seeded(11);
        for p in &mut mesh.positions {
            *p += Vec3::new(r.gen(), r.gen(), r.gen()) * 0.1;
        }
        let (fr, _) = compute_normals_and_frames(&Shape::mesh(mesh.clone()));
        assert_orthonormal(&fr);
        let cloud = PointCloud::new(mesh.positions, None, 8).unwrap();
        let (fr, _) = compute_normals_and_frames(&Shape::cloud(cloud));
        assert_orthonormal(&fr);
    }

    #[test]
    fn x_aligned_normal_uses_y_axis() {
        let fr = TangentFrames::from_normals(vec![Vec3::x()]);
        assert!((fr.e1[0] - Vec3::y()).norm() < 1e-15);
        assert!((fr.e2[0] - Vec3::z()).norm() < 1e-15);
    }
}
