//! Discrete geometric operators: Laplacian, lumped mass, tangent frames, gradient matrix,
//! and the bundle that carries them (with the eigenbasis) through the network.

mod cache;
mod frames;
mod gradient;
mod laplacian;
mod pointcloud;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{load_operators, save_operators, CacheKey, CacheManifest, ArrayDescriptor, CACHE_SCHEMA_VERSION};
pub use frames::{compute_normals_and_frames, mesh_vertex_normals, TangentFrames};
pub use gradient::build_gradient_matrix;
pub use laplacian::{build_cotan_laplacian, build_mass_matrix, DiagonalMass, COT_CLAMP, DEGENERATE_AREA};
pub use pointcloud::{build_point_cloud_operators, knn};

use crate::geometry::{Discretization, Shape};
use crate::sparse::{ComplexCsr, CsrMatrix};
use crate::spectral::{solve_eigenbasis, EigenBasis, EigenOptions};
use crate::Result;

/// Counts of the robustness fallbacks taken while assembling operators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub degenerate_faces: usize,
    pub clamped_cotans: usize,
    pub isolated_vertices: usize,
    pub fallback_points: usize,
    pub fallback_normals: usize,
    pub regularized_rows: usize,
}

impl AssemblyStats {
    pub fn merge(&mut self, other: &AssemblyStats) {
        self.degenerate_faces = self.degenerate_faces.max(other.degenerate_faces);
        self.clamped_cotans += other.clamped_cotans;
        self.isolated_vertices = self.isolated_vertices.max(other.isolated_vertices);
        self.fallback_points += other.fallback_points;
        self.fallback_normals += other.fallback_normals;
        self.regularized_rows += other.regularized_rows;
    }
}

/// Everything the network needs about one shape, computed once and then shared read-only.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryOperators {
    pub laplacian: CsrMatrix,
    pub mass: DiagonalMass,
    pub frames: TangentFrames,
    pub gradient: ComplexCsr,
    pub basis: EigenBasis,
    pub oriented: bool,
    pub n_faces: usize,
    /// Neighborhood size for point clouds; 0 for meshes.
    pub k_neighbors: usize,
    pub shape_hash: String,
    pub stats: AssemblyStats,
}

impl GeometryOperators {
    /// Assemble all operators for `shape` and solve for `k` eigenpairs.
    pub fn compute(shape: &Shape, k: usize) -> Result<Self> {
        Self::compute_with(shape, &EigenOptions::new(k))
    }

    pub fn compute_with(shape: &Shape, eig: &EigenOptions) -> Result<Self> {
        let (frames, mut stats) = compute_normals_and_frames(shape);
        let (laplacian, mass, k_neighbors) = match &shape.geometry {
            Discretization::Mesh(mesh) => {
                let (l, s1) = build_cotan_laplacian(mesh)?;
                let (m, s2) = build_mass_matrix(mesh)?;
                stats.merge(&s1);
                stats.merge(&s2);
                (l, m, 0)
            }
            Discretization::Cloud(cloud) => {
                if cloud.k_neighbors < 3 {
                    return Err(crate::Error::InvalidInput(
                        "point-cloud operators need k_neighbors >= 3".into(),
                    ));
                }
                let nbrs = knn(&cloud.positions, cloud.k_neighbors);
                let (l, m, s) = pointcloud::assemble_cloud_operators(cloud, &nbrs, &frames)?;
                stats.merge(&s);
                (l, m, cloud.k_neighbors)
            }
        };
        let (gradient, gs) = build_gradient_matrix(shape, &frames)?;
        stats.merge(&gs);
        let basis = solve_eigenbasis(&laplacian, mass.as_slice(), eig)?;
        Ok(GeometryOperators {
            laplacian,
            mass,
            frames,
            gradient,
            basis,
            oriented: shape.is_oriented(),
            n_faces: shape.n_faces(),
            k_neighbors,
            shape_hash: shape_hash(shape),
            stats,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.mass.len()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey {
            shape_hash: self.shape_hash.clone(),
            k: self.k(),
            k_neighbors: self.k_neighbors,
        }
    }

    /// Relabel vertices: new vertex `i` is old vertex `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> GeometryOperators {
        let mut out = self.clone();
        out.laplacian = self.laplacian.permute_symmetric(perm);
        out.mass = DiagonalMass(perm.iter().map(|&o| self.mass.0[o]).collect());
        out.frames = self.frames.permute(perm);
        out.gradient = self.gradient.permute_symmetric(perm);
        out.basis = self.basis.permute_rows(perm);
        out
    }

    /// Replace the tangent frames and rebuild the gradient matrix for them.
    pub fn with_frames(&self, shape: &Shape, frames: TangentFrames) -> Result<GeometryOperators> {
        let mut out = self.clone();
        let (g, _) = build_gradient_matrix(shape, &frames)?;
        out.gradient = g;
        out.frames = frames;
        Ok(out)
    }

    /// Keep only the first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Result<GeometryOperators> {
        let mut out = self.clone();
        out.basis = self.basis.truncated(k)?;
        Ok(out)
    }
}

/// SHA-256 over the discretization (kind, positions, faces, normals, neighborhood size).
pub fn shape_hash(shape: &Shape) -> String {
    let mut h = Sha256::new();
    match &shape.geometry {
        Discretization::Mesh(m) => {
            h.update(b"mesh");
            h.update((m.positions.len() as u64).to_le_bytes());
            for p in &m.positions {
                for c in p.iter() {
                    h.update(c.to_le_bytes());
                }
            }
            for f in &m.faces {
                for &v in f {
                    h.update((v as u64).to_le_bytes());
                }
            }
        }
        Discretization::Cloud(c) => {
            h.update(b"cloud");
            h.update((c.positions.len() as u64).to_le_bytes());
            h.update((c.k_neighbors as u64).to_le_bytes());
            for p in &c.positions {
                for x in p.iter() {
                    h.update(x.to_le_bytes());
                }
            }
            if let Some(normals) = &c.normals {
                for n in normals {
                    for x in n.iter() {
                        h.update(x.to_le_bytes());
                    }
                }
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
