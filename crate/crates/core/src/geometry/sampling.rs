use rand::Rng as _;

use super::mesh::{Discretization, PointCloud, Shape, SurfaceMesh, DEFAULT_K_NEIGHBORS};
use super::synthetic::subdivide;
use crate::rng;
use crate::{Error, Result};

/// A point cloud sampled from a mesh, with provenance for label transfer.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledCloud {
    pub cloud: PointCloud,
    pub source_face: Vec<usize>,
    /// Vertex of the source face closest to each sample.
    pub nearest_vertex: Vec<usize>,
}

impl SampledCloud {
    /// Per-point labels copied from the nearest vertex of the source face.
    pub fn transfer_labels(&self, vertex_labels: &[usize]) -> Vec<usize> {
        self.nearest_vertex.iter().map(|&v| vertex_labels[v]).collect()
    }

    pub fn into_shape(self, vertex_labels: Option<&[usize]>) -> Shape {
        let labels = vertex_labels.map(|l| self.transfer_labels(l));
        Shape {
            geometry: Discretization::Cloud(self.cloud),
            vertex_labels: labels,
            class_label: None,
        }
    }
}

/// Draw `n` points area-uniformly: a face proportional to its area, then a uniform
/// barycentric point inside it. Normals are the unit face normals.
pub fn sample_point_cloud(mesh: &SurfaceMesh, n: usize, seed: u64) -> Result<SampledCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot sample zero points".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("mesh has zero total area".into()));
    }
    let mut r = rng::substream(seed, 0x5A3F);
    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut source_face = Vec::with_capacity(n);
    let mut nearest_vertex = Vec::with_capacity(n);
    for _ in 0..n {
        let target = r.gen::<f64>() * total;
        let f = cumulative
            .partition_point(|&c| c <= target)
            .min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.faces[f];
        let (pa, pb, pc) = (mesh.positions[a], mesh.positions[b], mesh.positions[c]);
        let s = r.gen::<f64>().sqrt();
        let t = r.gen::<f64>();
        let p = pa * (1.0 - s) + pb * (s * (1.0 - t)) + pc * (s * t);
        let normal = mesh.face_cross(f).normalize();
        let near = [a, b, c]
            .into_iter()
            .min_by(|&x, &y| {
                (mesh.positions[x] - p)
                    .norm_squared()
                    .total_cmp(&(mesh.positions[y] - p).norm_squared())
            })
            .expect("three candidates");
        positions.push(p);
        normals.push(normal);
        source_face.push(f);
        nearest_vertex.push(near);
    }
    let k = DEFAULT_K_NEIGHBORS.min(n.saturating_sub(1)).max(1);
    let cloud = PointCloud {
        positions,
        normals: Some(normals),
        k_neighbors: k,
    };
    Ok(SampledCloud {
        cloud,
        source_face,
        nearest_vertex,
    })
}

/// Split every triangle into four through its edge midpoints: `V' = V + E`, `F' = 4F`.
pub fn midpoint_refine(mesh: &SurfaceMesh) -> SurfaceMesh {
    let (positions, faces) = subdivide(&mesh.positions, &mesh.faces);
    SurfaceMesh { positions, faces }
}
