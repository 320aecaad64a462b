use std::collections::HashMap;

use nalgebra::Vector3;

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Neighborhood size used to assemble point-cloud operators.
pub const DEFAULT_K_NEIGHBORS: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    pub positions: Vec<Vec3>,
    /// Counter-clockwise triangles when the mesh is oriented.
    pub faces: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = SurfaceMesh { positions, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        for (i, p) in self.positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!(
                    "face {fi} {f:?} references a vertex outside [0, {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!("face {fi} {f:?} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.face_cross(f).norm() * 0.5
    }

    /// Unnormalized face normal (twice the area vector).
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let pa = self.positions[a];
        (self.positions[b] - pa).cross(&(self.positions[c] - pa))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Undirected edges, each listed once with the smaller index first, in first-seen order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for f in &self.faces {
            for c in 0..3 {
                let (a, b) = (f[c], f[(c + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                if seen.insert(key, ()).is_none() {
                    out.push(key);
                }
            }
        }
        out
    }

    /// True when every edge shared by two faces is traversed in opposite directions.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for c in 0..3 {
                *directed.entry((f[c], f[(c + 1) % 3])).or_default() += 1;
            }
        }
        directed.values().all(|&count| count == 1)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }

    /// Vertex neighbors through edges, sorted ascending.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.positions.len()];
        for [a, b] in self.edges() {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }
}

pub(crate) fn bbox_diagonal(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub k_neighbors: usize,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, normals: Option<Vec<Vec3>>, k_neighbors: usize) -> Result<Self> {
        let cloud = PointCloud {
            positions,
            normals,
            k_neighbors,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.k_neighbors == 0 || self.k_neighbors >= n {
            return Err(Error::InvalidInput(format!(
                "k_neighbors = {} must lie in [1, {n})",
                self.k_neighbors
            )));
        }
        if self.positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("point cloud has a non-finite coordinate".into()));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} normals for {n} points",
                    normals.len()
                )));
            }
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::InvalidInput(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Discretization {
    Mesh(SurfaceMesh),
    Cloud(PointCloud),
}

/// A mesh or point cloud together with optional task labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub geometry: Discretization,
    pub vertex_labels: Option<Vec<usize>>,
    pub class_label: Option<usize>,
}

impl Shape {
    pub fn mesh(mesh: SurfaceMesh) -> Self {
        Shape {
            geometry: Discretization::Mesh(mesh),
            vertex_labels: None,
            class_label: None,
        }
    }

    pub fn cloud(cloud: PointCloud) -> Self {
        Shape {
            geometry: Discretization::Cloud(cloud),
            vertex_labels: None,
            class_label: None,
        }
    }

    pub fn with_vertex_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.n_vertices()
            )));
        }
        self.vertex_labels = Some(labels);
        Ok(self)
    }

    pub fn positions(&self) -> &[Vec3] {
        match &self.geometry {
            Discretization::Mesh(m) => &m.positions,
            Discretization::Cloud(c) => &c.positions,
        }
    }

    pub fn positions_mut(&mut self) -> &mut Vec<Vec3> {
        match &mut self.geometry {
            Discretization::Mesh(m) => &mut m.positions,
            Discretization::Cloud(c) => &mut c.positions,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.positions().len()
    }

    pub fn n_faces(&self) -> usize {
        match &self.geometry {
            Discretization::Mesh(m) => m.faces.len(),
            Discretization::Cloud(_) => 0,
        }
    }

    pub fn as_mesh(&self) -> Option<&SurfaceMesh> {
        match &self.geometry {
            Discretization::Mesh(m) => Some(m),
            Discretization::Cloud(_) => None,
        }
    }

    pub fn as_cloud(&self) -> Option<&PointCloud> {
        match &self.geometry {
            Discretization::Cloud(c) => Some(c),
            Discretization::Mesh(_) => None,
        }
    }

    /// Meshes with consistent winding and clouds with given normals are oriented.
    pub fn is_oriented(&self) -> bool {
        match &self.geometry {
            Discretization::Mesh(m) => m.is_consistently_oriented(),
            Discretization::Cloud(c) => c.normals.is_some(),
        }
    }

    pub fn validate(&self, n_classes: Option<usize>) -> Result<()> {
        match &self.geometry {
            Discretization::Mesh(m) => m.validate()?,
            Discretization::Cloud(c) => c.validate()?,
        }
        if let Some(labels) = &self.vertex_labels {
            if labels.len() != self.n_vertices() {
                return Err(Error::InvalidInput("label array length differs from V".into()));
            }
            if let Some(nc) = n_classes {
                if let Some(bad) = labels.iter().find(|&&l| l >= nc) {
                    return Err(Error::InvalidInput(format!("label {bad} outside [0, {nc})")));
                }
            }
        }
        if let (Some(c), Some(nc)) = (self.class_label, n_classes) {
            if c >= nc {
                return Err(Error::InvalidInput(format!("class label {c} outside [0, {nc})")));
            }
        }
        Ok(())
    }

    /// Apply `f` to every position (normals, if any, are left to the caller).
    pub fn map_positions(&mut self, f: impl Fn(&Vec3) -> Vec3) {
        for p in self.positions_mut().iter_mut() {
            *p = f(p);
        }
    }
}

/// The affine map applied by [`normalize_positions`]: `out = (p - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center) / self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.center
    }
}

/// Center on the vertex centroid and scale so the farthest point has norm one.
pub fn normalize_positions(positions: &[Vec3]) -> Result<(Vec<Vec3>, Normalization)> {
    if positions.is_empty() {
        return Err(Error::InvalidInput("cannot normalize an empty point set".into()));
    }
    let mut center = Vec3::zeros();
    for p in positions {
        center += p;
    }
    center /= positions.len() as f64;
    let scale = positions
        .iter()
        .map(|p| (p - center).norm())
        .fold(0.0_f64, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidInput(
            "all points coincide; normalization scale is undefined".into(),
        ));
    }
    let mut norm = Normalization { center, scale };
    let mut out: Vec<Vec3> = positions.iter().map(|p| norm.apply(p)).collect();
    // Pin the farthest point to norm 1 exactly against rounding in the division.
    let far = out
        .iter()
        .map(|p| p.norm())
        .fold(0.0_f64, f64::max);
    if far != 1.0 {
        for p in &mut out {
            *p /= far;
        }
        norm.scale *= far;
    }
    Ok((out, norm))
}

pub fn normalize_shape(shape: &mut Shape) -> Result<Normalization> {
    let (out, norm) = normalize_positions(shape.positions())?;
    *shape.positions_mut() = out;
    Ok(norm)
}
