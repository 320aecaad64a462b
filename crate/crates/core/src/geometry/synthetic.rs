//! Synthetic shapes for tests and desk-scale experiments.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mesh::{Shape, SurfaceMesh, Vec3};
use crate::rng;
use crate::{Error, Result};

/// Regular `n x n` grid on `[0,1]^2` in the `z = 0` plane, two CCW triangles per cell.
pub fn flat_grid(n: usize) -> Result<SurfaceMesh> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("grid resolution {n} < 2")));
    }
    let h = 1.0 / (n - 1) as f64;
    let mut positions = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            positions.push(Vec3::new(i as f64 * h, j as f64 * h, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            let b = a + 1;
            let c = a + n + 1;
            let d = a + n;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    SurfaceMesh::new(positions, faces)
}

/// Icosahedron on the unit sphere, midpoint-subdivided `subdiv` times and reprojected.
pub fn icosphere(subdiv: usize) -> SurfaceMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut positions: Vec<Vec3> = raw
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let (p, f) = subdivide(&positions, &faces);
        positions = p.into_iter().map(|v| v.normalize()).collect();
        faces = f;
    }
    SurfaceMesh { positions, faces }
}

/// One round of 1-to-4 midpoint subdivision. New vertices are appended in edge
/// first-seen order.
pub(crate) fn subdivide(positions: &[Vec3], faces: &[[usize; 3]]) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut out = positions.to_vec();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, out: &mut Vec<Vec3>| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            out.push((out[a] + out[b]) * 0.5);
            out.len() - 1
        })
    };
    let mut new_faces = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = midpoint(a, b, &mut out);
        let bc = midpoint(b, c, &mut out);
        let ca = midpoint(c, a, &mut out);
        new_faces.push([a, ab, ca]);
        new_faces.push([ab, b, bc]);
        new_faces.push([ca, bc, c]);
        new_faces.push([ab, bc, ca]);
    }
    (out, new_faces)
}

fn random_unit(r: &mut rng::Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A radial Gaussian bump on the unit sphere: `r += amplitude * exp(-angle^2 / (2 width^2))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub amplitude: f64,
    /// Angular standard deviation in radians.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpySphereParams {
    pub subdiv: usize,
    /// One entry per bump type; bump `i` carries segmentation label `i + 1`.
    pub bumps: Vec<BumpSpec>,
    /// Vertices within `label_radius * width` (angular) of a bump center take its label.
    pub label_radius: f64,
    /// Minimum angular separation between bump centers (radians).
    pub min_separation: f64,
}

impl Default for BumpySphereParams {
    fn default() -> Self {
        BumpySphereParams {
            subdiv: 3,
            bumps: vec![
                BumpSpec {
                    amplitude: 0.35,
                    width: 0.18,
                },
                BumpSpec {
                    amplitude: 0.15,
                    width: 0.3,
                },
                BumpSpec {
                    amplitude: -0.2,
                    width: 0.22,
                },
            ],
            label_radius: 2.0,
            min_separation: 1.2,
        }
    }
}

/// A sphere carrying labelled Gaussian bumps at random (seeded) directions.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpySphere {
    pub params: BumpySphereParams,
    pub centers: Vec<Vec3>,
}

impl BumpySphere {
    pub fn new(params: BumpySphereParams, seed: u64) -> Result<Self> {
        if params.bumps.is_empty() {
            return Err(Error::InvalidInput("bumpy sphere needs at least one bump".into()));
        }
        if params.bumps.iter().any(|b| !(b.width > 0.0) || b.amplitude <= -1.0) {
            return Err(Error::InvalidInput("bump width must be positive and amplitude > -1".into()));
        }
        let mut r = rng::substream(seed, 0xB0B);
        let mut centers: Vec<Vec3> = Vec::new();
        let mut attempts = 0;
        while centers.len() < params.bumps.len() {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidInput(
                    "cannot place bumps with the requested separation".into(),
                ));
            }
            let c = random_unit(&mut r);
            if centers
                .iter()
                .all(|o| angle_between(o, &c) >= params.min_separation)
            {
                centers.push(c);
            }
        }
        Ok(BumpySphere { params, centers })
    }

    fn radius(&self, dir: &Vec3) -> f64 {
        1.0 + self
            .params
            .bumps
            .iter()
            .zip(&self.centers)
            .map(|(b, c)| {
                let a = angle_between(c, dir);
                b.amplitude * (-a * a / (2.0 * b.width * b.width)).exp()
            })
            .sum::<f64>()
    }

    /// Label of a point by direction: `i + 1` for the nearest bump when within its label
    /// radius, otherwise 0 (background).
    pub fn label_at(&self, p: &Vec3) -> usize {
        let dir = p.normalize();
        let mut best = (f64::INFINITY, 0);
        for (i, (b, c)) in self.params.bumps.iter().zip(&self.centers).enumerate() {
            let a = angle_between(c, &dir);
            if a <= self.params.label_radius * b.width && a < best.0 {
                best = (a, i + 1);
            }
        }
        best.1
    }

    pub fn n_classes(&self) -> usize {
        self.params.bumps.len() + 1
    }

    pub fn mesh(&self) -> SurfaceMesh {
        let mut mesh = icosphere(self.params.subdiv);
        for p in &mut mesh.positions {
            *p *= self.radius(p);
        }
        mesh
    }

    pub fn shape(&self) -> Shape {
        let mesh = self.mesh();
        let labels = mesh.positions.iter().map(|p| self.label_at(p)).collect();
        Shape {
            geometry: super::mesh::Discretization::Mesh(mesh),
            vertex_labels: Some(labels),
            class_label: None,
        }
    }
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirroredPairParams {
    pub subdiv: usize,
    /// Ellipsoid semi-axes before bumps are added.
    pub axes: [f64; 3],
    /// Amplitude of the off-plane perturbation that breaks the left/right symmetry.
    pub chirality: f64,
}

impl Default for MirroredPairParams {
    fn default() -> Self {
        MirroredPairParams {
            subdiv: 3,
            axes: [0.8, 1.3, 1.0],
            chirality: 0.06,
        }
    }
}

/// A chiral mesh and its reflection across `x = 0` with inverted triangles.
///
/// Labels mark the side of the left/right (`x`) axis: 0 for `x < 0`, 1 otherwise.
/// The two meshes are isometric with identical connectivity; only their orientation
/// and their labels differ.
#[derive(Clone, Debug, PartialEq)]
pub struct MirroredPair {
    pub original: Shape,
    pub mirrored: Shape,
}

impl MirroredPair {
    pub fn generate(params: &MirroredPairParams, seed: u64) -> Result<Self> {
        if params.axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidInput("ellipsoid axes must be positive".into()));
        }
        let mut r = rng::substream(seed, 0x31220);
        let jitter = |r: &mut rng::Rng| 1.0 + r.gen_range(-0.08..0.08);
        let axes = [
            params.axes[0] * jitter(&mut r),
            params.axes[1] * jitter(&mut r),
            params.axes[2] * jitter(&mut r),
        ];
        // Landmarks on the symmetry plane give the shape a front/back and top/bottom.
        let landmarks = [
            (Vec3::new(0.0, 0.85, 0.53).normalize(), 0.35, 0.25),
            (Vec3::new(0.0, -0.6, 0.8).normalize(), 0.2, 0.35),
            (Vec3::new(0.0, 0.2, -1.0).normalize(), -0.15, 0.3),
        ];
        let chiral_dir = {
            let mut d = random_unit(&mut r);
            d.x = d.x.abs().max(0.4);
            d.normalize()
        };
        let base = icosphere(params.subdiv);
        let positions: Vec<Vec3> = base
            .positions
            .iter()
            .map(|d| {
                let mut s = 1.0;
                for (c, amp, w) in &landmarks {
                    let a = angle_between(c, d);
                    s += amp * (-a * a / (2.0 * w * w)).exp();
                }
                let a = angle_between(&chiral_dir, d);
                s += params.chirality * (-a * a / (2.0 * 0.4 * 0.4)).exp();
                Vec3::new(d.x * axes[0] * s, d.y * axes[1] * s, d.z * axes[2] * s)
            })
            .collect();
        let side = |p: &Vec3| usize::from(p.x >= 0.0);
        let labels: Vec<usize> = positions.iter().map(side).collect();
        let original = Shape::mesh(SurfaceMesh::new(positions.clone(), base.faces.clone())?)
            .with_vertex_labels(labels)?;

        let mirrored_positions: Vec<Vec3> =
            positions.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let mirrored_faces = base.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        let mirrored_labels = mirrored_positions.iter().map(side).collect();
        let mirrored = Shape::mesh(SurfaceMesh::new(mirrored_positions, mirrored_faces)?)
            .with_vertex_labels(mirrored_labels)?;
        Ok(MirroredPair { original, mirrored })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = flat_grid(3).unwrap();
        assert_eq!((g.positions.len(), g.faces.len()), (9, 8));
        assert!(flat_grid(1).is_err());
    }

    #[test]
    fn grid_is_ccw_from_above() {
        let g = flat_grid(4).unwrap();
        for f in 0..g.faces.len() {
            assert!(g.face_cross(f).z > 0.0);
        }
        assert!((g.total_area() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn icosphere_counts_and_orientation() {
        let s = icosphere(0);
        assert_eq!((s.positions.len(), s.faces.len()), (12, 20));
        let s2 = icosphere(2);
        assert_eq!((s2.positions.len(), s2.faces.len()), (162, 320));
        assert!(s2.is_consistently_oriented());
        for f in 0..s2.faces.len() {
            let [a, b, c] = s2.faces[f];
            let centroid = (s2.positions[a] + s2.positions[b] + s2.positions[c]) / 3.0;
            assert!(s2.face_cross(f).dot(&centroid) > 0.0, "outward normals");
        }
    }

    #[test]
    fn bumpy_sphere_labels_cover_all_classes() {
        let bs = BumpySphere::new(BumpySphereParams::default(), 3).unwrap();
        let shape = bs.shape();
        let labels = shape.vertex_labels.unwrap();
        for c in 0..bs.n_classes() {
            assert!(labels.contains(&c), "class {c} missing");
        }
    }

    #[test]
    fn mirrored_pair_is_isometric() {
        let pair = MirroredPair::generate(&MirroredPairParams::default(), 7).unwrap();
        let a = pair.original.as_mesh().unwrap();
        let b = pair.mirrored.as_mesh().unwrap();
        let lengths = |m: &SurfaceMesh| {
            let mut l: Vec<f64> = m
                .edges()
                .iter()
                .map(|&[i, j]| (m.positions[i] - m.positions[j]).norm())
                .collect();
            l.sort_by(|x, y| x.partial_cmp(y).unwrap());
            l
        };
        let (la, lb) = (lengths(a), lengths(b));
        assert_eq!(la.len(), lb.len());
        for (x, y) in la.iter().zip(&lb) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!(b.is_consistently_oriented());
        // Labels flip under the reflection.
        let la = pair.original.vertex_labels.as_ref().unwrap();
        let lb = pair.mirrored.vertex_labels.as_ref().unwrap();
        let flipped = la.iter().zip(lb).filter(|(x, y)| x != y).count();
        assert!(flipped as f64 > 0.95 * la.len() as f64);
    }
}
