//! Point-cloud Laplacian and mass from local tangent-plane triangulations.
//!
//! Every point projects its k nearest neighbors into its tangent plane and triangulates
//! them (Delaunay). The triangles incident to the point form its local fan; each fan
//! triangle contributes one third of its cotan stiffness and of its barycentric area to
//! the global matrices (a triangle shared by all three of its vertices' fans is then
//! counted exactly once).

use crate::geometry::{PointCloud, Vec3};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

use super::frames::{covariance_normal, TangentFrames};
use super::laplacian::{finalize_laplacian, push_triangle_stiffness, DiagonalMass};
use super::AssemblyStats;

/// Indices of the `k` nearest neighbors of every point (self excluded), nearest first.
/// Ties are broken by index so the result is deterministic.
pub fn knn(points: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let k = k.min(n.saturating_sub(1));
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            scratch.clear();
            scratch.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(j, q)| ((q - p).norm_squared(), j)),
            );
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < scratch.len() {
                scratch.select_nth_unstable_by(k, cmp);
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(cmp);
            scratch.iter().map(|&(_, j)| j).collect()
        })
        .collect()
}

type P2 = [f64; 2];

fn circumcircle(a: P2, b: P2, c: P2) -> Option<(P2, f64)> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-300 {
        return None;
    }
    let (a2, b2, c2) = (
        a[0] * a[0] + a[1] * a[1],
        b[0] * b[0] + b[1] * b[1],
        c[0] * c[0] + c[1] * c[1],
    );
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
    Some(([ux, uy], r2))
}

/// Bowyer–Watson Delaunay triangulation of a small planar point set. Returns CCW
/// triangles over the input indices.
pub(crate) fn delaunay_2d(points: &[P2]) -> Vec<[usize; 3]> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let big = 1e4 * span;
    let mut pts: Vec<P2> = points.to_vec();
    pts.push([mid[0] - big, mid[1] - big]);
    pts.push([mid[0] + big, mid[1] - big]);
    pts.push([mid[0], mid[1] + big]);
    let mut tris: Vec<([usize; 3], P2, f64)> = Vec::new();
    let sup = [n, n + 1, n + 2];
    let (c, r2) = circumcircle(pts[n], pts[n + 1], pts[n + 2]).expect("super triangle");
    tris.push((sup, c, r2));
    let dup_tol = (1e-12 * span).powi(2);
    for i in 0..n {
        let p = pts[i];
        if (0..i).any(|j| (pts[j][0] - p[0]).powi(2) + (pts[j][1] - p[1]).powi(2) <= dup_tol) {
            continue;
        }
        let mut edges: Vec<[usize; 2]> = Vec::new();
        tris.retain(|(t, c, r2)| {
            let inside = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < *r2;
            if inside {
                for e in 0..3 {
                    edges.push([t[e], t[(e + 1) % 3]]);
                }
            }
            !inside
        });
        for e in 0..edges.len() {
            let [a, b] = edges[e];
            let shared = edges
                .iter()
                .enumerate()
                .any(|(f, &[x, y])| f != e && x == b && y == a);
            if shared {
                continue;
            }
            if let Some((c, r2)) = circumcircle(pts[a], pts[b], p) {
                tris.push(([a, b, i], c, r2));
            }
        }
    }
    tris.into_iter()
        .map(|(t, _, _)| t)
        .filter(|t| t.iter().all(|&v| v < n))
        .collect()
}

/// The local fan at a point: triangles (over global indices) of the projected
/// neighborhood Delaunay triangulation that contain the point, in projected 2D coordinates.
fn local_fan(
    center: usize,
    points: &[Vec3],
    neighbors: &[usize],
    e1: &Vec3,
    e2: &Vec3,
) -> Option<Vec<([usize; 3], [Vec3; 3])>> {
    let origin = points[center];
    let mut ids = Vec::with_capacity(neighbors.len() + 1);
    ids.push(center);
    ids.extend_from_slice(neighbors);
    let proj: Vec<P2> = ids
        .iter()
        .map(|&j| {
            let d = points[j] - origin;
            [d.dot(e1), d.dot(e2)]
        })
        .collect();
    // Reject (nearly) collinear neighborhoods via the 2x2 scatter matrix.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let mean = proj.iter().fold([0.0, 0.0], |m, p| [m[0] + p[0], m[1] + p[1]]);
    let mean = [mean[0] / proj.len() as f64, mean[1] / proj.len() as f64];
    for p in &proj {
        let (x, y) = (p[0] - mean[0], p[1] - mean[1]);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if !(tr > 0.0) || det <= 1e-10 * tr * tr {
        return None;
    }
    let reach2 = proj
        .iter()
        .map(|p| p[0] * p[0] + p[1] * p[1])
        .fold(0.0_f64, f64::max);
    let fan: Vec<_> = delaunay_2d(&proj)
        .into_iter()
        .filter(|t| t.contains(&0))
        .filter(|t| {
            // Hull slivers have circumcircles far larger than the neighborhood.
            circumcircle(proj[t[0]], proj[t[1]], proj[t[2]])
                .map(|(_, r2)| r2 <= reach2)
                .unwrap_or(false)
        })
        .map(|t| {
            let g = t.map(|l| ids[l]);
            let p = t.map(|l| Vec3::new(proj[l][0], proj[l][1], 0.0));
            (g, p)
        })
        .collect();
    (!fan.is_empty()).then_some(fan)
}

pub(crate) fn assemble_cloud_operators(
    cloud: &PointCloud,
    neighbors: &[Vec<usize>],
    frames: &TangentFrames,
) -> Result<(CsrMatrix, DiagonalMass, AssemblyStats)> {
    let n = cloud.positions.len();
    let mut stats = AssemblyStats::default();
    let mut trip = Vec::with_capacity(n * 40);
    let mut mass = vec![0.0; n];
    for i in 0..n {
        match local_fan(i, &cloud.positions, &neighbors[i], &frames.e1[i], &frames.e2[i]) {
            Some(fan) => {
                for (ids, pts) in fan {
                    push_triangle_stiffness(&mut trip, ids, pts, 1.0 / 3.0, &mut stats);
                    let area = 0.5 * (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).norm();
                    for v in ids {
                        mass[v] += area / 9.0;
                    }
                }
            }
            None => {
                stats.fallback_points += 1;
                let nb = &neighbors[i];
                let w = 1.0 / nb.len().max(1) as f64;
                for &j in nb {
                    trip.push((i, j, -w));
                    trip.push((j, i, -w));
                }
                let near = nb.iter().take(3).map(|&j| (cloud.positions[j] - cloud.positions[i]).norm());
                let cnt = nb.len().clamp(1, 3) as f64;
                let d = near.sum::<f64>() / cnt;
                mass[i] += std::f64::consts::PI * d * d / 3.0;
            }
        }
    }
    if stats.fallback_points > 0 {
        log::warn!(
            "{} points had degenerate neighborhoods; used uniform weights",
            stats.fallback_points
        );
    }
    let lap = finalize_laplacian(n, trip)?;
    let mut mass = DiagonalMass(mass);
    stats.isolated_vertices = mass.fix_isolated();
    Ok((lap, mass, stats))
}

/// Laplacian and lumped mass for a point cloud (see the module docs for the construction).
pub fn build_point_cloud_operators(cloud: &PointCloud) -> Result<(CsrMatrix, DiagonalMass, AssemblyStats)> {
    cloud.validate()?;
    if cloud.k_neighbors < 3 {
        return Err(Error::InvalidInput("point-cloud operators need k_neighbors >= 3".into()));
    }
    let neighbors = knn(&cloud.positions, cloud.k_neighbors);
    let normals = match &cloud.normals {
        Some(n) => n.clone(),
        None => cloud
            .positions
            .iter()
            .zip(&neighbors)
            .map(|(p, nb)| covariance_normal(&cloud.positions, p, nb).unwrap_or_else(Vec3::z))
            .collect(),
    };
    let frames = TangentFrames::from_normals(normals);
    assemble_cloud_operators(cloud, &neighbors, &frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_small() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let nb = knn(&pts, 2);
        assert_eq!(nb[0], vec![1, 2]);
        assert_eq!(nb[2], vec![1, 3]);
        assert_eq!(nb[4], vec![3, 2]);
    }

    #[test]
    fn delaunay_of_square_with_center() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let tris = delaunay_2d(&pts);
        assert_eq!(tris.len(), 4);
        assert!(tris.iter().all(|t| t.contains(&4)));
        let area: f64 = tris
            .iter()
            .map(|t| {
                let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            })
            .sum();
        assert!((area - 1.0).abs() < 1e-12, "CCW and covering: {area}");
    }
}
