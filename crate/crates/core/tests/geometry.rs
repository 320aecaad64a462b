use diffnet_core::geometry::{
    icosphere, load_shape, normalize_shape, sample_point_cloud, save_shape, BumpySphere, BumpySphereParams,
    MirroredPair, MirroredPairParams, PointCloud, Shape, SurfaceMesh, Vec3,
};
use proptest::prelude::*;

fn edge_lengths(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut l: Vec<f64> = mesh
        .edges()
        .iter()
        .map(|[a, b]| (mesh.positions[*a] - mesh.positions[*b]).norm())
        .collect();
    l.sort_by(f64::total_cmp);
    l
}

fn jittered_sphere(seed: u64, scale: f64) -> Shape {
    let mut mesh = icosphere(1);
    let mut s = seed;
    for p in &mut mesh.positions {
        // splitmix-style jitter; reproducible without pulling a RNG into the strategy
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let j = ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2;
        *p = *p * (scale * (1.0 + j)) + Vec3::new(scale, -2.0 * scale, 0.5);
    }
    Shape::mesh(mesh)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn native_formats_round_trip_bit_exactly(seed in any::<u64>(), scale in 1e-3f64..1e3, ext in prop::sample::select(vec!["obj", "ply", "xyz"])) {
        let dir = tempfile::tempdir().unwrap();
        let mut shape = jittered_sphere(seed, scale);
        if ext == "xyz" {
            shape = Shape::cloud(PointCloud::new(shape.positions().to_vec(), None, 30).unwrap());
        }
        let path = dir.path().join(format!("s.{ext}"));
        save_shape(&shape, &path, None).unwrap();
        let back = load_shape(&path, None).unwrap();
        prop_assert_eq!(back.positions(), shape.positions());
        prop_assert_eq!(back.n_faces(), shape.n_faces());
    }

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), scale in 1e-2f64..1e2) {
        let mut shape = jittered_sphere(seed, scale);
        normalize_shape(&mut shape).unwrap();
        let once = shape.positions().to_vec();
        let max_r = once.iter().map(|p| p.norm()).fold(0.0, f64::max);
        prop_assert!((max_r - 1.0).abs() < 1e-12);
        normalize_shape(&mut shape).unwrap();
        for (a, b) in once.iter().zip(shape.positions()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn sampled_labels_come_from_a_vertex_of_the_source_face(seed in any::<u64>(), n in 1usize..400) {
        let bs = BumpySphere::new(BumpySphereParams { subdiv: 2, ..BumpySphereParams::default() }, seed % 1000).unwrap();
        let mesh = bs.mesh();
        let labels = bs.shape().vertex_labels.unwrap();
        let sampled = sample_point_cloud(&mesh, n, seed).unwrap();
        let transferred = sampled.transfer_labels(&labels);
        prop_assert_eq!(transferred.len(), n);
        for (i, l) in transferred.iter().enumerate() {
            let f = mesh.faces[sampled.source_face[i]];
            prop_assert!(f.iter().any(|&v| labels[v] == *l));
        }
    }

    #[test]
    fn mirrored_pairs_are_isometric(seed in 0u64..10_000) {
        let pair = MirroredPair::generate(&MirroredPairParams { subdiv: 2, ..MirroredPairParams::default() }, seed).unwrap();
        let a = edge_lengths(pair.original.as_mesh().unwrap());
        let b = edge_lengths(pair.mirrored.as_mesh().unwrap());
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn mirrored_pair_keeps_outward_normals() {
    let pair = MirroredPair::generate(&MirroredPairParams::default(), 4).unwrap();
    for s in [&pair.original, &pair.mirrored] {
        let m = s.as_mesh().unwrap();
        let c = m.positions.iter().fold(Vec3::zeros(), |a, p| a + p) / m.positions.len() as f64;
        let outward = (0..m.faces.len())
            .filter(|&f| {
                let [a, b, d] = m.faces[f];
                let centroid = (m.positions[a] + m.positions[b] + m.positions[d]) / 3.0;
                m.face_cross(f).dot(&(centroid - c)) > 0.0
            })
            .count();
        assert!(outward as f64 > 0.95 * m.faces.len() as f64);
    }
}
