use diffnet_core::geometry::{icosphere, BumpySphere, BumpySphereParams, PointCloud, Shape};
use diffnet_core::operators::GeometryOperators;
use diffnet_core::spectral::{
    compute_hks, default_hks_times, dense_eigenbasis, diffuse_implicit, diffuse_spectral, dirichlet_energy, DenseHeatOracle,
    EigenBasis,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_bumpy(seed: u64) -> Shape {
    BumpySphere::new(
        BumpySphereParams {
            subdiv: 2,
            ..BumpySphereParams::default()
        },
        seed,
    )
    .unwrap()
    .shape()
}

fn random_matrix(rows: usize, cols: usize, seed: u64, lo: f64) -> DMatrix<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(lo..1.0))
}

fn m_norm(u: &DMatrix<f64>, m: &[f64]) -> f64 {
    (0..u.nrows()).map(|i| m[i] * u[(i, 0)] * u[(i, 0)]).sum::<f64>().sqrt()
}

fn total(u: &DMatrix<f64>, m: &[f64], c: usize) -> f64 {
    (0..u.nrows()).map(|i| m[i] * u[(i, c)]).sum()
}

fn project(u: &DMatrix<f64>, basis: &EigenBasis, m: &[f64]) -> DMatrix<f64> {
    let mu = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| m[i] * u[(i, j)]);
    &basis.vectors * (basis.vectors.transpose() * mu)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn both_schemes_conserve_heat(seed in any::<u64>(), log_t in -4.0f64..1.0, cloud in any::<bool>()) {
        let mesh = small_bumpy(seed % 50);
        let shape = if cloud {
            Shape::cloud(PointCloud::new(mesh.positions().to_vec(), None, 16).unwrap())
        } else {
            mesh
        };
        let ops = GeometryOperators::compute(&shape, 24).unwrap();
        let m = ops.mass.as_slice();
        let u = random_matrix(ops.n_vertices(), 3, seed, 0.0);
        let t = [10f64.powf(log_t), 0.5 * 10f64.powf(log_t), 0.0];
        let a = diffuse_implicit(&u, &t, &ops.laplacian, m).unwrap();
        let b = diffuse_spectral(&u, &t, &ops.basis, m).unwrap();
        for c in 0..3 {
            let before = total(&u, m, c);
            prop_assert!(((total(&a, m, c) - before) / before).abs() <= 1e-10);
            prop_assert!(((total(&b, m, c) - before) / before).abs() <= 1e-10);
        }
    }

    #[test]
    fn spectral_diffusion_dissipates_energy_monotonically(seed in any::<u64>()) {
        let shape = small_bumpy(seed % 50);
        let ops = GeometryOperators::compute(&shape, 32).unwrap();
        let m = ops.mass.as_slice();
        let u = random_matrix(ops.n_vertices(), 1, seed, -1.0);
        let projected = project(&u, &ops.basis, m);
        let mut previous = dirichlet_energy(&ops.laplacian, projected.as_slice());
        for t in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let ut = diffuse_spectral(&u, &[t], &ops.basis, m).unwrap();
            let e = dirichlet_energy(&ops.laplacian, ut.as_slice());
            prop_assert!(e <= previous * (1.0 + 1e-10) + 1e-14, "t = {t}: {e} > {previous}");
            previous = e;
        }
    }

    #[test]
    fn hks_is_positive_and_decreasing_in_time(seed in 0u64..50) {
        let ops = GeometryOperators::compute(&small_bumpy(seed), 32).unwrap();
        let times = default_hks_times();
        let hks = compute_hks(&ops.basis, &times).unwrap();
        let values = hks.values;
        for i in 0..values.nrows() {
            for j in 0..times.len() {
                prop_assert!(values[(i, j)] > 0.0);
                if j > 0 {
                    prop_assert!(values[(i, j)] <= values[(i, j - 1)] * (1.0 + 1e-12));
                }
            }
        }
    }
}

#[test]
fn spectral_diffusion_at_zero_time_is_basis_projection() {
    let ops = GeometryOperators::compute(&small_bumpy(1), 16).unwrap();
    let m = ops.mass.as_slice();
    let u = random_matrix(ops.n_vertices(), 2, 3, -1.0);
    let zero = diffuse_spectral(&u, &[0.0, 0.0], &ops.basis, m).unwrap();
    assert!((zero - project(&u, &ops.basis, m)).amax() < 1e-12);
}

#[test]
fn implicit_step_converges_to_exact_diffusion_at_second_order() {
    let shape = small_bumpy(4);
    let ops = GeometryOperators::compute(&shape, 16).unwrap();
    let m = ops.mass.as_slice();
    let full = dense_eigenbasis(&ops.laplacian, m, ops.n_vertices()).unwrap();
    // Low-frequency data: t * lambda stays small for every mode present.
    let mut u = DMatrix::zeros(ops.n_vertices(), 1);
    for i in 1..full.k() {
        if full.values[i] <= 20.0 {
            u.column_mut(0).axpy(1.0 / i as f64, &full.vectors.column(i), 1.0);
        }
    }
    let err = |t: f64| {
        let a = diffuse_implicit(&u, &[t], &ops.laplacian, m).unwrap();
        let b = diffuse_spectral(&u, &[t], &full, m).unwrap();
        m_norm(&(a - b), m)
    };
    let errors: Vec<f64> = [1e-2, 5e-3, 2.5e-3, 1.25e-3].iter().map(|&t| err(t)).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "halving ratio {ratio} from {errors:?}");
    }
}

#[test]
fn truncation_error_is_nonincreasing_in_k() {
    let mesh = icosphere(2);
    let shape = Shape::mesh(mesh);
    let ops = GeometryOperators::compute(&shape, 8).unwrap();
    let m = ops.mass.as_slice();
    let v = ops.n_vertices();
    let full = dense_eigenbasis(&ops.laplacian, m, v).unwrap();
    let oracle = DenseHeatOracle::new(&ops.laplacian, m).unwrap();
    let u = random_matrix(v, 1, 8, -1.0);
    for t in [1e-3, 1e-2, 0.1] {
        let exact = oracle.operator(t) * &u;
        let mut previous = f64::INFINITY;
        for k in [1, 2, 4, 8, 16, 32, 64, 128, v] {
            let basis = full.truncated(k).unwrap();
            let e = m_norm(&(diffuse_spectral(&u, &[t], &basis, m).unwrap() - &exact), m);
            assert!(e <= previous * (1.0 + 1e-9) + 1e-13, "t = {t}, k = {k}: {e} > {previous}");
            previous = e;
        }
        assert!(previous < 1e-9);
    }
}
