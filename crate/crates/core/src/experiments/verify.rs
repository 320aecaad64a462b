//! Numerical verification suites: heat kernel, gradients, eigenbasis, invariances.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::report::{ExperimentReport, Threshold};
use crate::autodiff::{check_gradients, GradientMode, Tape, Tensor, Var};
use crate::geometry::{flat_grid, icosphere, BumpySphere, BumpySphereParams, MirroredPair, MirroredPairParams, Shape, SurfaceMesh, Vec3};
use crate::net::{
    featurize, forward, forward_vars, init_params, param_shapes, DiffusionNetParams, Head, InputMode, NetworkConfig,
};
use crate::operators::GeometryOperators;
use crate::rng;
use crate::spectral::{
    dense_eigenbasis, diffuse_implicit, diffuse_spectral, eigen_residuals, solve_eigenbasis, DenseHeatOracle,
    EigenOptions,
};
use crate::train::{fit, Dataset, FitOutputs, Task, TrainConfig};
use crate::{Error, Result};

const FD: &str = "central finite differences";
const HEAT: &str = "closed-form planar heat kernel (4 pi t)^-1 exp(-r^2 / 4t)";
const EXPM: &str = "dense matrix exponential oracle M^-1/2 exp(-t M^-1/2 L M^-1/2) M^1/2";
const SPHERE: &str = "analytic unit-sphere spectrum l(l+1)";
const EXACT: &str = "exact identity up to rounding";
const ORDER: &str = "second-order local error of one implicit Euler step";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    HeatKernel,
    Gradients,
    Eigen,
    Invariance,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::HeatKernel, Suite::Gradients, Suite::Eigen, Suite::Invariance];

    pub fn name(self) -> &'static str {
        match self {
            Suite::HeatKernel => "heat_kernel",
            Suite::Gradients => "gradients",
            Suite::Eigen => "eigen",
            Suite::Invariance => "invariance",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}; expected one of heat_kernel, gradients, eigen, invariance")))
    }
}

pub fn run_suite(suite: Suite) -> Result<ExperimentReport> {
    match suite {
        Suite::HeatKernel => heat_kernel_suite(&HeatKernelOptions::default()),
        Suite::Gradients => gradients_suite(),
        Suite::Eigen => eigen_suite(),
        Suite::Invariance => invariance_suite(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelOptions {
    pub grid: usize,
    pub t: f64,
    pub k: usize,
    /// Vertices within this distance of the source form the comparison region.
    pub interior_radius: f64,
    pub conservation_trials: usize,
}

impl Default for HeatKernelOptions {
    fn default() -> Self {
        HeatKernelOptions {
            grid: 101,
            t: 0.005,
            k: 256,
            interior_radius: 0.4,
            conservation_trials: 100,
        }
    }
}

/// Delta diffusion on a flat grid against the planar heat kernel, scheme equivalence
/// against the dense exponential, implicit-step convergence order, and mass conservation.
pub fn heat_kernel_suite(opts: &HeatKernelOptions) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("verify_heat_kernel", serde_json::to_value(opts)?);

    let mesh = flat_grid(opts.grid)?;
    let l = crate::operators::build_cotan_laplacian(&mesh)?.0;
    let mass = crate::operators::build_mass_matrix(&mesh)?.0;
    let basis = solve_eigenbasis(&l, mass.as_slice(), &EigenOptions::new(opts.k))?;
    let c = (opts.grid / 2) * opts.grid + opts.grid / 2;
    let src = mesh.positions[c];
    let (mut num, mut den) = (0.0, 0.0);
    for (v, p) in mesh.positions.iter().enumerate() {
        let r2 = (p - src).norm_squared();
        if r2.sqrt() > opts.interior_radius {
            continue;
        }
        // A unit-mass delta at c has spectral coefficients phi_i(c).
        let ut: f64 = (0..basis.k())
            .map(|i| (-basis.values[i] * opts.t).exp() * basis.vectors[(c, i)] * basis.vectors[(v, i)])
            .sum();
        let exact = (-r2 / (4.0 * opts.t)).exp() / (4.0 * std::f64::consts::PI * opts.t);
        num += mass.0[v] * (ut - exact).powi(2);
        den += mass.0[v] * exact * exact;
    }
    report.measure("delta_rel_l2_error", (num / den).sqrt(), "ratio", Threshold::AtMost { limit: 0.05 }, HEAT);
    report.measure("delta_seconds", started.elapsed().as_secs_f64(), "s", Threshold::AtMost { limit: 120.0 }, "runtime budget");

    scheme_equivalence(&mut report)?;
    conservation(&mut report, opts.conservation_trials)?;
    Ok(report.finish(started))
}

const LOW_FREQUENCY: f64 = 3.0;

fn small_meshes() -> Result<Vec<(&'static str, SurfaceMesh)>> {
    let bumpy = BumpySphere::new(
        BumpySphereParams {
            subdiv: 2,
            ..BumpySphereParams::default()
        },
        11,
    )?
    .mesh();
    let mut grid = flat_grid(15)?;
    let mut r = rng::seeded(5);
    for p in &mut grid.positions {
        p.x = 2.0 * p.x - 1.0;
        p.y = 2.0 * p.y - 1.0;
        p.z = 0.1 * r.gen_range(-1.0..1.0);
    }
    Ok(vec![("icosphere2", icosphere(2)), ("bumpy_sphere", bumpy), ("noisy_grid", grid)])
}

fn scheme_equivalence(report: &mut ExperimentReport) -> Result<()> {
    let mut worst_full: f64 = 0.0;
    let mut ratios = Vec::new();
    for (name, mesh) in small_meshes()? {
        let l = crate::operators::build_cotan_laplacian(&mesh)?.0;
        let mass = crate::operators::build_mass_matrix(&mesh)?.0;
        let m = mass.as_slice();
        let v = mesh.positions.len();
        let oracle = DenseHeatOracle::new(&l, m)?;
        let basis = dense_eigenbasis(&l, m, v)?;
        let mut r = rng::seeded(v as u64);
        let u = DMatrix::from_fn(v, 3, |_, _| r.gen_range(-1.0..1.0));
        for t in [1e-3, 0.05, 1.0] {
            let a = diffuse_spectral(&u, &[t; 3], &basis, m)?;
            let b = oracle.operator(t) * &u;
            worst_full = worst_full.max((a - b).abs().max());
        }
        // Low-frequency data (eigenvalues at most 3) keeps t * lambda <= 0.3, inside the
        // regime where the single-step error is quadratic in t.
        let low: Vec<usize> = (1..basis.k()).filter(|&i| basis.values[i] <= LOW_FREQUENCY).collect();
        if low.is_empty() {
            return Err(Error::InvalidInput(format!("{name}: no eigenvalue below {LOW_FREQUENCY}")));
        }
        let mut smooth = DMatrix::zeros(v, 1);
        for &i in &low {
            smooth.column_mut(0).axpy(r.gen_range(0.5..1.5), &basis.vectors.column(i), 1.0);
        }
        let err = |t: f64| -> Result<f64> {
            let a = diffuse_implicit(&smooth, &[t], &l, m)?;
            let b = oracle.operator(t) * &smooth;
            Ok((a - b).abs().max())
        };
        let (e1, e2, e3) = (err(0.1)?, err(0.05)?, err(0.025)?);
        report.row(serde_json::json!({ "mesh": name, "low_modes": low.len(), "ratio_0.1": e1 / e2, "ratio_0.05": e2 / e3 }));
        ratios.push(e1 / e2);
        ratios.push(e2 / e3);
    }
    report.measure("full_basis_vs_expm_max_abs", worst_full, "abs", Threshold::AtMost { limit: 1e-6 }, EXPM);
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    report.measure("implicit_halving_ratio_min", lo, "ratio", Threshold::Within { lo: 3.0, hi: 5.0 }, ORDER);
    report.measure("implicit_halving_ratio_max", hi, "ratio", Threshold::Within { lo: 3.0, hi: 5.0 }, ORDER);
    Ok(())
}

fn conservation(report: &mut ExperimentReport, trials: usize) -> Result<()> {
    let shape = Shape::mesh(
        BumpySphere::new(
            BumpySphereParams {
                subdiv: 2,
                ..BumpySphereParams::default()
            },
            3,
        )?
        .mesh(),
    );
    let ops = GeometryOperators::compute(&shape, 64)?;
    let m = ops.mass.as_slice();
    let total = |u: &DMatrix<f64>| -> f64 { (0..u.nrows()).map(|i| m[i] * u[(i, 0)]).sum() };
    let mut r = rng::seeded(17);
    let (mut worst_implicit, mut worst_spectral): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        let u = DMatrix::from_fn(ops.n_vertices(), 1, |_, _| r.gen_range(0.0..1.0));
        let t = 10f64.powf(r.gen_range(-4.0..1.0));
        let before = total(&u);
        let a = diffuse_implicit(&u, &[t], &ops.laplacian, m)?;
        let b = diffuse_spectral(&u, &[t], &ops.basis, m)?;
        worst_implicit = worst_implicit.max(((total(&a) - before) / before).abs());
        worst_spectral = worst_spectral.max(((total(&b) - before) / before).abs());
    }
    report.measure("conservation_implicit_rel", worst_implicit, "ratio", Threshold::AtMost { limit: 1e-10 }, EXACT);
    report.measure("conservation_spectral_rel", worst_spectral, "ratio", Threshold::AtMost { limit: 1e-10 }, EXACT);
    Ok(())
}

fn random_tensor(rows: usize, cols: usize, r: &mut rng::Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).expect("shape")
}

/// Parameters with every entry randomized, including `A`, biases and diffusion times.
pub fn randomized_params(config: &NetworkConfig, seed: u64) -> Result<DiffusionNetParams> {
    let base = init_params(config, seed)?;
    let mut r = rng::substream(seed, 0x7a9);
    let entries = base
        .iter()
        .map(|(name, t)| {
            let data = if name.ends_with("diffusion_time") {
                (0..t.len()).map(|_| r.gen_range(0.01..0.3)).collect()
            } else if name.ends_with(".weight") {
                t.data().to_vec()
            } else {
                let scale = if name.ends_with("gradient_features.A") { 1.0 } else { 0.2 };
                (0..t.len()).map(|_| scale * r.gen_range(-1.0..1.0)).collect()
            };
            Tensor::new(t.shape().to_vec(), data).map(|t| (name.to_string(), t))
        })
        .collect::<Result<Vec<_>>>()?;
    DiffusionNetParams::from_entries(config.clone(), entries)
}

/// Finite-difference checks of every tape op and of two complete small networks.
pub fn gradients_suite() -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("verify_gradients", serde_json::json!({ "h_rel": 1e-5, "tolerance": 1e-4 }));
    let shape = Shape::mesh(icosphere(1));
    let ops = GeometryOperators::compute(&shape, 20)?;
    let v = ops.n_vertices();
    let mut r = rng::seeded(2024);
    let x = random_tensor(6, 5, &mut r);
    let y = random_tensor(6, 5, &mut r);
    let tol = Threshold::AtMost { limit: 1e-4 };
    let h = 1e-5;

    type Case<'a> = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape<'a>, &[Var]) -> Result<Var> + 'a>);
    fn project<'a>(t: &mut Tape<'a>, y: Var, seed: u64) -> Result<Var> {
        let (rows, cols) = t.value(y)?.dims2();
        let mut r = rng::seeded(seed);
        let w = t.constant(random_tensor(rows, cols, &mut r));
        let p = t.mul(y, w)?;
        t.sum(p)
    }
    let weights: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
    let tau = Tensor::vector((0..4).map(|_| r.gen_range(0.01..1.0)).collect());
    let a_real = random_tensor(4, 4, &mut r).map(|z| 0.5 * z);
    let a_complex = Tensor::new(vec![2, 4, 4], random_tensor(8, 4, &mut r).map(|z| 0.5 * z).into_data())?;
    let w8 = random_tensor(9, 8, &mut r);
    let ops_ref = &ops;
    let cases: Vec<Case> = vec![
        ("matmul", vec![x.clone(), random_tensor(5, 3, &mut r)], Box::new(|t, v| { let z = t.matmul(v[0], v[1])?; project(t, z, 1) })),
        ("add", vec![x.clone(), y.clone()], Box::new(|t, v| { let z = t.add(v[0], v[1])?; project(t, z, 2) })),
        ("add_bias", vec![x.clone(), Tensor::vector(vec![0.1, 0.2, 0.3, 0.4, 0.5])], Box::new(|t, v| { let z = t.add_bias(v[0], v[1])?; project(t, z, 3) })),
        ("scale", vec![x.clone()], Box::new(|t, v| { let z = t.scale(v[0], -1.7)?; project(t, z, 4) })),
        ("mul", vec![x.clone(), y.clone()], Box::new(|t, v| { let z = t.mul(v[0], v[1])?; project(t, z, 5) })),
        ("sum", vec![x.clone()], Box::new(|t, v| { let z = t.mul(v[0], v[0])?; t.sum(z) })),
        ("concat", vec![x.clone(), y.clone()], Box::new(|t, v| { let z = t.concat(&[v[0], v[1]])?; project(t, z, 6) })),
        ("relu", vec![x.clone()], Box::new(|t, v| { let z = t.relu(v[0])?; project(t, z, 7) })),
        ("tanh", vec![x.clone()], Box::new(|t, v| { let z = t.tanh(v[0])?; project(t, z, 8) })),
        ("dropout", vec![x.clone()], Box::new(|t, v| { let z = t.dropout(v[0], 0.4, true, 77)?; project(t, z, 9) })),
        ("row_softmax", vec![x.clone()], Box::new(|t, v| { let z = t.row_softmax(v[0])?; project(t, z, 10) })),
        ("log", vec![x.map(|z| z.abs() + 0.3)], Box::new(|t, v| { let z = t.log(v[0])?; project(t, z, 11) })),
        ("mean_rows_weighted", vec![x.clone()], Box::new(move |t, v| { let z = t.mean_rows(v[0], Some(&weights))?; project(t, z, 12) })),
        ("mean_rows", vec![x.clone()], Box::new(|t, v| { let z = t.mean_rows(v[0], None)?; project(t, z, 13) })),
        ("gather_rows", vec![x.clone()], Box::new(|t, v| { let z = t.gather_rows(v[0], &[5, 0, 5, 3])?; project(t, z, 14) })),
        ("row_average", vec![x.clone()], Box::new(|t, v| { let z = t.row_average(v[0], vec![vec![0, 1, 2], vec![3, 4, 5], vec![1, 5, 2]])?; project(t, z, 15) })),
        ("cross_entropy", vec![x.clone()], Box::new(|t, v| t.cross_entropy(v[0], &[0, 4, 2, 2, 1, 3], 0.2))),
        ("sparse_apply", vec![random_tensor(v, 3, &mut r)], Box::new(move |t, vv| { let z = t.sparse_apply(&ops_ref.laplacian, vv[0])?; project(t, z, 16) })),
        ("sparse_apply_complex", vec![random_tensor(v, 3, &mut r)], Box::new(move |t, vv| { let z = t.sparse_apply_complex(&ops_ref.gradient, vv[0])?; project(t, z, 17) })),
        ("spectral_diffusion", vec![random_tensor(v, 4, &mut r), tau], Box::new(move |t, vv| { let z = t.spectral_diffusion(vv[0], vv[1], &ops_ref.basis, ops_ref.mass.as_slice())?; project(t, z, 18) })),
        ("gradient_features_real", vec![w8.clone(), a_real], Box::new(|t, v| { let z = t.gradient_features(v[0], v[1], GradientMode::Real)?; project(t, z, 19) })),
        ("gradient_features_complex", vec![w8, a_complex], Box::new(|t, v| { let z = t.gradient_features(v[0], v[1], GradientMode::Complex)?; project(t, z, 20) })),
    ];
    for (name, inputs, f) in &cases {
        let rep = check_gradients(inputs, h, |t, v| f(t, v))?;
        report.measure(&format!("fd_{name}"), rep.max_relative_error, "rel", tol, FD);
    }

    let network_started = Instant::now();
    for (label, mode, head) in [
        ("network_real_segmentation", GradientMode::Real, Head::VertexSoftmax),
        ("network_complex_classification", GradientMode::Complex, Head::GlobalMeanSoftmax),
    ] {
        let mut config = NetworkConfig::new(InputMode::Xyz, head, mode, 3);
        config.width = 16;
        config.n_blocks = 2;
        config.k = ops.k();
        let params = randomized_params(&config, 99)?;
        let features = featurize(&shape, &ops, &config)?;
        let inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
        let targets: Vec<usize> = match head {
            Head::GlobalMeanSoftmax => vec![1],
            _ => (0..v).map(|i| i % 3).collect(),
        };
        let rep = check_gradients(&inputs, h, |t, vars| {
            let logits = forward_vars(t, &config, vars, &ops, None, &features, false, 0)?;
            t.cross_entropy(logits, &targets, 0.1)
        })?;
        let names = param_shapes(&config);
        for (i, e) in rep.relative_errors.iter().enumerate() {
            if *e > 1e-4 {
                log::warn!("{label}: {} relative FD error {e:e}", names[i].0);
            }
        }
        report.measure(&format!("fd_{label}"), rep.max_relative_error, "rel", tol, FD);
        report.measure(&format!("{label}_parameter_tensors"), rep.relative_errors.len() as f64, "count", Threshold::None, FD);
    }
    report.measure(
        "network_checks_seconds",
        network_started.elapsed().as_secs_f64(),
        "s",
        Threshold::AtMost { limit: 60.0 },
        "runtime budget",
    );
    Ok(report.finish(started))
}

/// Residuals, orthonormality, the sphere spectrum, and kernel multiplicity on disconnected meshes.
pub fn eigen_suite() -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("verify_eigen", serde_json::json!({ "residual_tol": 1e-7, "orthonormality_tol": 1e-6 }));
    let mut worst_res: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;

    // Sphere (Krylov path above the dense threshold).
    let sphere = Shape::mesh(icosphere(3));
    let ops = GeometryOperators::compute(&sphere, 32)?;
    worst_res = worst_res.max(eigen_residuals(&ops.laplacian, ops.mass.as_slice(), &ops.basis).into_iter().fold(0.0, f64::max));
    worst_orth = worst_orth.max(ops.basis.orthonormality_error(ops.mass.as_slice()));
    let l1 = (1..4).map(|i| (ops.basis.values[i] - 2.0).abs() / 2.0).fold(0.0, f64::max);
    let l2 = (4..9).map(|i| (ops.basis.values[i] - 6.0).abs() / 6.0).fold(0.0, f64::max);
    report.measure("sphere_l1_rel_error", l1, "rel", Threshold::AtMost { limit: 0.05 }, SPHERE);
    report.measure("sphere_l2_rel_error", l2, "rel", Threshold::AtMost { limit: 0.05 }, SPHERE);
    report.measure("sphere_lambda0", ops.basis.values[0].abs(), "abs", Threshold::AtMost { limit: 1e-8 }, EXACT);

    // Flat grid with a boundary and a point cloud.
    let grid = Shape::mesh(flat_grid(41)?);
    let gops = GeometryOperators::compute(&grid, 64)?;
    worst_res = worst_res.max(eigen_residuals(&gops.laplacian, gops.mass.as_slice(), &gops.basis).into_iter().fold(0.0, f64::max));
    worst_orth = worst_orth.max(gops.basis.orthonormality_error(gops.mass.as_slice()));
    let cloud = crate::geometry::sample_point_cloud(&icosphere(3), 1200, 4)?.into_shape(None);
    let cops = GeometryOperators::compute(&cloud, 32)?;
    worst_res = worst_res.max(eigen_residuals(&cops.laplacian, cops.mass.as_slice(), &cops.basis).into_iter().fold(0.0, f64::max));
    worst_orth = worst_orth.max(cops.basis.orthonormality_error(cops.mass.as_slice()));
    let cl1 = (1..4).map(|i| (cops.basis.values[i] - 2.0).abs() / 2.0).fold(0.0, f64::max);
    report.measure("cloud_sphere_l1_rel_error", cl1, "rel", Threshold::None, SPHERE);

    // Two disjoint spheres: one zero eigenvalue per component, on both solver paths.
    for (label, subdiv) in [("disconnected_dense", 2usize), ("disconnected_krylov", 3)] {
        let a = icosphere(subdiv);
        let n = a.positions.len();
        let mut positions = a.positions.clone();
        positions.extend(a.positions.iter().map(|p| p + Vec3::new(3.0, 0.0, 0.0)));
        let mut faces = a.faces.clone();
        faces.extend(a.faces.iter().map(|f| [f[0] + n, f[1] + n, f[2] + n]));
        let shape = Shape::mesh(SurfaceMesh::new(positions, faces)?);
        let dops = GeometryOperators::compute(&shape, 8)?;
        let zeros = dops.basis.values.iter().filter(|l| l.abs() <= 1e-8).count();
        report.measure(&format!("{label}_zero_eigenvalues"), zeros as f64, "count", Threshold::Within { lo: 2.0, hi: 2.0 }, EXACT);
        worst_res = worst_res.max(eigen_residuals(&dops.laplacian, dops.mass.as_slice(), &dops.basis).into_iter().fold(0.0, f64::max));
        worst_orth = worst_orth.max(dops.basis.orthonormality_error(dops.mass.as_slice()));
    }
    report.measure("max_relative_residual", worst_res, "rel", Threshold::AtMost { limit: 1e-7 }, EXACT);
    report.measure("max_orthonormality_error", worst_orth, "abs", Threshold::AtMost { limit: 1e-6 }, EXACT);
    Ok(report.finish(started))
}

fn eval_logits(shape: &Shape, ops: &GeometryOperators, params: &DiffusionNetParams, features: Option<&Tensor>) -> Result<Tensor> {
    let owned;
    let features = match features {
        Some(f) => f,
        None => {
            owned = featurize(shape, ops, &params.config)?;
            &owned
        }
    };
    let faces = shape.as_mesh().map(|m| m.faces.as_slice());
    let mut tape = Tape::new();
    let pass = forward(&mut tape, params, ops, faces, features, false, 0)?;
    Ok(tape.value(pass.logits)?.clone())
}

fn bumpy(subdiv: usize, seed: u64) -> Result<Shape> {
    Ok(BumpySphere::new(
        BumpySphereParams {
            subdiv,
            ..BumpySphereParams::default()
        },
        seed,
    )?
    .shape())
}

/// Permutation equivariance, tangent-frame invariance, rigid-motion invariance with
/// intrinsic input, and mirror behaviour of real versus complex gradient features.
pub fn invariance_suite() -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("verify_invariance", serde_json::json!({}));
    let shape = bumpy(2, 21)?;
    let k = 32;
    let ops = GeometryOperators::compute(&shape, k)?;
    let v = ops.n_vertices();
    let mut r = rng::seeded(31);

    let mut perm: Vec<usize> = (0..v).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
    let pshape = permute_shape(&shape, &perm)?;
    let pops = ops.permute(&perm);
    let mut worst_perm: f64 = 0.0;
    let mut worst_frame: f64 = 0.0;
    let mut frames = ops.frames.clone();
    for i in 0..v {
        frames.rotate(i, r.gen_range(0.0..std::f64::consts::TAU));
    }
    let fops = ops.with_frames(&shape, frames)?;
    for (mode, head) in [
        (GradientMode::Real, Head::VertexSoftmax),
        (GradientMode::Complex, Head::VertexSoftmax),
        (GradientMode::Complex, Head::GlobalMeanSoftmax),
    ] {
        let mut config = NetworkConfig::new(InputMode::Xyz, head, mode, 4);
        config.width = 16;
        config.n_blocks = 2;
        config.k = k;
        let params = randomized_params(&config, 5)?;
        let base = eval_logits(&shape, &ops, &params, None)?;
        let permuted = eval_logits(&pshape, &pops, &params, None)?;
        let expected = if head == Head::GlobalMeanSoftmax {
            base.clone()
        } else {
            Tensor::from_fn(v, 4, |i, c| base.at(perm[i], c))
        };
        worst_perm = worst_perm.max(permuted.max_abs_diff(&expected));
        let rotated = eval_logits(&shape, &fops, &params, None)?;
        worst_frame = worst_frame.max(rotated.max_abs_diff(&base));
    }
    report.measure("permutation_max_abs", worst_perm, "abs", Threshold::AtMost { limit: 1e-10 }, EXACT);
    report.measure("tangent_frame_max_abs", worst_frame, "abs", Threshold::AtMost { limit: 1e-8 }, EXACT);

    // Rigid motion with intrinsic (hks) input, every operator recomputed.
    let rot = crate::train::rotation_matrix(crate::train::Augmentation::RotFull, 8);
    let offset = Vec3::new(0.3, -1.2, 2.0);
    let mut moved = shape.clone();
    moved.map_positions(|p| rot * p + offset);
    let mops = GeometryOperators::compute(&moved, k)?;
    let mut config = NetworkConfig::new(InputMode::Hks, Head::VertexSoftmax, GradientMode::Complex, 4);
    config.width = 16;
    config.n_blocks = 2;
    config.k = k;
    let params = randomized_params(&config, 6)?;
    let a = eval_logits(&shape, &ops, &params, None)?;
    let b = eval_logits(&moved, &mops, &params, None)?;
    report.measure("rigid_hks_max_abs", a.max_abs_diff(&b), "abs", Threshold::AtMost { limit: 1e-3 }, "intrinsic pipeline, limited by eigensolver tolerance");

    // Mirrored pair: identical intrinsic geometry, opposite orientation.
    let pair = MirroredPair::generate(
        &MirroredPairParams {
            subdiv: 2,
            ..MirroredPairParams::default()
        },
        3,
    )?;
    let o_ops = GeometryOperators::compute(&pair.original, k)?;
    let m_ops = GeometryOperators::compute(&pair.mirrored, k)?;
    config.gradient_mode = GradientMode::Real;
    let params = randomized_params(&config, 7)?;
    let a = eval_logits(&pair.original, &o_ops, &params, None)?;
    let b = eval_logits(&pair.mirrored, &m_ops, &params, None)?;
    report.measure("mirror_real_max_abs", a.max_abs_diff(&b), "abs", Threshold::AtMost { limit: 1e-8 }, "real A cannot detect conjugation of gradients");

    let mut cconfig = config.clone();
    cconfig.gradient_mode = GradientMode::Complex;
    cconfig.n_out = 2;
    let train = Dataset::new(vec![
        crate::train::Sample::from_shape("original", pair.original.clone(), o_ops.clone(), Task::VertexSegmentation)?,
        crate::train::Sample::from_shape("mirrored", pair.mirrored.clone(), m_ops.clone(), Task::VertexSegmentation)?,
    ]);
    let tc = TrainConfig {
        epochs: 30,
        seed: 1,
        ..TrainConfig::default()
    };
    let trained = fit(&train, None, &cconfig, &tc, &FitOutputs::default())?.params;
    let a = crate::net::predict(&cconfig, &eval_logits(&pair.original, &o_ops, &trained, None)?);
    let b = crate::net::predict(&cconfig, &eval_logits(&pair.mirrored, &m_ops, &trained, None)?);
    report.measure(
        "mirror_complex_trained_max_abs",
        a.max_abs_diff(&b),
        "abs",
        Threshold::Above { limit: 1e-3 },
        "complex A rotates gradients, which reflection reverses",
    );
    Ok(report.finish(started))
}

/// Relabel the vertices of a mesh shape: new vertex `i` is old vertex `perm[i]`.
pub fn permute_shape(shape: &Shape, perm: &[usize]) -> Result<Shape> {
    let mesh = shape
        .as_mesh()
        .ok_or_else(|| Error::InvalidInput("permute_shape expects a mesh".into()))?;
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let positions = perm.iter().map(|&o| mesh.positions[o]).collect();
    let faces = mesh.faces.iter().map(|f| [inverse[f[0]], inverse[f[1]], inverse[f[2]]]).collect();
    let mut out = Shape::mesh(SurfaceMesh::new(positions, faces)?);
    if let Some(l) = &shape.vertex_labels {
        out = out.with_vertex_labels(perm.iter().map(|&o| l[o]).collect())?;
    }
    Ok(out)
}
