//! Desk-scale training experiments on synthetic shapes.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{ExperimentReport, Threshold};
use crate::geometry::{
    midpoint_refine, normalize_shape, Discretization, sample_point_cloud, BumpySphere, BumpySphereParams, MirroredPair, MirroredPairParams,
    Shape,
};
use crate::net::{DiffusionMode, GradientFeatureMode, GradientMode, Head, InputMode, NetworkConfig};
use crate::parallel::parallel_map;
use crate::rng::derive_seed;
use crate::train::{evaluate, fit, Augmentation, Dataset, FitOutputs, Sample, Task, TrainConfig};
use crate::{Error, Result};

const TREND: &str = "desk-scale trend oracle";
const REPRO: &str = "desk-scale reproduction";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Orientation,
    Ablation,
    EigSweep,
    Robustness,
}

impl FromStr for ExperimentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
            Error::Config(format!("unknown experiment {s:?}; expected orientation, ablation, eig_sweep or robustness"))
        })
    }
}

/// Run an experiment from an optional JSON config (missing fields take desk-scale defaults).
pub fn run_experiment(name: ExperimentName, config: Option<serde_json::Value>) -> Result<ExperimentReport> {
    fn parse<T: for<'de> Deserialize<'de> + Default>(v: Option<serde_json::Value>) -> Result<T> {
        match v {
            Some(v) => serde_json::from_value(v).map_err(|e| Error::Config(format!("experiment config: {e}"))),
            None => Ok(T::default()),
        }
    }
    match name {
        ExperimentName::Orientation => orientation(&parse(config)?),
        ExperimentName::Ablation => ablation(&parse(config)?),
        ExperimentName::EigSweep => eig_sweep(&parse(config)?),
        ExperimentName::Robustness => robustness(&parse(config)?),
    }
}

/// A named toy shape with its generator, for querying labels at new points.
pub type ToyShape = (String, BumpySphere, Shape);

/// Bumpy-sphere segmentation: every vertex is labelled with its nearest bump's type, or
/// background when it lies outside every bump's label radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTask {
    pub n_train: usize,
    pub n_test: usize,
    pub bumps: BumpySphereParams,
}

impl Default for ToyTask {
    fn default() -> Self {
        ToyTask {
            n_train: 16,
            n_test: 4,
            bumps: BumpySphereParams {
                label_radius: 6.0,
                ..BumpySphereParams::default()
            },
        }
    }
}

impl ToyTask {
    pub fn n_classes(&self) -> usize {
        self.bumps.bumps.len() + 1
    }

    /// Normalized training and test spheres for one data seed.
    pub fn generate(&self, seed: u64) -> Result<(Vec<ToyShape>, Vec<ToyShape>)> {
        let make = |split: &str, i: usize| -> Result<ToyShape> {
            let tag = if split == "train" { i as u64 } else { 1_000_000 + i as u64 };
            let bs = BumpySphere::new(self.bumps.clone(), derive_seed(seed, tag))?;
            let mut shape = bs.shape();
            normalize_shape(&mut shape)?;
            Ok((format!("{split}_{i}"), bs, shape))
        };
        let train = (0..self.n_train).map(|i| make("train", i)).collect::<Result<Vec<_>>>()?;
        let test = (0..self.n_test).map(|i| make("test", i)).collect::<Result<Vec<_>>>()?;
        Ok((train, test))
    }

    /// Training and test datasets with `k` eigenpairs.
    pub fn datasets(&self, seed: u64, k: usize) -> Result<(Dataset, Dataset)> {
        let (train, test) = self.generate(seed)?;
        let strip = |v: Vec<ToyShape>| v.into_iter().map(|(n, _, s)| (n, s)).collect();
        Ok((
            Dataset::build(strip(train), k, Task::VertexSegmentation)?,
            Dataset::build(strip(test), k, Task::VertexSegmentation)?,
        ))
    }
}

fn toy_network(task: &ToyTask) -> NetworkConfig {
    let mut n = NetworkConfig::new(InputMode::Hks, Head::VertexSoftmax, GradientMode::Real, task.n_classes());
    n.width = 32;
    n
}

fn toy_train() -> TrainConfig {
    TrainConfig {
        epochs: 100,
        eval_every: 25,
        ..TrainConfig::default()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientationConfig {
    pub pair: MirroredPairParams,
    pub n_train_pairs: usize,
    pub n_test_pairs: usize,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        let mut network = NetworkConfig::new(InputMode::Hks, Head::VertexSoftmax, GradientMode::Complex, 2);
        network.width = 32;
        OrientationConfig {
            pair: MirroredPairParams::default(),
            n_train_pairs: 4,
            n_test_pairs: 2,
            network,
            train: TrainConfig {
                epochs: 60,
                eval_every: 20,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

/// Left/right segmentation of mirrored shape pairs with complex versus real `A`.
pub fn orientation(cfg: &OrientationConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("orientation", serde_json::to_value(cfg)?);
    let pairs = |offset: u64, n: usize| -> Result<Vec<(String, Shape)>> {
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let p = MirroredPair::generate(&cfg.pair, derive_seed(cfg.seed, offset + i as u64))?;
            for (tag, mut s) in [("original", p.original), ("mirrored", p.mirrored)] {
                normalize_shape(&mut s)?;
                out.push((format!("pair{}_{tag}", offset + i as u64), s));
            }
        }
        Ok(out)
    };
    let k = cfg.network.k;
    let train = Dataset::build(pairs(0, cfg.n_train_pairs)?, k, Task::VertexSegmentation)?;
    let test = Dataset::build(pairs(1_000, cfg.n_test_pairs)?, k, Task::VertexSegmentation)?;
    let mut accs = Vec::new();
    for mode in [GradientMode::Complex, GradientMode::Real] {
        let mut network = cfg.network.clone();
        network.gradient_mode = mode;
        let tc = TrainConfig {
            seed: cfg.seed,
            ..cfg.train.clone()
        };
        let result = fit(&train, Some(&test), &network, &tc, &FitOutputs::default())?;
        let acc = result.final_test.map_or(f64::NAN, |m| m.accuracy);
        let label = match mode {
            GradientMode::Complex => "complex",
            GradientMode::Real => "real",
        };
        report.row(serde_json::json!({ "gradient_mode": label, "test_acc": acc, "train_acc": result.final_train_acc() }));
        accs.push(acc);
    }
    report.measure("complex_test_acc", accs[0], "fraction", Threshold::AtLeast { limit: 0.95 }, REPRO);
    report.measure("real_test_acc", accs[1], "fraction", Threshold::Within { lo: 0.40, hi: 0.60 }, REPRO);
    report.measure("seconds", started.elapsed().as_secs_f64(), "s", Threshold::AtMost { limit: 900.0 }, "runtime budget");
    Ok(report.finish(started))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "arm")]
pub enum AblationArm {
    Full,
    NoDiffusion,
    FixedTime { t: f64 },
    NoGradientFeatures,
    /// Gradient features with `A` frozen at its random initialization.
    UnlearnedGradientFeatures,
}

impl AblationArm {
    pub fn label(&self) -> String {
        match self {
            AblationArm::Full => "full".into(),
            AblationArm::NoDiffusion => "no_diffusion".into(),
            AblationArm::FixedTime { t } => format!("fixed_time_{t}"),
            AblationArm::NoGradientFeatures => "no_gradient_features".into(),
            AblationArm::UnlearnedGradientFeatures => "unlearned_gradient_features".into(),
        }
    }

    pub fn apply(&self, base: &NetworkConfig) -> NetworkConfig {
        let mut n = base.clone();
        match *self {
            AblationArm::Full => {}
            AblationArm::NoDiffusion => n.diffusion = DiffusionMode::Disabled,
            AblationArm::FixedTime { t } => n.diffusion = DiffusionMode::Fixed { t },
            AblationArm::NoGradientFeatures => n.gradient_features = GradientFeatureMode::Disabled,
            AblationArm::UnlearnedGradientFeatures => n.gradient_features = GradientFeatureMode::Frozen,
        }
        n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub task: ToyTask,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub arms: Vec<AblationArm>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let task = ToyTask::default();
        AblationConfig {
            network: toy_network(&task),
            task,
            train: toy_train(),
            seeds: vec![0, 1, 2],
            arms: vec![
                AblationArm::Full,
                AblationArm::NoDiffusion,
                AblationArm::FixedTime { t: 0.1 },
                AblationArm::FixedTime { t: 0.5 },
                AblationArm::NoGradientFeatures,
                AblationArm::UnlearnedGradientFeatures,
            ],
        }
    }
}

/// Test accuracy of `network` on the toy task for one seed: data, initialization and shuffling.
fn toy_run(train: &Dataset, test: &Dataset, network: &NetworkConfig, base: &TrainConfig, seed: u64) -> Result<(f64, f64)> {
    let tc = TrainConfig {
        seed,
        ..base.clone()
    };
    let r = fit(train, Some(test), network, &tc, &FitOutputs::default())?;
    Ok((r.final_test.map_or(f64::NAN, |m| m.accuracy), r.final_train_acc()))
}

/// Every architecture variant on the toy task, averaged over seeds.
pub fn ablation(cfg: &AblationConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("ablation", serde_json::to_value(cfg)?);
    if cfg.seeds.is_empty() || cfg.arms.is_empty() {
        return Err(Error::Config("ablation needs at least one seed and one arm".into()));
    }
    let mut per_arm = vec![Vec::new(); cfg.arms.len()];
    for &seed in &cfg.seeds {
        let (train, test) = cfg.task.datasets(seed, cfg.network.k)?;
        for (a, arm) in cfg.arms.iter().enumerate() {
            let (acc, train_acc) = toy_run(&train, &test, &arm.apply(&cfg.network), &cfg.train, seed)?;
            log::info!("ablation {} seed {seed}: test {acc:.4}", arm.label());
            report.row(serde_json::json!({ "arm": arm.label(), "seed": seed, "test_acc": acc, "train_acc": train_acc }));
            per_arm[a].push(acc);
        }
    }
    let means: Vec<f64> = per_arm.iter().map(|v| mean(v)).collect();
    for (arm, m) in cfg.arms.iter().zip(&means) {
        report.measure(&format!("{}_mean_test_acc", arm.label()), *m, "fraction", Threshold::None, REPRO);
    }
    let find = |want: AblationArm| cfg.arms.iter().position(|a| *a == want).map(|i| means[i]);
    if let Some(full) = find(AblationArm::Full) {
        if let Some(nd) = find(AblationArm::NoDiffusion) {
            report.measure("full_minus_no_diffusion", full - nd, "fraction", Threshold::AtLeast { limit: 0.10 }, TREND);
        }
        if let Some(ng) = find(AblationArm::NoGradientFeatures) {
            report.measure("full_minus_no_gradient_features", full - ng, "fraction", Threshold::AtLeast { limit: 0.02 }, TREND);
        }
    }
    report.measure("seconds", started.elapsed().as_secs_f64(), "s", Threshold::AtMost { limit: 1800.0 }, "runtime budget");
    Ok(report.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigSweepConfig {
    pub task: ToyTask,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
}

impl Default for EigSweepConfig {
    fn default() -> Self {
        let task = ToyTask::default();
        EigSweepConfig {
            network: toy_network(&task),
            task,
            train: toy_train(),
            seeds: vec![0, 1, 2],
            ks: vec![8, 32, 128],
        }
    }
}

fn truncate_dataset(d: &Dataset, k: usize) -> Result<Dataset> {
    let samples = d
        .samples
        .iter()
        .map(|s| {
            Ok(Sample {
                ops: s.ops.truncated(k)?,
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples))
}

/// Toy-task accuracy as a function of the spectral basis size.
///
/// Operators are computed once at the largest `k`; smaller bases are leading truncations.
pub fn eig_sweep(cfg: &EigSweepConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("eig_sweep", serde_json::to_value(cfg)?);
    let k_max = *cfg.ks.iter().max().ok_or_else(|| Error::Config("eig_sweep needs at least one k".into()))?;
    let mut per_k = vec![Vec::new(); cfg.ks.len()];
    for &seed in &cfg.seeds {
        let (train, test) = cfg.task.datasets(seed, k_max)?;
        for (i, &k) in cfg.ks.iter().enumerate() {
            let mut network = cfg.network.clone();
            network.k = k;
            let (acc, train_acc) = toy_run(&truncate_dataset(&train, k)?, &truncate_dataset(&test, k)?, &network, &cfg.train, seed)?;
            log::info!("eig_sweep k = {k} seed {seed}: test {acc:.4}");
            report.row(serde_json::json!({ "k": k, "seed": seed, "test_acc": acc, "train_acc": train_acc }));
            per_k[i].push(acc);
        }
    }
    let means: Vec<f64> = per_k.iter().map(|v| mean(v)).collect();
    for (k, m) in cfg.ks.iter().zip(&means) {
        report.measure(&format!("k{k}_mean_test_acc"), *m, "fraction", Threshold::None, REPRO);
    }
    let at = |k: usize| cfg.ks.iter().position(|&x| x == k).map(|i| means[i]);
    if let (Some(hi), Some(lo)) = (at(128), at(8)) {
        report.measure("k128_minus_k8", hi - lo, "fraction", Threshold::AtLeast { limit: 0.0 }, TREND);
    }
    Ok(report.finish(started))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub task: ToyTask,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Points per sampled test cloud.
    pub cloud_points: usize,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        let task = ToyTask {
            bumps: BumpySphereParams::default(),
            ..ToyTask::default()
        };
        let mut network = NetworkConfig::new(InputMode::Xyz, Head::VertexSoftmax, GradientMode::Real, task.n_classes());
        network.width = 32;
        RobustnessConfig {
            task,
            network,
            train: TrainConfig {
                augmentation: Augmentation::RotZ,
                ..toy_train()
            },
            cloud_points: 2500,
            k_neighbors: crate::geometry::DEFAULT_K_NEIGHBORS,
            seed: 0,
        }
    }
}

/// Train on meshes, then evaluate on the test meshes, their midpoint refinements and
/// point clouds sampled from them.
pub fn robustness(cfg: &RobustnessConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = ExperimentReport::new("robustness", serde_json::to_value(cfg)?);
    let k = cfg.network.k;
    let (train, test) = cfg.task.generate(cfg.seed)?;
    let strip = |v: &[ToyShape]| v.iter().map(|(n, _, s)| (n.clone(), s.clone())).collect();
    let train_set = Dataset::build(strip(&train), k, Task::VertexSegmentation)?;
    let mesh_set = Dataset::build(strip(&test), k, Task::VertexSegmentation)?;

    let refined: Vec<(String, Shape)> = test
        .iter()
        .map(|(n, bs, s)| {
            let mesh = midpoint_refine(s.as_mesh().expect("toy shapes are meshes"));
            let labels = mesh.positions.iter().map(|p| bs.label_at(p)).collect();
            Ok((format!("{n}_refined"), Shape::mesh(mesh).with_vertex_labels(labels)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let clouds: Vec<(String, Shape)> = test
        .iter()
        .enumerate()
        .map(|(i, (n, _, s))| {
            let sampled = sample_point_cloud(s.as_mesh().expect("toy shapes are meshes"), cfg.cloud_points, derive_seed(cfg.seed, 77 + i as u64))?;
            let mut shape = sampled.into_shape(s.vertex_labels.as_deref());
            if let Discretization::Cloud(c) = &mut shape.geometry {
                c.k_neighbors = cfg.k_neighbors;
            }
            Ok((format!("{n}_cloud"), shape))
        })
        .collect::<Result<Vec<_>>>()?;
    let refined_set = Dataset::build(refined, k, Task::VertexSegmentation)?;
    let cloud_set = Dataset::build(clouds, k, Task::VertexSegmentation)?;

    let tc = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let result = fit(&train_set, Some(&mesh_set), &cfg.network, &tc, &FitOutputs::default())?;
    let sets = [("mesh", &mesh_set), ("refined", &refined_set), ("cloud", &cloud_set)];
    let accs = parallel_map(&sets, |(_, d)| evaluate(d, &result.params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    for ((name, d), m) in sets.iter().zip(&accs) {
        report.row(serde_json::json!({
            "variant": name,
            "accuracy": m.accuracy,
            "vertices": d.samples.iter().map(|s| s.shape.n_vertices()).sum::<usize>(),
        }));
        report.measure(&format!("{name}_acc"), m.accuracy, "fraction", Threshold::None, REPRO);
    }
    report.measure("train_acc", result.final_train_acc(), "fraction", Threshold::None, REPRO);
    report.measure("mesh_minus_refined", accs[0].accuracy - accs[1].accuracy, "fraction", Threshold::AtMost { limit: 0.10 }, TREND);
    report.measure("mesh_minus_cloud", accs[0].accuracy - accs[2].accuracy, "fraction", Threshold::AtMost { limit: 0.10 }, TREND);
    report.measure("seconds", started.elapsed().as_secs_f64(), "s", Threshold::AtMost { limit: 1800.0 }, "runtime budget");
    Ok(report.finish(started))
}
