//! `diffnet`: precompute operators, train and evaluate networks, run verification suites
//! and desk-scale experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use diffnet_core::experiments::{run_experiment, run_suite, ExperimentName, ExperimentReport, Suite, VerificationStamp};
use diffnet_core::geometry::{load_shape, normalize_shape, Discretization, DEFAULT_K_NEIGHBORS};
use diffnet_core::net::{load_checkpoint, NetworkConfig};
use diffnet_core::operators::{save_operators, GeometryOperators};
use diffnet_core::spectral::DEFAULT_K;
use diffnet_core::train::{evaluate, fit, load_dataset, DatasetEntry, FitOutputs, TrainConfig, METRICS_HEADER};

const DEFAULT_STAMP: &str = ".diffnet/verify-stamp.json";

#[derive(Parser)]
#[command(name = "diffnet", version, about = "Learned diffusion networks on surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble operators and the eigenbasis for one shape and write them to a cache directory.
    Precompute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Neighbors per point; ignored for meshes.
        #[arg(long, default_value_t = DEFAULT_K_NEIGHBORS)]
        knn: usize,
        /// Defaults to the input path with `.ops` appended.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a JSON dataset list.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run verification suites and record the outcome in the verification stamp.
    Verify {
        /// heat_kernel, gradients, eigen or invariance; all suites when omitted.
        #[arg(long)]
        suite: Option<Suite>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_STAMP)]
        stamp: PathBuf,
    },
    /// Run a desk-scale experiment; requires a green verification stamp for this build.
    Experiment {
        /// orientation, ablation, eig_sweep or robustness.
        #[arg(long)]
        name: ExperimentName,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_STAMP)]
        stamp: PathBuf,
    },
}

/// The `train --config` file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    network: NetworkConfig,
    #[serde(default)]
    train: TrainConfig,
    train_set: Vec<DatasetEntry>,
    #[serde(default)]
    test_set: Vec<DatasetEntry>,
    output_dir: PathBuf,
}

enum Outcome {
    Ok,
    Breach,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Breach) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Precompute { input, k, knn, out } => precompute(&input, k, knn, out),
        Command::Train { config } => train(&config),
        Command::Eval { checkpoint, dataset } => eval(&checkpoint, &dataset),
        Command::Verify { suite, out, stamp } => verify(suite, &out, &stamp),
        Command::Experiment { name, config, out, stamp } => experiment(name, config.as_deref(), &out, &stamp),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| anyhow!("{}: at `{}`: {}", path.display(), e.path(), e.inner()))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn precompute(input: &Path, k: usize, knn: usize, out: Option<PathBuf>) -> anyhow::Result<Outcome> {
    let started = Instant::now();
    let mut shape = load_shape(input, None).with_context(|| format!("loading {}", input.display()))?;
    normalize_shape(&mut shape)?;
    if let Discretization::Cloud(c) = &mut shape.geometry {
        c.k_neighbors = knn;
    }
    let ops = GeometryOperators::compute(&shape, k).with_context(|| format!("precomputing {}", input.display()))?;
    let out = out.unwrap_or_else(|| DatasetEntry::default_cache_dir(input));
    save_operators(&ops, &out).with_context(|| format!("writing {}", out.display()))?;
    let s = &ops.stats;
    println!(
        "{}: V = {} F = {} k = {} in {:.2}s -> {}",
        input.display(),
        ops.n_vertices(),
        ops.n_faces,
        ops.k(),
        started.elapsed().as_secs_f64(),
        out.display()
    );
    println!(
        "degenerate_faces = {} clamped_cotans = {} isolated_vertices = {} fallback_points = {} fallback_normals = {} regularized_rows = {}",
        s.degenerate_faces, s.clamped_cotans, s.isolated_vertices, s.fallback_points, s.fallback_normals, s.regularized_rows
    );
    Ok(Outcome::Ok)
}

fn train(config: &Path) -> anyhow::Result<Outcome> {
    let file: TrainFile = parse_json(config)?;
    file.network.validate()?;
    file.train.validate()?;
    let base = base_dir(config);
    let train_set = load_dataset(&file.train_set, &base, &file.network)?;
    let test_set = if file.test_set.is_empty() {
        None
    } else {
        Some(load_dataset(&file.test_set, &base, &file.network)?)
    };
    let out_dir = if file.output_dir.is_absolute() { file.output_dir.clone() } else { base.join(&file.output_dir) };
    let outputs = FitOutputs {
        metrics_csv: Some(out_dir.join("metrics.csv")),
        checkpoint_dir: Some(out_dir.join("checkpoints")),
        metadata: serde_json::json!({ "train": file.train }),
    };
    let result = fit(&train_set, test_set.as_ref(), &file.network, &file.train, &outputs)?;
    println!("{METRICS_HEADER}");
    if let Some(last) = result.history.last() {
        println!("{}", last.csv_row());
    }
    if let Some(m) = result.final_test {
        println!("final test accuracy {} ({}/{})", m.accuracy, m.correct, m.total);
    }
    println!("checkpoints in {}", out_dir.join("checkpoints").display());
    Ok(Outcome::Ok)
}

fn eval(checkpoint: &Path, dataset: &Path) -> anyhow::Result<Outcome> {
    let ckpt = load_checkpoint(checkpoint)?;
    let entries: Vec<DatasetEntry> = parse_json(dataset)?;
    let data = load_dataset(&entries, &base_dir(dataset), &ckpt.params.config)?;
    let m = evaluate(&data, &ckpt.params)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(Outcome::Ok)
}

/// Identifies the running binary, so a stamp never outlives a rebuild.
fn build_id() -> anyhow::Result<String> {
    let exe = std::env::current_exe()?;
    let meta = std::fs::metadata(&exe)?;
    let mtime = meta.modified()?.duration_since(std::time::UNIX_EPOCH)?.as_nanos();
    Ok(format!("{}:{}:{}:{}", env!("CARGO_PKG_VERSION"), exe.display(), meta.len(), mtime))
}

fn emit(report: &ExperimentReport, out: &Path) -> anyhow::Result<()> {
    let (json, csv) = report.write(out)?;
    print!("{}", report.summary());
    println!("report: {} {}", json.display(), csv.display());
    Ok(())
}

fn verify(suite: Option<Suite>, out: &Path, stamp: &Path) -> anyhow::Result<Outcome> {
    let id = build_id()?;
    let suites = suite.map_or_else(|| Suite::ALL.to_vec(), |s| vec![s]);
    let mut all = true;
    for s in suites {
        let report = run_suite(s)?;
        emit(&report, out)?;
        VerificationStamp::record(stamp, &id, s, report.passed)?;
        all &= report.passed;
    }
    Ok(if all { Outcome::Ok } else { Outcome::Breach })
}

fn experiment(name: ExperimentName, config: Option<&Path>, out: &Path, stamp: &Path) -> anyhow::Result<Outcome> {
    VerificationStamp::require(stamp, &build_id()?)?;
    let config = config.map(parse_json::<serde_json::Value>).transpose()?;
    let report = run_experiment(name, config)?;
    emit(&report, out)?;
    Ok(if report.passed { Outcome::Ok } else { Outcome::Breach })
}
