//! Acceptance gate. Runs every criterion in sequence (wall-clock budgets are part of several
//! criteria, so nothing runs concurrently) and prints one PASS/FAIL line per criterion.

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use diffnet_core::experiments::{
    ablation, eig_sweep, orientation, robustness, run_suite, AblationConfig, EigSweepConfig, ExperimentReport,
    OrientationConfig, RobustnessConfig, Suite,
};
use diffnet_core::geometry::{read_xyz, DEFAULT_K_NEIGHBORS};
use diffnet_core::net::{GradientMode, Head, InputMode, NetworkConfig};
use diffnet_core::spectral::{default_hks_times, DEFAULT_K, HKS_TIME_COUNT};
use diffnet_core::train::{Augmentation, TrainConfig};

struct Verdict {
    passed: bool,
    detail: String,
}

/// Verdict over the measurements whose names start with any of `prefixes`.
fn judge(report: &ExperimentReport, prefixes: &[&str]) -> Verdict {
    let picked: Vec<_> = report
        .measurements
        .iter()
        .filter(|m| prefixes.iter().any(|p| m.name.starts_with(p)))
        .collect();
    let passed = !picked.is_empty() && picked.iter().all(|m| m.passed != Some(false));
    let detail = picked
        .iter()
        .map(|m| {
            let mark = if m.passed == Some(false) { " (FAIL)" } else { "" };
            format!("{}={:.4e}{mark}", m.name, m.value)
        })
        .collect::<Vec<_>>()
        .join(" ");
    Verdict { passed, detail }
}

fn hyperparameter_snapshot() -> Verdict {
    let mut problems = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            problems.push(name.to_string());
        }
    };
    let train: TrainConfig = serde_json::from_str("{}").expect("empty train config parses");
    check("train config from {} equals the default", train == TrainConfig::default());
    check("lr = 0.001", train.lr == 0.001);
    check("epochs = 200", train.epochs == 200);
    check("batch = 1", train.batch_size == 1);
    check("decay factor 0.5", train.decay_factor == 0.5);
    check("decay every 50", train.decay_every == 50);
    check("lr(1) = 0.001", train.learning_rate(1) == 0.001);
    check("lr(50) = 0.001", train.learning_rate(50) == 0.001);
    check("lr(51) = 0.0005", train.learning_rate(51) == 0.0005);
    check("lr(151) = 0.000125", train.learning_rate(151) == 0.000125);
    check("lr(200) = 0.000125", train.learning_rate(200) == 0.000125);
    check("no augmentation by default", train.augmentation == Augmentation::None);

    let net: NetworkConfig = serde_json::from_str(
        r#"{"input_mode": "hks", "head": "global_mean_softmax", "gradient_mode": "complex", "n_out": 30}"#,
    )
    .expect("minimal network config parses");
    check("k = 128", net.k == 128 && DEFAULT_K == 128);
    check("classification label smoothing 0.2", train.resolved_label_smoothing(&net) == 0.2);
    let seg = NetworkConfig::new(InputMode::Xyz, Head::VertexSoftmax, GradientMode::Complex, 8);
    check("segmentation label smoothing 0", train.resolved_label_smoothing(&seg) == 0.0);

    let xyz: String = (0..64).map(|i| format!("{} {} {}\n", i % 4, (i / 4) % 4, i / 16)).collect();
    let cloud = read_xyz(xyz.as_bytes()).expect("grid cloud parses");
    check("30 nearest neighbors", DEFAULT_K_NEIGHBORS == 30 && cloud.k_neighbors == 30);
    let times = default_hks_times();
    check("16 HKS times", HKS_TIME_COUNT == 16 && times.len() == 16);
    check("HKS span [0.01, 1]", (times[0] - 0.01).abs() < 1e-15 && (times[15] - 1.0).abs() < 1e-15);
    let ratio = times[1] / times[0];
    check(
        "HKS times log-spaced",
        times.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12),
    );
    let passed = problems.is_empty();
    Verdict {
        passed,
        detail: if passed {
            "lr 0.001, x0.5/50 epochs, 200 epochs, batch 1, k 128, 30-NN, 16 HKS times on [0.01, 1], smoothing 0.2".into()
        } else {
            format!("mismatched: {}", problems.join("; "))
        },
    }
}

type Row = (usize, &'static str, Verdict);

fn emit(results: &mut Vec<Row>, n: usize, title: &'static str, v: Verdict, secs: f64) {
    let mut o = std::io::stdout().lock();
    let _ = writeln!(
        o,
        "criterion {n:>2} {} {title} ({secs:.1}s): {}",
        if v.passed { "PASS" } else { "FAIL" },
        v.detail
    );
    let _ = o.flush();
    results.push((n, title, v));
}

/// Run `f`, then judge each `(criterion, title, prefixes)` against the same report.
fn criteria(
    results: &mut Vec<Row>,
    f: impl FnOnce() -> diffnet_core::Result<ExperimentReport>,
    parts: &[(usize, &'static str, &[&str])],
) {
    let t = Instant::now();
    let r = f();
    let secs = t.elapsed().as_secs_f64();
    match r {
        Ok(rep) => {
            for (n, title, prefixes) in parts {
                emit(results, *n, title, judge(&rep, prefixes), secs);
            }
        }
        Err(e) => {
            for (n, title, _) in parts {
                let v = Verdict {
                    passed: false,
                    detail: format!("error: {e}"),
                };
                emit(results, *n, title, v, secs);
            }
        }
    }
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    criteria(
        &mut results,
        || run_suite(Suite::HeatKernel),
        &[
            (1, "heat-kernel oracle", &["delta_"]),
            (2, "scheme equivalence", &["full_basis_vs_expm", "implicit_halving"]),
            (3, "conservation", &["conservation_"]),
        ],
    );
    criteria(&mut results, || run_suite(Suite::Gradients), &[(4, "differentiation", &[""])]);
    criteria(&mut results, || run_suite(Suite::Invariance), &[(5, "invariance suite", &[""])]);
    criteria(&mut results, || run_suite(Suite::Eigen), &[(6, "eigen correctness", &[""])]);
    criteria(
        &mut results,
        || orientation(&OrientationConfig::default()),
        &[(7, "orientation experiment", &["complex_test_acc", "real_test_acc", "seconds"])],
    );
    criteria(
        &mut results,
        || ablation(&AblationConfig::default()),
        &[(8, "ablation trend", &["full_minus", "seconds", "full_mean", "no_diffusion_mean", "no_gradient_features_mean"])],
    );
    criteria(
        &mut results,
        || robustness(&RobustnessConfig::default()),
        &[(9, "discretization robustness", &["mesh_", "refined_acc", "cloud_acc", "seconds"])],
    );
    criteria(
        &mut results,
        || eig_sweep(&EigSweepConfig::default()),
        &[(10, "spectral-basis sweep", &["k"])],
    );
    let t = Instant::now();
    let v = hyperparameter_snapshot();
    emit(&mut results, 11, "hyperparameter fidelity", v, t.elapsed().as_secs_f64());
    finish(&results)
}

fn finish(results: &[Row]) -> ExitCode {
    let failed: Vec<_> = results.iter().filter(|r| !r.2.passed).map(|r| r.0.to_string()).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
