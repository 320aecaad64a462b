use std::path::Path;

use diffnet_core::experiments::ToyTask;
use diffnet_core::geometry::{save_labels, save_shape, BumpySphereParams};
use diffnet_core::net::{load_checkpoint, GradientMode, Head, InputMode, NetworkConfig};
use diffnet_core::operators::save_operators;
use diffnet_core::train::{
    evaluate, fit, load_dataset, predict_labels, Dataset, DatasetEntry, FitOutputs, TrainConfig, METRICS_HEADER,
};
use diffnet_core::Error;

fn toy(n_train: usize, n_test: usize, subdiv: usize) -> ToyTask {
    ToyTask {
        n_train,
        n_test,
        bumps: BumpySphereParams {
            subdiv,
            ..ToyTask::default().bumps
        },
    }
}

fn network(task: &ToyTask, k: usize) -> NetworkConfig {
    let mut n = NetworkConfig::new(InputMode::Hks, Head::VertexSoftmax, GradientMode::Real, task.n_classes());
    n.width = 16;
    n.n_blocks = 2;
    n.k = k;
    n
}

#[test]
fn same_seed_gives_identical_metric_logs() {
    let task = toy(2, 1, 2);
    let (train, test) = task.datasets(0, 16).unwrap();
    let net = network(&task, 16);
    let cfg = TrainConfig {
        epochs: 4,
        seed: 9,
        augmentation: diffnet_core::train::Augmentation::RotFull,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = FitOutputs {
            metrics_csv: Some(dir.path().join(format!("{name}.csv"))),
            ..FitOutputs::default()
        };
        fit(&train, Some(&test), &net, &cfg, &out).unwrap();
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        // The wall-clock column is the only one allowed to differ.
        text.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect::<Vec<_>>()
    };
    let a = run("a");
    assert_eq!(a[0], METRICS_HEADER.rsplit_once(',').unwrap().0);
    assert_eq!(a.len(), 5);
    assert_eq!(a, run("b"));
}

#[test]
fn a_single_shape_can_be_overfit() {
    let task = toy(1, 0, 3);
    let (train, _) = task.datasets(3, 128).unwrap();
    let mut net = network(&task, 128);
    net.input_mode = InputMode::Xyz;
    net.width = 32;
    net.n_blocks = 4;
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let result = fit(&train, None, &net, &cfg, &FitOutputs::default()).unwrap();
    let acc = result.final_train_acc();
    assert!(acc >= 0.99, "training accuracy {acc}");
    assert_eq!(result.history.len(), 200);
}

#[test]
fn loss_decreases_over_the_first_ten_epochs() {
    let task = toy(4, 0, 2);
    let net = network(&task, 32);
    let (mut first, mut tenth) = (0.0, 0.0);
    for seed in 0..3 {
        let (train, _) = task.datasets(seed, 32).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            seed,
            ..TrainConfig::default()
        };
        let h = fit(&train, None, &net, &cfg, &FitOutputs::default()).unwrap().history;
        first += h[0].train_loss / 3.0;
        tenth += h[9].train_loss / 3.0;
    }
    assert!(tenth < first, "mean loss {first} -> {tenth}");
}

#[test]
fn evaluation_ignores_shape_order_and_checkpoints_reproduce_it() {
    let task = toy(2, 3, 2);
    let (train, test) = task.datasets(1, 16).unwrap();
    let net = network(&task, 16);
    let dir = tempfile::tempdir().unwrap();
    let out = FitOutputs {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..FitOutputs::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        checkpoint_every: Some(2),
        ..TrainConfig::default()
    };
    let result = fit(&train, Some(&test), &net, &cfg, &out).unwrap();
    assert!(dir.path().join("epoch_0002.ckpt").exists());
    let ckpt = load_checkpoint(&dir.path().join("final.ckpt")).unwrap();
    assert_eq!(ckpt.params.config, net);
    let direct = evaluate(&test, &ckpt.params).unwrap();
    assert_eq!(Some(direct), result.final_test);

    let mut reversed = test.samples.clone();
    reversed.reverse();
    assert_eq!(evaluate(&Dataset::new(reversed), &ckpt.params).unwrap(), direct);

    // A predictor that outputs the labels exactly scores 1.
    let mut relabelled = test.samples.clone();
    for s in &mut relabelled {
        s.targets = predict_labels(s, &ckpt.params).unwrap();
    }
    assert_eq!(evaluate(&Dataset::new(relabelled), &ckpt.params).unwrap().accuracy, 1.0);
}

fn write_entry(dir: &Path, task: &ToyTask, precompute: bool) -> DatasetEntry {
    let (train, _) = task.generate(0).unwrap();
    let (_, _, shape) = &train[0];
    let path = dir.join("shape.obj");
    save_shape(shape, &path, None).unwrap();
    save_labels(shape.vertex_labels.as_ref().unwrap(), &dir.join("shape.labels")).unwrap();
    if precompute {
        let mut loaded = diffnet_core::geometry::load_shape(&path, None).unwrap();
        diffnet_core::geometry::normalize_shape(&mut loaded).unwrap();
        let ops = diffnet_core::operators::GeometryOperators::compute(&loaded, 24).unwrap();
        save_operators(&ops, &DatasetEntry::default_cache_dir(&path)).unwrap();
    }
    DatasetEntry {
        shape: "shape.obj".into(),
        cache: None,
        labels: Some("shape.labels".into()),
        class: None,
    }
}

#[test]
fn loading_without_a_cache_names_the_precompute_command() {
    let dir = tempfile::tempdir().unwrap();
    let task = toy(1, 0, 1);
    let entry = write_entry(dir.path(), &task, false);
    let err = load_dataset(&[entry], dir.path(), &network(&task, 16)).unwrap_err();
    assert!(matches!(err, Error::MissingCache { .. }));
    let msg = err.to_string();
    assert!(msg.contains("diffnet precompute --input") && msg.contains("shape.obj"), "{msg}");
}

#[test]
fn cached_bases_are_truncated_or_rejected_by_size() {
    let dir = tempfile::tempdir().unwrap();
    let task = toy(1, 0, 1);
    let entry = write_entry(dir.path(), &task, true);
    let d = load_dataset(std::slice::from_ref(&entry), dir.path(), &network(&task, 16)).unwrap();
    assert_eq!(d.samples[0].ops.k(), 16);
    assert_eq!(d.samples[0].targets.len(), d.samples[0].shape.n_vertices());
    let err = load_dataset(&[entry], dir.path(), &network(&task, 32)).unwrap_err();
    assert!(err.to_string().contains("--k 32"), "{err}");
}
