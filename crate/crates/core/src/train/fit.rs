use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::augment::{rotate_features, rotation_matrix, Augmentation};
use super::data::{Dataset, Sample};
use super::TrainConfig;
use crate::autodiff::{Tape, Tensor};
use crate::net::{featurize, forward, init_params, save_checkpoint, DiffusionNetParams, InputMode, NetworkConfig};
use crate::parallel::parallel_map;
use crate::rng::{derive_seed, substream};
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,lr,train_loss,train_acc,test_acc,seconds";

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const AUGMENT_STREAM: u64 = 3;
const DROPOUT_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let test = self.test_acc.map(|a| format!("{a}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.3}",
            self.epoch, self.lr, self.train_loss, self.train_acc, test, self.seconds
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

/// Where `fit` writes its artifacts; every field is optional.
#[derive(Clone, Debug, Default)]
pub struct FitOutputs {
    pub metrics_csv: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Merged into every checkpoint's metadata.
    pub metadata: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: DiffusionNetParams,
    pub history: Vec<EpochMetrics>,
    pub final_test: Option<EvalMetrics>,
}

impl FitResult {
    pub fn final_train_acc(&self) -> f64 {
        self.history.last().map_or(0.0, |m| m.train_acc)
    }
}

fn base_features(samples: &[Sample], config: &NetworkConfig) -> Result<Vec<Tensor>> {
    parallel_map(samples, |s| featurize(&s.shape, &s.ops, config))
        .into_iter()
        .collect()
}

fn count_correct(logits: &Tensor, targets: &[usize]) -> usize {
    logits.argmax_rows().iter().zip(targets).filter(|(p, t)| p == t).count()
}

/// Train from a seeded initialization.
///
/// One shape per step, visiting the training set in a freshly shuffled order each epoch.
/// Positions used as features are re-rotated on every visit when augmentation is on.
pub fn fit(
    train: &Dataset,
    test: Option<&Dataset>,
    network: &NetworkConfig,
    cfg: &TrainConfig,
    out: &FitOutputs,
) -> Result<FitResult> {
    network.validate()?;
    cfg.validate()?;
    if network.head == crate::net::Head::Raw {
        return Err(Error::Config("the raw head has no training loss; use a softmax head".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for s in train.samples.iter().chain(test.into_iter().flat_map(|t| &t.samples)) {
        s.check(network)?;
    }
    let alpha = cfg.resolved_label_smoothing(network);
    let mut params = init_params(network, derive_seed(cfg.seed, INIT_STREAM))?;
    let mut state = AdamState::for_params(&params);
    let features = base_features(&train.samples, network)?;
    let test_features = match test {
        Some(t) => Some(base_features(&t.samples, network)?),
        None => None,
    };

    let mut csv = match &out.metrics_csv {
        Some(p) => {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{METRICS_HEADER}").map_err(|e| Error::io(p, e))?;
            Some((w, p.clone()))
        }
        None => None,
    };
    if let Some(dir) = &out.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut final_test = None;
    let mut visit = 0u64;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut substream(derive_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64));
        let (mut loss_sum, mut correct, mut total) = (0.0, 0usize, 0usize);
        for &i in &order {
            let sample = &train.samples[i];
            let x = augmented(&features[i], network, cfg.augmentation, derive_seed(derive_seed(cfg.seed, AUGMENT_STREAM), visit));
            let faces = sample.shape.as_mesh().map(|m| m.faces.as_slice());
            let mut tape = Tape::new();
            let dropout_seed = derive_seed(derive_seed(cfg.seed, DROPOUT_STREAM), visit);
            let pass = forward(&mut tape, &params, &sample.ops, faces, x.as_ref().unwrap_or(&features[i]), true, dropout_seed)?;
            correct += count_correct(tape.value(pass.logits)?, &sample.targets);
            total += sample.targets.len();
            let loss = tape.cross_entropy(pass.logits, &sample.targets, alpha)?;
            loss_sum += tape.value(loss)?.item();
            let grads = tape.backward(loss)?;
            let g: Vec<Option<Tensor>> = pass.params.iter().map(|&v| grads.get(v).cloned()).collect();
            adam_step(&mut params, &g, &mut state, lr).map_err(|e| match e {
                Error::NonFiniteGradient(name) => {
                    Error::NonFiniteGradient(format!("{name} (epoch {epoch}, shape {})", sample.name))
                }
                other => other,
            })?;
            visit += 1;
        }
        let test_acc = match (test, &test_features) {
            (Some(t), Some(tf)) if epoch % cfg.eval_every == 0 || epoch == cfg.epochs => {
                let m = evaluate_with(t, &params, tf)?;
                if epoch == cfg.epochs {
                    final_test = Some(m);
                }
                Some(m.accuracy)
            }
            _ => None,
        };
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / total as f64,
            test_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", metrics.csv_row());
        if let Some((w, p)) = csv.as_mut() {
            writeln!(w, "{}", metrics.csv_row()).and_then(|_| w.flush()).map_err(|e| Error::io(p.as_path(), e))?;
        }
        history.push(metrics);
        if let (Some(dir), Some(every)) = (&out.checkpoint_dir, cfg.checkpoint_every) {
            if epoch % every == 0 && epoch != cfg.epochs {
                write_checkpoint(&dir.join(format!("epoch_{epoch:04}.ckpt")), &params, cfg, history.last(), out)?;
            }
        }
    }
    if let Some(dir) = &out.checkpoint_dir {
        write_checkpoint(&dir.join("final.ckpt"), &params, cfg, history.last(), out)?;
    }
    Ok(FitResult {
        params,
        history,
        final_test,
    })
}

fn augmented(base: &Tensor, network: &NetworkConfig, mode: Augmentation, seed: u64) -> Option<Tensor> {
    if network.input_mode != InputMode::Xyz || mode == Augmentation::None {
        return None;
    }
    Some(rotate_features(base, &rotation_matrix(mode, seed)))
}

fn write_checkpoint(
    path: &Path,
    params: &DiffusionNetParams,
    cfg: &TrainConfig,
    last: Option<&EpochMetrics>,
    out: &FitOutputs,
) -> Result<()> {
    let mut meta = serde_json::json!({
        "train": cfg,
        "epoch": last.map(|m| m.epoch),
        "metrics": last,
    });
    if let (Some(m), serde_json::Value::Object(extra)) = (meta.as_object_mut(), &out.metadata) {
        for (k, v) in extra {
            m.insert(k.clone(), v.clone());
        }
    }
    save_checkpoint(path, params, meta)
}

/// Eval-mode labels for one sample: argmax of the network outputs per element.
pub fn predict_labels(sample: &Sample, params: &DiffusionNetParams) -> Result<Vec<usize>> {
    let features = featurize(&sample.shape, &sample.ops, &params.config)?;
    predict_with(sample, params, &features)
}

fn predict_with(sample: &Sample, params: &DiffusionNetParams, features: &Tensor) -> Result<Vec<usize>> {
    let faces = sample.shape.as_mesh().map(|m| m.faces.as_slice());
    let mut tape = Tape::new();
    let pass = forward(&mut tape, params, &sample.ops, faces, features, false, 0)?;
    Ok(tape.value(pass.logits)?.argmax_rows())
}

/// Accuracy over the whole set: labelled elements for segmentation, shapes for classification.
pub fn evaluate(dataset: &Dataset, params: &DiffusionNetParams) -> Result<EvalMetrics> {
    for s in &dataset.samples {
        s.check(&params.config)?;
    }
    let features = base_features(&dataset.samples, &params.config)?;
    evaluate_with(dataset, params, &features)
}

fn evaluate_with(dataset: &Dataset, params: &DiffusionNetParams, features: &[Tensor]) -> Result<EvalMetrics> {
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let per_shape = parallel_map(&idx, |&i| -> Result<(usize, usize)> {
        let s = &dataset.samples[i];
        let pred = predict_with(s, params, &features[i])?;
        let ok = pred.iter().zip(&s.targets).filter(|(p, t)| p == t).count();
        Ok((ok, s.targets.len()))
    });
    let (mut correct, mut total) = (0, 0);
    for r in per_shape {
        let (c, t) = r?;
        correct += c;
        total += t;
    }
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok(EvalMetrics { accuracy, correct, total })
}
