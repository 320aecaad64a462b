//! The network: configuration, parameters, featurization, forward pass and checkpoints.

mod checkpoint;
mod forward;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{featurize, forward, forward_vars, network_forward, predict, ForwardPass};

pub use crate::autodiff::GradientMode;
use crate::autodiff::Tensor;
use crate::rng;
use crate::spectral::{DEFAULT_K, HKS_TIME_COUNT};
use crate::{Error, Result};
use rand::Rng as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Xyz,
    Hks,
}

impl InputMode {
    pub fn dim(self) -> usize {
        match self {
            InputMode::Xyz => 3,
            InputMode::Hks => HKS_TIME_COUNT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Per-element softmax for segmentation.
    VertexSoftmax,
    /// Mass-weighted mean over vertices, then softmax, for classification.
    GlobalMeanSoftmax,
    /// Raw per-element outputs.
    Raw,
}

/// Where per-element outputs live; face outputs average the logits of their vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLocation {
    Vertices,
    Faces,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DiffusionMode {
    /// Per-channel learned times.
    Learned,
    /// One shared, untrained time.
    Fixed { t: f64 },
    /// Blocks skip diffusion entirely.
    #[serde(rename = "none")]
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientFeatureMode {
    Learned,
    /// `A` stays at its random initialization.
    Frozen,
    #[serde(rename = "none")]
    Disabled,
}

fn default_width() -> usize {
    128
}
fn default_blocks() -> usize {
    4
}
fn default_hidden() -> usize {
    2
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_diffusion() -> DiffusionMode {
    DiffusionMode::Learned
}
fn default_gradient_features() -> GradientFeatureMode {
    GradientFeatureMode::Learned
}
fn default_outputs() -> OutputLocation {
    OutputLocation::Vertices
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    pub input_mode: InputMode,
    pub head: Head,
    #[serde(default)]
    pub dropout: f64,
    pub gradient_mode: GradientMode,
    #[serde(default = "default_hidden")]
    pub mlp_hidden_layers: usize,
    pub n_out: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_diffusion")]
    pub diffusion: DiffusionMode,
    #[serde(default = "default_gradient_features")]
    pub gradient_features: GradientFeatureMode,
    #[serde(default = "default_outputs")]
    pub outputs: OutputLocation,
}

impl NetworkConfig {
    /// Defaults for everything except the task-defining fields.
    pub fn new(input_mode: InputMode, head: Head, gradient_mode: GradientMode, n_out: usize) -> Self {
        NetworkConfig {
            width: default_width(),
            n_blocks: default_blocks(),
            input_mode,
            head,
            dropout: 0.0,
            gradient_mode,
            mlp_hidden_layers: default_hidden(),
            n_out,
            k: default_k(),
            diffusion: default_diffusion(),
            gradient_features: default_gradient_features(),
            outputs: default_outputs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.width == 0 {
            return fail("width must be at least 1".into());
        }
        if self.n_blocks == 0 {
            return fail("n_blocks must be at least 1".into());
        }
        if self.n_out == 0 {
            return fail("n_out must be at least 1".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout = {} must lie in [0, 1)", self.dropout));
        }
        if let DiffusionMode::Fixed { t } = self.diffusion {
            if !(t >= 0.0) || !t.is_finite() {
                return fail(format!("fixed diffusion time {t} must be finite and non-negative"));
            }
        }
        if self.head == Head::GlobalMeanSoftmax && self.outputs == OutputLocation::Faces {
            return fail("global_mean_softmax produces one output per shape; outputs must be vertices".into());
        }
        Ok(())
    }

    /// Input width of the block MLP.
    fn mlp_in(&self) -> usize {
        match self.gradient_features {
            GradientFeatureMode::Disabled => self.width,
            _ => 2 * self.width,
        }
    }
}

pub const INITIAL_DIFFUSION_TIME: f64 = 1e-4;

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionNetParams {
    pub config: NetworkConfig,
    entries: Vec<(String, Tensor)>,
}

impl DiffusionNetParams {
    pub fn from_entries(config: NetworkConfig, entries: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != entries.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                entries.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(&entries) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {got_name} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("parameter {name}")));
            }
        }
        Ok(DiffusionNetParams { config, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    /// Mutable views of every tensor, in storage order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t).collect()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    /// Scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Frozen gradient-feature matrices are stored but never updated.
    pub fn is_trainable(&self, i: usize) -> bool {
        !(self.config.gradient_features == GradientFeatureMode::Frozen
            && self.entries[i].0.ends_with("gradient_features.A"))
    }
}

/// Parameter names and shapes, in storage order.
pub fn param_shapes(config: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.width;
    let mut out = vec![
        ("linear_in.weight".to_string(), vec![config.input_mode.dim(), d]),
        ("linear_in.bias".to_string(), vec![d]),
    ];
    for b in 0..config.n_blocks {
        if config.diffusion == DiffusionMode::Learned {
            out.push((format!("blocks.{b}.diffusion_time"), vec![d]));
        }
        match (config.gradient_features, config.gradient_mode) {
            (GradientFeatureMode::Disabled, _) => {}
            (_, GradientMode::Real) => out.push((format!("blocks.{b}.gradient_features.A"), vec![d, d])),
            (_, GradientMode::Complex) => out.push((format!("blocks.{b}.gradient_features.A"), vec![2, d, d])),
        }
        let mut fan_in = config.mlp_in();
        for l in 0..=config.mlp_hidden_layers {
            out.push((format!("blocks.{b}.mlp.{l}.weight"), vec![fan_in, d]));
            out.push((format!("blocks.{b}.mlp.{l}.bias"), vec![d]));
            fan_in = d;
        }
    }
    out.push(("linear_out.weight".to_string(), vec![d, config.n_out]));
    out.push(("linear_out.bias".to_string(), vec![config.n_out]));
    out
}

/// Xavier-uniform weights, zero biases, diffusion times `1e-4`, `A = 0` (random when frozen).
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<DiffusionNetParams> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let entries = param_shapes(config)
        .into_iter()
        .map(|(name, shape)| {
            let t = if name.ends_with(".weight") {
                let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let n = shape[0] * shape[1];
                Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
            } else if name.ends_with("diffusion_time") {
                Ok(Tensor::full(&shape, INITIAL_DIFFUSION_TIME))
            } else if name.ends_with("gradient_features.A") && config.gradient_features == GradientFeatureMode::Frozen {
                let d = config.width;
                let bound = (3.0 / d as f64).sqrt();
                let n: usize = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
            } else {
                Ok(Tensor::zeros(&shape))
            };
            t.map(|t| (name, t))
        })
        .collect::<Result<Vec<_>>>()?;
    DiffusionNetParams::from_entries(config.clone(), entries)
}
