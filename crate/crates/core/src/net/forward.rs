use super::{DiffusionMode, DiffusionNetParams, GradientFeatureMode, Head, InputMode, NetworkConfig, OutputLocation};
use crate::autodiff::{GradientMode, Tape, Tensor, Var};
use crate::geometry::Shape;
use crate::operators::GeometryOperators;
use crate::rng::derive_seed;
use crate::spectral::{compute_hks, default_hks_times};
use crate::{Error, Result};

/// Input features: positions for `xyz`, heat kernel signatures at the default times for `hks`.
pub fn featurize(shape: &Shape, ops: &GeometryOperators, config: &NetworkConfig) -> Result<Tensor> {
    if shape.n_vertices() != ops.n_vertices() {
        return Err(Error::ShapeMismatch {
            op: "featurize",
            lhs: vec![shape.n_vertices()],
            rhs: vec![ops.n_vertices()],
        });
    }
    match config.input_mode {
        InputMode::Xyz => {
            let p = shape.positions();
            Ok(Tensor::from_fn(p.len(), 3, |r, c| p[r][c]))
        }
        InputMode::Hks => {
            let hks = compute_hks(&ops.basis, &default_hks_times())?;
            Ok(Tensor::from_dmatrix(&hks.values))
        }
    }
}

/// The recorded forward pass: pre-softmax outputs and the tape variable of each parameter.
pub struct ForwardPass {
    pub logits: Var,
    pub params: Vec<Var>,
}

/// Record the network on `tape`.
///
/// `faces` is required when the config asks for face outputs. `seed` drives dropout masks.
pub fn forward<'a>(
    tape: &mut Tape<'a>,
    params: &DiffusionNetParams,
    ops: &'a GeometryOperators,
    faces: Option<&[[usize; 3]]>,
    features: &Tensor,
    train: bool,
    seed: u64,
) -> Result<ForwardPass> {
    let vars: Vec<Var> = (0..params.len())
        .map(|i| {
            let t = params.tensor(i).clone();
            if params.is_trainable(i) {
                tape.param(t)
            } else {
                tape.constant(t)
            }
        })
        .collect();
    let logits = forward_vars(tape, &params.config, &vars, ops, faces, features, train, seed)?;
    Ok(ForwardPass { logits, params: vars })
}

/// [`forward`] with parameters already on the tape, in [`param_shapes`](super::param_shapes) order.
#[allow(clippy::too_many_arguments)]
pub fn forward_vars<'a>(
    tape: &mut Tape<'a>,
    config: &NetworkConfig,
    vars: &[Var],
    ops: &'a GeometryOperators,
    faces: Option<&[[usize; 3]]>,
    features: &Tensor,
    train: bool,
    seed: u64,
) -> Result<Var> {
    if ops.k() != config.k {
        return Err(Error::Config(format!(
            "operators carry k = {} eigenpairs but the network expects k = {}",
            ops.k(),
            config.k
        )));
    }
    if config.gradient_mode == GradientMode::Complex
        && config.gradient_features != GradientFeatureMode::Disabled
        && !ops.oriented
    {
        return Err(Error::Config(
            "complex gradient features need a consistently oriented shape; use gradient_mode = real".into(),
        ));
    }
    if features.shape() != [ops.n_vertices(), config.input_mode.dim()] {
        return Err(Error::ShapeMismatch {
            op: "network input",
            lhs: features.shape().to_vec(),
            rhs: vec![ops.n_vertices(), config.input_mode.dim()],
        });
    }
    let names = super::param_shapes(config);
    if names.len() != vars.len() {
        return Err(Error::Config(format!(
            "network expects {} parameter variables, got {}",
            names.len(),
            vars.len()
        )));
    }
    let var = |name: &str| -> Var {
        let i = names.iter().position(|(n, _)| n == name).expect("parameter present by construction");
        vars[i]
    };
    let mass = ops.mass.as_slice();
    let x = tape.constant(features.clone());
    let h = tape.matmul(x, var("linear_in.weight"))?;
    let mut x = tape.add_bias(h, var("linear_in.bias"))?;
    let mut dropout_layer = 0u64;
    for b in 0..config.n_blocks {
        let u = match config.diffusion {
            DiffusionMode::Learned => tape.spectral_diffusion(x, var(&format!("blocks.{b}.diffusion_time")), &ops.basis, mass)?,
            DiffusionMode::Fixed { t } => {
                let times = tape.constant(Tensor::full(&[config.width], t));
                tape.spectral_diffusion(x, times, &ops.basis, mass)?
            }
            DiffusionMode::Disabled => x,
        };
        let mut h = match config.gradient_features {
            GradientFeatureMode::Disabled => u,
            _ => {
                let w = tape.sparse_apply_complex(&ops.gradient, u)?;
                let g = tape.gradient_features(w, var(&format!("blocks.{b}.gradient_features.A")), config.gradient_mode)?;
                tape.concat(&[u, g])?
            }
        };
        for l in 0..=config.mlp_hidden_layers {
            h = tape.matmul(h, var(&format!("blocks.{b}.mlp.{l}.weight")))?;
            h = tape.add_bias(h, var(&format!("blocks.{b}.mlp.{l}.bias")))?;
            if l < config.mlp_hidden_layers {
                h = tape.relu(h)?;
                h = tape.dropout(h, config.dropout, train, derive_seed(seed, dropout_layer))?;
                dropout_layer += 1;
            }
        }
        x = tape.add(x, h)?;
    }
    let h = tape.matmul(x, var("linear_out.weight"))?;
    let mut logits = tape.add_bias(h, var("linear_out.bias"))?;
    if config.outputs == OutputLocation::Faces {
        let faces = faces.ok_or_else(|| Error::Config("face outputs need a mesh".into()))?;
        logits = tape.row_average(logits, faces.iter().map(|f| f.to_vec()).collect())?;
    }
    if config.head == Head::GlobalMeanSoftmax {
        logits = tape.mean_rows(logits, Some(mass))?;
    }
    Ok(logits)
}

/// Apply the head's softmax (none for `raw`) to pre-softmax outputs.
pub fn predict(config: &NetworkConfig, logits: &Tensor) -> Tensor {
    match config.head {
        Head::Raw => logits.clone(),
        Head::VertexSoftmax | Head::GlobalMeanSoftmax => {
            let (rows, cols) = logits.dims2();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                data.extend(crate::autodiff::softmax_row(logits.row(r)));
            }
            Tensor::matrix(rows, cols, data).expect("shape")
        }
    }
}

/// Featurize, run in the requested mode, and apply the head.
pub fn network_forward(
    shape: &Shape,
    ops: &GeometryOperators,
    params: &DiffusionNetParams,
    train: bool,
    seed: u64,
) -> Result<Tensor> {
    let features = featurize(shape, ops, &params.config)?;
    let faces = shape.as_mesh().map(|m| m.faces.as_slice());
    let mut tape = Tape::new();
    let pass = forward(&mut tape, params, ops, faces, &features, train, seed)?;
    Ok(predict(&params.config, tape.value(pass.logits)?))
}
