//! Reverse-mode differentiation over dense row-major tensors.
//!
//! A [`Tape`] records every operation in execution order; [`Tape::backward`] walks it in
//! reverse, accumulating gradients additively, and then clears it. Complex values are
//! carried as paired real channel blocks `[re | im]`.

mod check;
mod geometric;
mod ops;
mod tensor;

pub use check::{check_gradients, GradCheckReport};
pub use ops::{log_sum_exp, softmax as softmax_row};
pub use tensor::Tensor;

use crate::sparse::{ComplexCsr, CsrMatrix};
use crate::spectral::EigenBasis;
use crate::{Error, Result};

/// Lower clamp on diffusion times.
pub const MIN_DIFFUSION_TIME: f64 = 1e-8;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    generation: u64,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }
}

/// Whether gradient features use a real `D x D` matrix or a complex one stored as `[2, D, D]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Real,
    Complex,
}

pub(crate) enum Op<'a> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Mul(usize, usize),
    Sum(usize),
    Concat(Vec<usize>),
    Relu(usize),
    Tanh(usize),
    Dropout(usize, Vec<f64>),
    RowSoftmax(usize),
    Log(usize),
    MeanRows(usize, Vec<f64>),
    GatherRows(usize, Vec<usize>),
    RowAverage(usize, Vec<Vec<usize>>),
    SparseReal(usize, &'a CsrMatrix),
    SparseComplex(usize, &'a ComplexCsr),
    SpectralDiffusion {
        x: usize,
        tau: usize,
        basis: &'a EigenBasis,
        mass: &'a [f64],
        /// `Phi^T M x`, `k x D` row-major.
        coeffs: Vec<f64>,
        times: Vec<f64>,
    },
    GradientFeatures {
        w: usize,
        a: usize,
        mode: GradientMode,
        /// `A w` per vertex, `[re | im]` blocks.
        aw: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        probs: Vec<f64>,
        target: Vec<f64>,
    },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Mul(..) => "mul",
            Op::Sum(..) => "sum",
            Op::Concat(..) => "concat",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Dropout(..) => "dropout",
            Op::RowSoftmax(..) => "row_softmax",
            Op::Log(..) => "log",
            Op::MeanRows(..) => "mean_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::RowAverage(..) => "row_average",
            Op::SparseReal(..) => "sparse_apply",
            Op::SparseComplex(..) => "sparse_apply_complex",
            Op::SpectralDiffusion { .. } => "spectral_diffusion",
            Op::GradientFeatures { .. } => "gradient_features",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddBias(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Sum(x)
            | Op::Relu(x)
            | Op::Tanh(x)
            | Op::Dropout(x, _)
            | Op::RowSoftmax(x)
            | Op::Log(x)
            | Op::MeanRows(x, _)
            | Op::GatherRows(x, _)
            | Op::RowAverage(x, _)
            | Op::SparseReal(x, _)
            | Op::SparseComplex(x, _) => vec![*x],
            Op::Concat(parts) => parts.clone(),
            Op::SpectralDiffusion { x, tau, .. } => vec![*x, *tau],
            Op::GradientFeatures { w, a, .. } => vec![*w, *a],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<'a> {
    value: Tensor,
    op: Op<'a>,
    requires_grad: bool,
}

/// Records operations for one forward pass; borrowed geometric operators must outlive it.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    generation: u64,
    nan_check: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Tape::new()
    }
}

/// Gradients produced by one backward pass, indexed by the variables of that pass.
#[derive(Debug)]
pub struct Gradients {
    generation: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.generation != self.generation {
            return None;
        }
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            generation: 0,
            nan_check: false,
        }
    }

    /// Fail any op whose output is not finite.
    pub fn with_nan_check(mut self, on: bool) -> Self {
        self.nan_check = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            id: self.nodes.len() - 1,
            generation: self.generation,
        }
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.idx(v).map(|i| &self.nodes[i].value)
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.generation != self.generation || v.id >= self.nodes.len() {
            return Err(Error::Detached);
        }
        Ok(v.id)
    }

    pub(crate) fn val(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op<'a>) -> Result<Var> {
        if self.nan_check && !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            id: self.nodes.len() - 1,
            generation: self.generation,
        })
    }

    /// Reverse traversal from a scalar; clears the tape afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let root = self.idx(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.nodes[root].value.shape().to_vec(),
                rhs: vec![],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root] = Some(Tensor::full(self.nodes[root].value.shape(), 1.0));
        for id in (0..=root).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = self.backward_node(id, &g);
            grads[id] = Some(g);
            for (input, dg) in contributions {
                if !self.nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&dg),
                    slot => *slot = Some(dg),
                }
            }
        }
        let generation = self.generation;
        for (id, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[id] = None;
            }
        }
        self.clear();
        Ok(Gradients { generation, grads })
    }

    /// Drop all recorded nodes; existing variables become detached.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.generation += 1;
    }

    fn backward_node(&self, id: usize, g: &Tensor) -> Vec<(usize, Tensor)> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => vec![],
            Op::SparseReal(..) | Op::SparseComplex(..) | Op::SpectralDiffusion { .. } | Op::GradientFeatures { .. } => {
                geometric::backward(self, &node.op, &node.value, g)
            }
            op => ops::backward(self, op, &node.value, g),
        }
    }
}

pub(crate) fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}
