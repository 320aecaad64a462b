use rand::Rng as _;

use super::{mismatch, Op, Tape, Tensor, Var};
use crate::blas::{gemm, View};
use crate::rng;
use crate::{Error, Result};

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = a.dims2();
    let m = b.cols();
    let mut out = vec![0.0; n * m];
    gemm(n, k, m, 1.0, View::row_major(a.data(), k), View::row_major(b.data(), m), 0.0, &mut out);
    Tensor::matrix(n, m, out).expect("matmul output")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}

impl<'a> Tape<'a> {
    fn is_matrix(&self, id: usize) -> bool {
        self.val(id).shape().len() == 2
    }

    /// `(n x k) (k x m) -> (n x m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (self.val(ia), self.val(ib));
        if !self.is_matrix(ia) || !self.is_matrix(ib) || va.cols() != vb.rows() {
            return Err(mismatch("matmul", va, vb));
        }
        let out = matmul_raw(va, vb);
        self.push(out, Op::MatMul(ia, ib))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (self.val(ia), self.val(ib));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va, vb));
        }
        let out = zip(va, vb, |x, y| x + y);
        self.push(out, Op::Add(ia, ib))
    }

    /// Adds a length-`C` row vector to every row of an `N x C` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x)?, self.idx(bias)?);
        let (vx, vb) = (self.val(ix), self.val(ib));
        if !self.is_matrix(ix) || vb.shape() != [vx.cols()] {
            return Err(mismatch("add_bias", vx, vb));
        }
        let c = vx.cols();
        let data = vx.data().iter().enumerate().map(|(i, v)| v + vb.data()[i % c]).collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        self.push(out, Op::AddBias(ix, ib))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.val(ix).map(|v| v * s);
        self.push(out, Op::Scale(ix, s))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (self.val(ia), self.val(ib));
        if va.shape() != vb.shape() {
            return Err(mismatch("mul", va, vb));
        }
        let out = zip(va, vb, |x, y| x * y);
        self.push(out, Op::Mul(ia, ib))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let s = self.val(ix).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(ix))
    }

    /// Concatenate matrices with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let ids = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let Some(&first) = ids.first() else {
            return Err(Error::InvalidInput("concat of nothing".into()));
        };
        let rows = self.val(first).rows();
        for &i in &ids {
            if !self.is_matrix(i) || self.val(i).rows() != rows {
                return Err(mismatch("concat", self.val(first), self.val(i)));
            }
        }
        let cols: usize = ids.iter().map(|&i| self.val(i).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &ids {
                data.extend_from_slice(self.val(i).row(r));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        self.push(out, Op::Concat(ids))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.val(ix).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(ix))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.val(ix).map(f64::tanh);
        self.push(out, Op::Tanh(ix))
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - p)`; identity when not training.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, seed: u64) -> Result<Var> {
        let ix = self.idx(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("dropout probability {p} outside [0, 1)")));
        }
        let n = self.val(ix).len();
        let mask: Vec<f64> = if !train || p == 0.0 {
            vec![1.0; n]
        } else {
            let mut rng = rng::seeded(seed);
            let keep = 1.0 / (1.0 - p);
            (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
        };
        let v = self.val(ix);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().zip(&mask).map(|(a, m)| a * m).collect())?;
        self.push(out, Op::Dropout(ix, mask))
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let (rows, cols) = v.dims2();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(softmax(v.row(r)));
        }
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push(out, Op::RowSoftmax(ix))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.val(ix).map(f64::ln);
        self.push(out, Op::Log(ix))
    }

    /// Mean over rows, `N x C -> 1 x C`; weighted by `weights` (e.g. vertex masses) when given.
    pub fn mean_rows(&mut self, x: Var, weights: Option<&[f64]>) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let (rows, cols) = v.dims2();
        let w: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != rows {
                    return Err(Error::ShapeMismatch {
                        op: "mean_rows",
                        lhs: v.shape().to_vec(),
                        rhs: vec![w.len()],
                    });
                }
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidInput("mean_rows weights must have a positive sum".into()));
                }
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / rows as f64; rows],
        };
        let mut data = vec![0.0; cols];
        for r in 0..rows {
            for (c, x) in v.row(r).iter().enumerate() {
                data[c] += w[r] * x;
            }
        }
        let out = Tensor::matrix(1, cols, data)?;
        self.push(out, Op::MeanRows(ix, w))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let (rows, cols) = v.dims2();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidInput(format!("gather_rows index {bad} out of {rows} rows")));
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(v.row(i));
        }
        let out = Tensor::matrix(idx.len(), cols, data)?;
        self.push(out, Op::GatherRows(ix, idx.to_vec()))
    }

    /// Output row `i` is the mean of input rows `groups[i]` (e.g. face vertices).
    pub fn row_average(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.val(ix);
        let (rows, cols) = v.dims2();
        let mut data = vec![0.0; groups.len() * cols];
        for (o, g) in groups.iter().enumerate() {
            if g.is_empty() || g.iter().any(|&i| i >= rows) {
                return Err(Error::InvalidInput(format!("row_average group {o} is empty or out of range")));
            }
            let w = 1.0 / g.len() as f64;
            for &i in g {
                for (c, x) in v.row(i).iter().enumerate() {
                    data[o * cols + c] += w * x;
                }
            }
        }
        let out = Tensor::matrix(groups.len(), cols, data)?;
        self.push(out, Op::RowAverage(ix, groups))
    }

    /// Mean over rows of the label-smoothed cross entropy between `softmax(logits)` and
    /// `(1 - alpha) onehot + alpha / C`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], alpha: f64) -> Result<Var> {
        let il = self.idx(logits)?;
        let v = self.val(il);
        let (rows, cols) = v.dims2();
        if targets.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: v.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::InvalidInput(format!("class index {bad} out of range for {cols} classes")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("label smoothing {alpha} outside [0, 1)")));
        }
        let mut probs = Vec::with_capacity(rows * cols);
        let mut target = vec![alpha / cols as f64; rows * cols];
        let mut loss = 0.0;
        for r in 0..rows {
            target[r * cols + targets[r]] += 1.0 - alpha;
            let row = v.row(r);
            let lse = log_sum_exp(row);
            for c in 0..cols {
                let logp = row[c] - lse;
                loss -= target[r * cols + c] * logp;
                probs.push(logp.exp());
            }
        }
        let out = Tensor::scalar(loss / rows as f64);
        self.push(out, Op::CrossEntropy { logits: il, probs, target })
    }
}

/// `ln(sum(exp(row)))` without overflow.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub(super) fn backward(tape: &Tape, op: &Op, out: &Tensor, g: &Tensor) -> Vec<(usize, Tensor)> {
    match op {
        Op::MatMul(a, b) => {
            let (va, vb) = (tape.val(*a), tape.val(*b));
            let (n, k) = va.dims2();
            let m = vb.cols();
            let mut da = vec![0.0; n * k];
            gemm(n, m, k, 1.0, View::row_major(g.data(), m), View::row_major(vb.data(), m).t(), 0.0, &mut da);
            let mut db = vec![0.0; k * m];
            gemm(k, n, m, 1.0, View::row_major(va.data(), k).t(), View::row_major(g.data(), m), 0.0, &mut db);
            vec![
                (*a, Tensor::matrix(n, k, da).expect("shape")),
                (*b, Tensor::matrix(k, m, db).expect("shape")),
            ]
        }
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::AddBias(x, b) => {
            let c = g.cols();
            let mut db = vec![0.0; c];
            for (i, v) in g.data().iter().enumerate() {
                db[i % c] += v;
            }
            vec![(*x, g.clone()), (*b, Tensor::vector(db))]
        }
        Op::Scale(x, s) => vec![(*x, g.map(|v| v * s))],
        Op::Mul(a, b) => vec![
            (*a, zip(g, tape.val(*b), |x, y| x * y)),
            (*b, zip(g, tape.val(*a), |x, y| x * y)),
        ],
        Op::Sum(x) => vec![(*x, Tensor::full(tape.val(*x).shape(), g.item()))],
        Op::Concat(parts) => {
            let rows = g.rows();
            let mut offset = 0;
            let mut res = Vec::with_capacity(parts.len());
            for &p in parts {
                let c = tape.val(p).cols();
                let mut data = Vec::with_capacity(rows * c);
                for r in 0..rows {
                    data.extend_from_slice(&g.row(r)[offset..offset + c]);
                }
                offset += c;
                res.push((p, Tensor::matrix(rows, c, data).expect("shape")));
            }
            res
        }
        Op::Relu(x) => vec![(*x, zip(g, tape.val(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 }))],
        Op::Tanh(x) => vec![(*x, zip(g, out, |gv, y| gv * (1.0 - y * y)))],
        Op::Dropout(x, mask) => vec![(
            *x,
            Tensor::new(g.shape().to_vec(), g.data().iter().zip(mask).map(|(a, m)| a * m).collect())
                .expect("shape"),
        )],
        Op::RowSoftmax(x) => {
            let (rows, cols) = g.dims2();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let (gr, yr) = (g.row(r), out.row(r));
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                data.extend(gr.iter().zip(yr).map(|(gv, y)| y * (gv - dot)));
            }
            vec![(*x, Tensor::new(g.shape().to_vec(), data).expect("shape"))]
        }
        Op::Log(x) => vec![(*x, zip(g, tape.val(*x), |gv, xv| gv / xv))],
        Op::MeanRows(x, w) => {
            let v = tape.val(*x);
            let cols = v.cols();
            let data = (0..v.len()).map(|i| w[i / cols] * g.data()[i % cols]).collect();
            vec![(*x, Tensor::new(v.shape().to_vec(), data).expect("shape"))]
        }
        Op::GatherRows(x, idx) => {
            let v = tape.val(*x);
            let cols = v.cols();
            let mut dx = Tensor::zeros(v.shape());
            for (o, &i) in idx.iter().enumerate() {
                for c in 0..cols {
                    dx.data_mut()[i * cols + c] += g.data()[o * cols + c];
                }
            }
            vec![(*x, dx)]
        }
        Op::RowAverage(x, groups) => {
            let v = tape.val(*x);
            let cols = v.cols();
            let mut dx = Tensor::zeros(v.shape());
            for (o, grp) in groups.iter().enumerate() {
                let w = 1.0 / grp.len() as f64;
                for &i in grp {
                    for c in 0..cols {
                        dx.data_mut()[i * cols + c] += w * g.data()[o * cols + c];
                    }
                }
            }
            vec![(*x, dx)]
        }
        Op::CrossEntropy { logits, probs, target } => {
            let v = tape.val(*logits);
            let scale = g.item() / v.rows() as f64;
            let data = probs.iter().zip(target).map(|(p, q)| scale * (p - q)).collect();
            vec![(*logits, Tensor::new(v.shape().to_vec(), data).expect("shape"))]
        }
        _ => unreachable!("geometric ops are handled separately"),
    }
}
