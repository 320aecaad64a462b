use crate::autodiff::Tensor;
use crate::net::DiffusionNetParams;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter plus the shared step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[&[usize]]) -> Self {
        AdamState {
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(params: &DiffusionNetParams) -> Self {
        let shapes: Vec<&[usize]> = (0..params.len()).map(|i| params.tensor(i).shape()).collect();
        Self::new(&shapes)
    }

    /// One update over `params`; entries whose gradient is `None` are left untouched.
    ///
    /// Every gradient is checked before anything is modified, so a non-finite gradient
    /// leaves parameters and moments as they were.
    pub fn step(&mut self, params: &mut [&mut Tensor], names: &[&str], grads: &[Option<&Tensor>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || names.len() != self.m.len() {
            return Err(Error::InvalidInput(format!(
                "optimizer tracks {} parameters but received {} tensors, {} names and {} gradients",
                self.m.len(),
                params.len(),
                names.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params[i].shape() {
                    return Err(Error::ShapeMismatch {
                        op: "adam_step",
                        lhs: params[i].shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient(names[i].to_string()));
                }
            }
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Apply one ADAM step to network parameters; frozen entries are skipped.
pub fn adam_step(params: &mut DiffusionNetParams, grads: &[Option<Tensor>], state: &mut AdamState, lr: f64) -> Result<()> {
    let trainable: Vec<bool> = (0..params.len()).map(|i| params.is_trainable(i)).collect();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let grad_refs: Vec<Option<&Tensor>> = grads
        .iter()
        .zip(&trainable)
        .map(|(g, &t)| if t { g.as_ref() } else { None })
        .collect();
    let mut tensors = params.tensors_mut();
    state.step(&mut tensors, &name_refs, &grad_refs, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(state: &mut AdamState, theta: &mut Tensor, g: f64, lr: f64) {
        let g = Tensor::scalar(g);
        state.step(&mut [theta], &["theta"], &[Some(&g)], lr).unwrap();
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(&[&[]]);
        let mut theta = Tensor::scalar(0.0);
        scalar_step(&mut s, &mut theta, 1.0, 0.001);
        assert!((theta.item() + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let mut s = AdamState::new(&[&[]]);
        let mut theta = Tensor::scalar(1.0);
        scalar_step(&mut s, &mut theta, 0.5, 0.01);
        scalar_step(&mut s, &mut theta, -2.0, 0.01);
        // Step 1: mhat = 0.5, vhat = 0.25.
        let t1 = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        // Step 2: m = 0.9*0.05 + 0.1*(-2), v = 0.999*0.00025 + 0.001*4.
        let m2: f64 = 0.9 * 0.05 - 0.2;
        let v2: f64 = 0.999 * 0.00025 + 0.004;
        let mh = m2 / (1.0 - 0.81);
        let vh = v2 / (1.0 - 0.999f64 * 0.999);
        let t2 = t1 - 0.01 * mh / (vh.sqrt() + 1e-8);
        assert!((theta.item() - t2).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(&[&[3]]);
        let mut theta = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let g = Tensor::zeros(&[3]);
        for _ in 0..5 {
            s.step(&mut [&mut theta], &["w"], &[Some(&g)], 0.1).unwrap();
        }
        assert_eq!(theta.data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_scale_invariant() {
        for c in [1e-3, 1.0, 1e4] {
            let mut s = AdamState::new(&[&[]]);
            let mut theta = Tensor::scalar(0.0);
            let g = 0.7 * c;
            scalar_step(&mut s, &mut theta, g, 0.001);
            assert!((theta.item() + 0.001 * g / (g + 1e-8)).abs() < 1e-15, "c = {c}");
            assert!((theta.item() + 0.001).abs() < 1e-7, "c = {c}");
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut s = AdamState::new(&[&[]]);
        let mut theta = Tensor::scalar(0.0);
        let g = Tensor::scalar(f64::NAN);
        let err = s.step(&mut [&mut theta], &["blocks.0.mlp.1.weight"], &[Some(&g)], 0.1).unwrap_err();
        assert!(err.to_string().contains("blocks.0.mlp.1.weight"));
        assert_eq!(s.step, 0);
        assert_eq!(theta.item(), 0.0);
    }
}
