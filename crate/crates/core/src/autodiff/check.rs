use super::{Tape, Tensor, Var};
use crate::Result;

/// Central finite differences against the analytic gradient, per input tensor.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` for each input.
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
}

/// Check `f` at `inputs` with step `h = h_rel * max(1, max|x|)` per input tensor.
pub fn check_gradients<'a, F>(inputs: &[Tensor], h_rel: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)?.item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut work = inputs.to_vec();
    let mut relative_errors = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        let scale = input.data().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let h = h_rel * scale;
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..input.len() {
            let x0 = input.data()[j];
            work[i].data_mut()[j] = x0 + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = x0 - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        let denom = a2.max(n2).sqrt();
        relative_errors.push(if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom });
    }
    let max_relative_error = relative_errors.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheckReport {
        relative_errors,
        max_relative_error,
    })
}
