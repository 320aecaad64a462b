use crate::autodiff::{Tape, Tensor};
use crate::Result;

/// Mean over rows of `-sum_c q_c log softmax(logits)_c` with `q = (1 - alpha) onehot + alpha / C`.
pub fn label_smoothed_cross_entropy(logits: &Tensor, targets: &[usize], alpha: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(logits.clone());
    let loss = tape.cross_entropy(x, targets, alpha)?;
    Ok(tape.value(loss)?.item())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let logits = Tensor::full(&[3, 5], 0.7);
        for alpha in [0.0, 0.2, 0.5] {
            let l = label_smoothed_cross_entropy(&logits, &[0, 4, 2], alpha).unwrap();
            assert!((l - 5f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn two_class_closed_form() {
        let logits = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let l = label_smoothed_cross_entropy(&logits, &[0], 0.2).unwrap();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = -0.9 * sig(1.0).ln() - 0.1 * sig(-1.0).ln();
        assert!((l - expected).abs() < 1e-14);
        assert!((l - 0.41326).abs() < 1e-5);
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let logits = Tensor::matrix(1, 3, vec![800.0, 0.0, -5.0]).unwrap();
        let l = label_smoothed_cross_entropy(&logits, &[0], 0.0).unwrap();
        assert!(l.abs() < 1e-300 || l == 0.0);
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(label_smoothed_cross_entropy(&logits, &[2], 0.0).is_err());
    }
}
