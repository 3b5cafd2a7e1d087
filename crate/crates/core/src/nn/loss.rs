use super::Tensor;
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy over a batch.
///
/// `probs` is `[n, 1]`, `labels` is `[n]` with values in {0, 1}. Returns the
/// loss and its gradient with respect to `probs`, evaluated at the clamped
/// probabilities.
pub fn bce_loss(probs: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    if probs.rank() != 2 || probs.cols() != 1 {
        return Err(Error::input(format!(
            "probabilities must be [n, 1], got {:?}",
            probs.shape()
        )));
    }
    let n = probs.rows();
    if labels.shape() != [n] {
        return Err(Error::input(format!(
            "labels shape {:?} does not match {n} predictions",
            labels.shape()
        )));
    }
    if labels.values().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::input("labels must be 0 or 1"));
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &y) in probs.values().iter().zip(labels.values()) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        grad.push((-y / p + (1.0 - y) / (1.0 - p)) * scale);
    }
    Ok((total * scale, Tensor::from_parts(vec![n, 1], grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn coin_flip_costs_ln2() {
        let (l, _) = bce_loss(&col(&[0.5]), &Tensor::vector(vec![1.0]).unwrap()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let (l, _) = bce_loss(&col(&[1.0 - 1e-12]), &Tensor::vector(vec![1.0]).unwrap()).unwrap();
        assert!(l.abs() < 1e-11);
        let (l, _) = bce_loss(&col(&[1.0]), &Tensor::vector(vec![1.0]).unwrap()).unwrap();
        assert!(l >= 0.0 && l < 1e-11);
    }

    #[test]
    fn batch_mean_matches_direct_formula() {
        let (l, g) = bce_loss(&col(&[0.9, 0.2]), &Tensor::vector(vec![1.0, 0.0]).unwrap()).unwrap();
        let expected = (-(0.9f64).ln() + -(0.8f64).ln()) / 2.0;
        assert!((l - expected).abs() < 1e-15);
        assert!((g.values()[0] - (-1.0 / 0.9) / 2.0).abs() < 1e-15);
        assert!((g.values()[1] - (1.0 / 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_finite() {
        let (l, g) = bce_loss(&col(&[0.0]), &Tensor::vector(vec![1.0]).unwrap()).unwrap();
        assert!(l.is_finite() && g.values()[0].is_finite());
    }

    #[test]
    fn rejects_bad_shapes_and_labels() {
        assert!(bce_loss(&col(&[0.5, 0.5]), &Tensor::vector(vec![1.0]).unwrap()).is_err());
        assert!(bce_loss(&col(&[0.5]), &Tensor::vector(vec![0.5]).unwrap()).is_err());
    }
}
