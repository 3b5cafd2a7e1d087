use crate::nn::SequentialModel;
use crate::{Error, Result};

/// Sample-count-weighted parameter mean.
///
/// `models` must be given in ascending client-id order; the sum runs in that
/// order. Each parameter is computed as
/// `theta_0 + (sum_i w_i * (theta_i - theta_0)) / sum_i w_i`, which is the
/// weighted mean and returns `theta_0` bit-for-bit when every model agrees
/// (including the single-model case).
pub fn average_params(models: &[&SequentialModel], weights: &[f64]) -> Result<SequentialModel> {
    let (first, rest) = models
        .split_first()
        .ok_or_else(|| Error::input("cannot average zero models"))?;
    if weights.len() != models.len() {
        return Err(Error::input(format!(
            "{} models but {} weights",
            models.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::input("averaging weights must be positive"));
    }
    for (i, m) in rest.iter().enumerate() {
        if !same_structure(first, m) {
            return Err(Error::input(format!(
                "model {} differs structurally from model 0",
                i + 1
            )));
        }
    }

    let flats: Vec<Vec<f64>> = models.iter().map(|m| m.flatten_params()).collect();
    let mut out = (*first).clone();
    out.load_flat(&average_flat(&flats, weights))?;
    Ok(out)
}

/// The anchored weighted mean of equal-length parameter vectors; callers
/// check lengths and weights.
pub(crate) fn average_flat(flats: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let anchor = &flats[0];
    let total: f64 = weights.iter().sum();
    let mut acc = vec![0.0; anchor.len()];
    for (theta, &w) in flats.iter().zip(weights) {
        for ((a, &base), &t) in acc.iter_mut().zip(anchor).zip(theta) {
            *a += w * (t - base);
        }
    }
    anchor
        .iter()
        .zip(&acc)
        .map(|(&base, &a)| base + a / total)
        .collect()
}

fn same_structure(a: &SequentialModel, b: &SequentialModel) -> bool {
    a.len() == b.len()
        && a.layers().iter().zip(b.layers()).all(|(x, y)| {
            x.in_width() == y.in_width()
                && x.out_width() == y.out_width()
                && x.activation() == y.activation()
        })
}

/// One entry of a training history.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    /// 1-based epoch the snapshot was taken after.
    pub epoch: usize,
    pub val_loss: f64,
    pub snapshot: T,
}

/// Index of the entry with the least validation loss; ties go to the earliest.
pub fn select_checkpoint<T>(history: &[Checkpoint<T>]) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::input("no checkpoints to select from"));
    }
    let mut best = 0;
    for (i, c) in history.iter().enumerate().skip(1) {
        if c.val_loss < history[best].val_loss {
            best = i;
        }
    }
    Ok(best)
}
