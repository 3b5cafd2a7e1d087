//! Binary classification metrics: AUPRC, F1 and Cohen's kappa at a
//! threshold fixed by a target sensitivity, and the first-vs-last
//! percent drop.
//!
//! A score `s` is predicted positive when `s >= threshold`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sensitivity at which threshold-dependent metrics are evaluated.
pub const DEFAULT_SENSITIVITY: f64 = 0.81;

/// Scores in `[0, 1]` paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::input(format!(
                "{} scores and {} labels; need equal, non-zero lengths",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::input("scores must lie in [0, 1]"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::input("labels must be 0 or 1"));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    fn require_both_classes(&self) -> Result<()> {
        let p = self.positives();
        if p == 0 || p == self.len() {
            return Err(Error::input("both classes must be present"));
        }
        Ok(())
    }

    pub fn confusion_at(&self, threshold: f64) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (&s, &l) in self.scores.iter().zip(&self.labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean of precision and recall; 0 when there are no true positives.
pub fn f1(c: &ConfusionCounts) -> f64 {
    if c.tp == 0 {
        return 0.0;
    }
    let p = c.precision();
    let r = c.recall();
    2.0 * p * r / (p + r)
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`.
///
/// Fails with [`Error::Undefined`] when the marginals force `p_e = 1`.
pub fn cohen_kappa(c: &ConfusionCounts) -> Result<f64> {
    let n = c.total();
    if n == 0 {
        return Err(Error::input("kappa of an empty confusion matrix"));
    }
    let n = n as f64;
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let p_o = (tp + tn) / n;
    let p_e = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    if p_e >= 1.0 {
        return Err(Error::Undefined("kappa with chance agreement of 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Non-interpolated area under the precision-recall curve.
///
/// Sweeps thresholds from the highest score down; tied scores enter as one
/// group. Each group adds `(recall gain) * (precision after the group)`.
pub fn auprc(s: &ScoredSet) -> Result<f64> {
    s.require_both_classes()?;
    let positives = s.positives() as f64;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]));

    let (mut tp, mut fp) = (0u64, 0u64);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == score {
            if s.labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives;
        if recall > prev_recall {
            let precision = tp as f64 / (tp + fp) as f64;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// Recall achieved on the set the threshold was chosen on.
    pub recall: f64,
    /// Set when the target was non-positive (the smallest compliant cut is
    /// then the top positive score) or the chosen threshold is 0.
    pub degenerate: bool,
}

/// The largest threshold whose recall on `s` is at least `target`.
///
/// Only positive scores can change recall, so the answer is the
/// `k`-th highest positive score for the smallest `k` with `k / P >= target`
/// (at least one positive is always captured).
pub fn threshold_at_sensitivity(s: &ScoredSet, target: f64) -> Result<ThresholdChoice> {
    if !(target <= 1.0) || target.is_nan() {
        return Err(Error::input(format!(
            "sensitivity target {target} exceeds 1"
        )));
    }
    let mut pos: Vec<f64> = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&sc, _)| sc)
        .collect();
    if pos.is_empty() {
        return Err(Error::input("no positives to measure sensitivity on"));
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let p = pos.len() as f64;
    let k = (1..=pos.len())
        .find(|&k| k as f64 / p >= target)
        .unwrap_or(pos.len());
    let threshold = pos[k - 1];
    let recall = s.confusion_at(threshold).recall();
    Ok(ThresholdChoice {
        threshold,
        recall,
        degenerate: target <= 0.0 || threshold == 0.0,
    })
}

/// `100 * (last - first) / last`. Positive when the first-placed run scores
/// lower than the last-placed one.
pub fn percent_drop(first: f64, last: f64) -> Result<f64> {
    if last == 0.0 {
        return Err(Error::Undefined("percent drop relative to zero".into()));
    }
    Ok(100.0 * (last - first) / last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auprc: f64,
    pub f1: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub confusion: ConfusionCounts,
    /// F1 had no true positives and was reported as 0.
    pub f1_zero_tp: bool,
    pub degenerate_threshold: bool,
}

/// Picks the threshold on `val` at `sensitivity`, then scores `test`.
pub fn evaluate(val: &ScoredSet, test: &ScoredSet, sensitivity: f64) -> Result<MetricReport> {
    let choice = threshold_at_sensitivity(val, sensitivity)?;
    let confusion = test.confusion_at(choice.threshold);
    Ok(MetricReport {
        auprc: auprc(test)?,
        f1: f1(&confusion),
        kappa: cohen_kappa(&confusion)?,
        threshold: choice.threshold,
        confusion,
        f1_zero_tp: confusion.tp == 0,
        degenerate_threshold: choice.degenerate,
    })
}
