//! Independent reference implementations shared by the oracle tests and the
//! acceptance target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitsim_core::metrics::{auprc, cohen_kappa, f1, ConfusionCounts, ScoredSet};
use splitsim_core::nn::{bce_loss, Activation, DenseLayer, SequentialModel, Tensor};
use splitsim_core::transport::{ControlCode, Message, MessageType};

const ACTS: [Activation; 3] = [Activation::Linear, Activation::Relu, Activation::Sigmoid];

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Forward pass written out as loops; returns every layer's pre-activations
/// and the final output.
pub fn naive_forward(model: &SequentialModel, x: &Tensor) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut cur = x.values().to_vec();
    let mut width = x.cols();
    let rows = x.rows();
    let mut pres = Vec::new();
    for layer in model.layers() {
        let (w, b) = (layer.weights().values(), layer.bias().values());
        let out = layer.out_width();
        let mut pre = vec![0.0; rows * out];
        let mut post = vec![0.0; rows * out];
        for i in 0..rows {
            for o in 0..out {
                let mut acc = 0.0;
                for j in 0..width {
                    acc += cur[i * width + j] * w[o * width + j];
                }
                let z = acc + b[o];
                pre[i * out + o] = z;
                post[i * out + o] = layer.activation().apply(z);
            }
        }
        pres.push(pre);
        cur = post;
        width = out;
    }
    (pres, cur)
}

/// A random model of 1 to 3 layers with mixed activations, an input batch,
/// and a loss: BCE when the model ends in one sigmoid unit, otherwise a fixed
/// linear functional of the output.
pub struct Trial {
    pub model: SequentialModel,
    pub x: Tensor,
    pub labels: Option<Tensor>,
    pub weights: Tensor,
}

impl Trial {
    pub fn loss(&self, model: &SequentialModel, x: &Tensor) -> f64 {
        let y = model.predict(x).unwrap();
        match &self.labels {
            Some(l) => bce_loss(&y, l).unwrap().0,
            None => y
                .values()
                .iter()
                .zip(self.weights.values())
                .map(|(a, b)| a * b)
                .sum(),
        }
    }
}

pub fn random_trial(rng: &mut ChaCha8Rng) -> Trial {
    loop {
        let depth = rng.random_range(1..=3);
        let mut widths = vec![rng.random_range(1..=4)];
        for _ in 0..depth {
            widths.push(rng.random_range(1..=4));
        }
        let classifier = rng.random_bool(0.5);
        if classifier {
            *widths.last_mut().unwrap() = 1;
        }
        let layers: Vec<DenseLayer> = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if classifier && i == depth - 1 {
                    Activation::Sigmoid
                } else {
                    ACTS[rng.random_range(0..3)]
                };
                DenseLayer::new(
                    random_tensor(rng, vec![w[1], w[0]], 1.0),
                    random_tensor(rng, vec![w[1]], 0.5),
                    act,
                )
                .unwrap()
            })
            .collect();
        let model = SequentialModel::new(layers).unwrap();
        let rows = rng.random_range(1..=4);
        let x = random_tensor(rng, vec![rows, widths[0]], 1.5);

        // Finite differences are meaningless at a ReLU kink; redraw instead.
        let (pres, _) = naive_forward(&model, &x);
        let near_kink =
            model.layers().iter().zip(&pres).any(|(l, p)| {
                l.activation() == Activation::Relu && p.iter().any(|z| z.abs() < 1e-3)
            });
        if near_kink {
            continue;
        }
        let labels = classifier.then(|| {
            Tensor::vector(
                (0..rows)
                    .map(|_| f64::from(rng.random_range(0..2u8)))
                    .collect(),
            )
            .unwrap()
        });
        let weights = random_tensor(rng, vec![rows, *widths.last().unwrap()], 1.0);
        return Trial {
            model,
            x,
            labels,
            weights,
        };
    }
}

/// `|a - n| / max(|a|, |n|, 1e-3)`; the floor keeps near-zero gradients
/// from turning rounding noise into large ratios.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Largest relative error between analytic gradients (parameters and input)
/// and central differences with step `h`, over `trials` random models.
pub fn gradient_check(trials: usize, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let t = random_trial(&mut rng);
        let (y, cache) = t.model.forward(&t.x).unwrap();
        let upstream = match &t.labels {
            Some(l) => bce_loss(&y, l).unwrap().1,
            None => t.weights.clone(),
        };
        let (grads, dx) = t.model.backward(&cache, &upstream).unwrap();

        let theta = t.model.flatten_params();
        let analytic = grads.flatten();
        assert_eq!(theta.len(), analytic.len());
        for k in 0..theta.len() {
            let mut plus = t.model.clone();
            let mut minus = t.model.clone();
            let mut p = theta.clone();
            p[k] += h;
            plus.load_flat(&p).unwrap();
            p[k] -= 2.0 * h;
            minus.load_flat(&p).unwrap();
            let numeric = (t.loss(&plus, &t.x) - t.loss(&minus, &t.x)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k], numeric));
        }

        let xs = t.x.values().to_vec();
        for k in 0..xs.len() {
            let mut v = xs.clone();
            v[k] += h;
            let xp = Tensor::new(t.x.shape().to_vec(), v.clone()).unwrap();
            v[k] -= 2.0 * h;
            let xm = Tensor::new(t.x.shape().to_vec(), v).unwrap();
            let numeric = (t.loss(&t.model, &xp) - t.loss(&t.model, &xm)) / (2.0 * h);
            worst = worst.max(rel_err(dx.values()[k], numeric));
        }
    }
    worst
}

/// Enumerates every distinct score as a cut-off, computes precision and
/// recall from scratch at each, and sums recall steps times precision.
pub fn brute_force_auprc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut cuts: Vec<f64> = scores.to_vec();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for t in cuts {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if *l == 1 {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        area += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    area
}

/// 2 to 20 scores with both classes present; half the sets use a coarse
/// grid so ties are common.
pub fn random_scored(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    loop {
        let n = rng.random_range(2..=20);
        let coarse = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    f64::from(rng.random_range(0..=5u8)) / 5.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        let p = labels.iter().filter(|&&l| l == 1).count();
        if p > 0 && p < n {
            return (scores, labels);
        }
    }
}

/// Largest |library - brute force| AUPRC difference over `trials` sets.
pub fn auprc_check(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (scores, labels) = random_scored(&mut rng);
        let want = brute_force_auprc(&scores, &labels);
        let got = auprc(&ScoredSet::new(scores, labels).unwrap()).unwrap();
        worst = worst.max((got - want).abs());
    }
    worst
}

pub fn naive_kappa(tp: f64, fp: f64, fn_: f64, tn: f64) -> f64 {
    let n = tp + fp + fn_ + tn;
    let observed = (tp + tn) / n;
    let yes = ((tp + fn_) / n) * ((tp + fp) / n);
    let no = ((tn + fp) / n) * ((tn + fn_) / n);
    let expected = yes + no;
    (observed - expected) / (1.0 - expected)
}

pub fn naive_f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp == 0.0 {
        return 0.0;
    }
    let p = tp / (tp + fp);
    let r = tp / (tp + fn_);
    2.0 * p * r / (p + r)
}

/// Largest F1 and kappa differences from the naive formulas over `cases`
/// random non-empty confusion matrices. An undefined library kappa counts
/// as a mismatch unless the naive value is also non-finite.
pub fn confusion_check(cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut f1_worst, mut k_worst): (f64, f64) = (0.0, 0.0);
    let mut checked = 0;
    while checked < cases {
        let c = ConfusionCounts {
            tp: rng.random_range(0..60),
            fp: rng.random_range(0..60),
            fn_: rng.random_range(0..60),
            tn: rng.random_range(0..200),
        };
        if c.total() == 0 {
            continue;
        }
        let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
        f1_worst = f1_worst.max((f1(&c) - naive_f1(tp, fp, fn_)).abs());
        let want = naive_kappa(tp, fp, fn_, tn);
        let diff = match cohen_kappa(&c) {
            Ok(k) => (k - want).abs(),
            Err(_) if !want.is_finite() => 0.0,
            Err(_) => f64::INFINITY,
        };
        k_worst = k_worst.max(diff);
        checked += 1;
    }
    (f1_worst, k_worst)
}

/// A message of any type with random header fields and, for tensor types,
/// a random rank-1..3 payload.
pub fn random_message(rng: &mut ChaCha8Rng) -> Message {
    let kind = MessageType::ALL[rng.random_range(0..MessageType::ALL.len())];
    let (s, r, round) = (rng.random(), rng.random(), rng.random());
    let mut m = if kind == MessageType::Control {
        Message::control(s, r, round, ControlCode::ALL[rng.random_range(0..3)])
    } else {
        let rank = rng.random_range(1..=3);
        let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=5)).collect();
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| {
                let v = f64::from_bits(rng.random::<u64>());
                if v.is_finite() {
                    v
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        Message::tensor(kind, s, r, round, Tensor::new(shape, values).unwrap())
    };
    m.seq = rng.random();
    m
}
