use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer, LayerGrads};
use super::Tensor;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// An ordered stack of dense layers whose widths chain.
///
/// A stack may be empty; it then acts as the identity. That is what a
/// vanilla split leaves on the client tail. Full classifiers additionally
/// satisfy [`SequentialModel::is_classifier`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequentialModel {
    layers: Vec<DenseLayer>,
}

/// Everything `backward` needs from a `forward` call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Tensor>,
    pre: Vec<Tensor>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.activations
            .last()
            .expect("cache always holds the input")
    }
}

/// Parameter gradients for every layer of a model, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// Gradient tensors in canonical parameter order (weights, bias per layer).
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|g| [&g.weights, &g.bias])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }
}

impl SequentialModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::input(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_width(),
                    i + 1,
                    pair[1].in_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn in_width(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::in_width)
    }

    pub fn out_width(&self) -> Option<usize> {
        self.layers.last().map(DenseLayer::out_width)
    }

    /// Non-empty, and ends in a single sigmoid unit.
    pub fn is_classifier(&self) -> bool {
        self.layers
            .last()
            .is_some_and(|l| l.out_width() == 1 && l.activation() == Activation::Sigmoid)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Parameters in canonical order: weights then bias, layer by layer.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [l.weights(), l.bias()])
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        self.params()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }

    /// Overwrites every parameter from a flat vector in canonical order.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::input(format!(
                "flat parameter vector has {} values, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite parameter"));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Bitwise parameter equality (also checks layer structure).
    pub fn bit_eq(&self, other: &SequentialModel) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.activation() == b.activation()
                    && a.weights().bit_eq(b.weights())
                    && a.bias().bit_eq(b.bias())
            })
    }

    /// Hash over parameter bits, used to detect stale caches.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01B3;
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for l in &self.layers {
            h = (h ^ l.in_width() as u64).wrapping_mul(PRIME);
            h = (h ^ l.out_width() as u64).wrapping_mul(PRIME);
            for v in l.weights().values().iter().chain(l.bias().values()) {
                h = (h ^ v.to_bits()).wrapping_mul(PRIME);
            }
        }
        h
    }

    /// Runs `input` (`[n, in]`) through every layer. An empty model returns
    /// the input unchanged.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
        if input.rank() != 2 {
            return Err(Error::input(format!(
                "forward expects a [n, d] batch, got shape {:?}",
                input.shape()
            )));
        }
        if let Some(w) = self.in_width() {
            if input.cols() != w {
                return Err(Error::input(format!(
                    "input width {} does not match model width {w}",
                    input.cols()
                )));
            }
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let (z, y) = layer.forward(activations.last().expect("non-empty"));
            pre.push(z);
            activations.push(y);
        }
        let cache = ForwardCache {
            fingerprint: self.fingerprint(),
            activations,
            pre,
        };
        Ok((cache.output().clone(), cache))
    }

    /// Inference-only forward pass.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Backpropagates dL/d(output) through the model described by `cache`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        loss_grad: &Tensor,
    ) -> Result<(Gradients, Tensor)> {
        if cache.pre.len() != self.layers.len() || cache.fingerprint != self.fingerprint() {
            return Err(Error::state(
                "forward cache was produced by different parameters",
            ));
        }
        if loss_grad.shape() != cache.output().shape() {
            return Err(Error::input(format!(
                "loss gradient shape {:?} does not match output shape {:?}",
                loss_grad.shape(),
                cache.output().shape()
            )));
        }
        let mut grad = loss_grad.clone();
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g, dx) = layer.backward(
                &cache.activations[i],
                &cache.pre[i],
                &cache.activations[i + 1],
                &grad,
            );
            layer_grads.push(g);
            grad = dx;
        }
        layer_grads.reverse();
        Ok((
            Gradients {
                layers: layer_grads,
            },
            grad,
        ))
    }
}

/// Builds a classifier with the given layer widths (`widths[0]` is the input
/// dimension, the last width must be 1). Hidden layers use ReLU, the head
/// uses sigmoid.
///
/// Weights are Glorot-uniform on `±sqrt(6 / (in + out))`, drawn layer by
/// layer in row-major order from a ChaCha8 stream keyed by `seed`. Biases
/// start at zero.
pub fn init_model(widths: &[usize], seed: u64) -> Result<SequentialModel> {
    if widths.len() < 2 {
        return Err(Error::input("need at least an input and an output width"));
    }
    if widths.contains(&0) {
        return Err(Error::input("widths must be positive"));
    }
    if *widths.last().expect("len checked") != 1 {
        return Err(Error::input(
            "final width must be 1 for a binary classifier",
        ));
    }
    let mut rng = stream_rng(seed, Stream::ModelInit, 0);
    let depth = widths.len() - 1;
    let mut layers = Vec::with_capacity(depth);
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        let activation = if i + 1 == depth {
            Activation::Sigmoid
        } else {
            Activation::Relu
        };
        layers.push(DenseLayer::new(
            Tensor::from_parts(vec![fan_out, fan_in], weights),
            Tensor::zeros(vec![fan_out]),
            activation,
        )?);
    }
    SequentialModel::new(layers)
}
