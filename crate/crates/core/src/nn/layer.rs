//! Dense layer: `y = activation(x W^T + b)`.
//!
//! Weights are stored `[out, in]`, row-major. Batches are `[n, in]` matrices.
//! The pre-activation of each output is accumulated as
//! `((0 + x0*w0) + x1*w1) + ...` followed by `+ b`; every other routine that
//! claims bit-equality with this layer (segment composition, the test oracles)
//! relies on that exact order.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// dy/dz given both the pre-activation `z` and the output `y`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Activation,
}

/// Parameter gradients of one layer, same shapes as the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::input("layer weights must be [out, in]"));
        }
        if bias.shape() != [weights.rows()] {
            return Err(Error::input(format!(
                "bias shape {:?} does not match {} outputs",
                bias.shape(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Returns `(pre_activation, output)`, both `[n, out]`.
    pub(crate) fn forward(&self, input: &Tensor) -> (Tensor, Tensor) {
        let n = input.rows();
        let (out_w, in_w) = (self.out_width(), self.in_width());
        let w = self.weights.values();
        let b = self.bias.values();
        let mut pre = Vec::with_capacity(n * out_w);
        for i in 0..n {
            let x = input.row(i);
            for o in 0..out_w {
                let row = &w[o * in_w..(o + 1) * in_w];
                let mut acc = 0.0;
                for j in 0..in_w {
                    acc += x[j] * row[j];
                }
                pre.push(acc + b[o]);
            }
        }
        let post = pre.iter().map(|&z| self.activation.apply(z)).collect();
        (
            Tensor::from_parts(vec![n, out_w], pre),
            Tensor::from_parts(vec![n, out_w], post),
        )
    }

    /// Backpropagates `out_grad` (dL/dy, `[n, out]`) through the layer.
    pub(crate) fn backward(
        &self,
        input: &Tensor,
        pre: &Tensor,
        post: &Tensor,
        out_grad: &Tensor,
    ) -> (LayerGrads, Tensor) {
        let n = input.rows();
        let (out_w, in_w) = (self.out_width(), self.in_width());
        let w = self.weights.values();

        let dz: Vec<f64> = out_grad
            .values()
            .iter()
            .zip(pre.values().iter().zip(post.values()))
            .map(|(&g, (&z, &y))| g * self.activation.derivative(z, y))
            .collect();

        let mut dw = vec![0.0; out_w * in_w];
        let mut db = vec![0.0; out_w];
        let mut dx = vec![0.0; n * in_w];
        for i in 0..n {
            let x = input.row(i);
            let dz_row = &dz[i * out_w..(i + 1) * out_w];
            let dx_row = &mut dx[i * in_w..(i + 1) * in_w];
            for o in 0..out_w {
                let g = dz_row[o];
                db[o] += g;
                let w_row = &w[o * in_w..(o + 1) * in_w];
                let dw_row = &mut dw[o * in_w..(o + 1) * in_w];
                for j in 0..in_w {
                    dw_row[j] += g * x[j];
                    dx_row[j] += g * w_row[j];
                }
            }
        }
        (
            LayerGrads {
                weights: Tensor::from_parts(vec![out_w, in_w], dw),
                bias: Tensor::from_parts(vec![out_w], db),
            },
            Tensor::from_parts(vec![n, in_w], dx),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity2(activation: Activation) -> DenseLayer {
        DenseLayer::new(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            Tensor::vector(vec![0.0, 0.0]).unwrap(),
            activation,
        )
        .unwrap()
    }

    #[test]
    fn linear_identity_passes_input_through() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (_, y) = identity2(Activation::Linear).forward(&x);
        assert_eq!(y.values(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_clips_negatives() {
        let x = Tensor::from_rows(&[vec![-1.0, 2.0]]).unwrap();
        let (_, y) = identity2(Activation::Relu).forward(&x);
        assert_eq!(y.values(), &[0.0, 2.0]);
    }

    #[test]
    fn single_neuron_chain_rule() {
        // y = 2x + 0 at x = 3, dL/dy = 1
        let layer = DenseLayer::new(
            Tensor::from_rows(&[vec![2.0]]).unwrap(),
            Tensor::vector(vec![0.0]).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let x = Tensor::from_rows(&[vec![3.0]]).unwrap();
        let (pre, post) = layer.forward(&x);
        let g = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let (grads, dx) = layer.backward(&x, &pre, &post, &g);
        assert_eq!(grads.weights.values(), &[3.0]);
        assert_eq!(grads.bias.values(), &[1.0]);
        assert_eq!(dx.values(), &[2.0]);
    }

    #[test]
    fn bias_shape_is_checked() {
        let err = DenseLayer::new(
            Tensor::zeros(vec![2, 3]),
            Tensor::zeros(vec![3]),
            Activation::Relu,
        );
        assert!(err.is_err());
    }
}
