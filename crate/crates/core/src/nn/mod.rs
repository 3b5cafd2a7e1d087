//! Dense-network training core: tensors, layers, forward and backward
//! passes, binary cross-entropy, and Adam. All arithmetic is `f64`.

mod adam;
mod layer;
mod loss;
mod model;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{Activation, DenseLayer, LayerGrads};
pub use loss::{bce_loss, PROB_CLAMP};
pub use model::{init_model, ForwardCache, Gradients, SequentialModel};
pub(crate) use tensor::checked_volume;
pub use tensor::Tensor;
