//! Layer-boundary cuts of a [`SequentialModel`] into a client-side front, a
//! server-side body, and (U-shaped only) a client-side tail holding the
//! output head.

use serde::{Deserialize, Serialize};

use crate::nn::{ForwardCache, Gradients, SequentialModel, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Client holds the front only; labels must travel to the server.
    Vanilla,
    /// Client holds front and tail; inputs and labels stay local.
    UShaped,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(SplitKind::Vanilla),
            "ushape" | "u_shaped" | "u-shaped" => Ok(SplitKind::UShaped),
            other => Err(Error::config(format!("unknown split kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitKind::Vanilla => "vanilla",
            SplitKind::UShaped => "ushape",
        })
    }
}

/// Body covers layers `front_cut..tail_cut`; the tail covers the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub kind: SplitKind,
    pub front_cut: usize,
    pub tail_cut: usize,
}

impl SplitConfig {
    pub fn vanilla(front_cut: usize, layer_count: usize) -> Self {
        Self {
            kind: SplitKind::Vanilla,
            front_cut,
            tail_cut: layer_count,
        }
    }

    pub fn u_shaped(front_cut: usize, tail_cut: usize) -> Self {
        Self {
            kind: SplitKind::UShaped,
            front_cut,
            tail_cut,
        }
    }

    /// Default cut for a model with `layer_count` layers: one client layer
    /// on each side, everything else on the server.
    pub fn default_for(kind: SplitKind, layer_count: usize) -> Self {
        match kind {
            SplitKind::Vanilla => Self::vanilla(1, layer_count),
            SplitKind::UShaped => Self::u_shaped(1, layer_count.saturating_sub(1)),
        }
    }

    pub fn validate(&self, layer_count: usize) -> Result<()> {
        let Self {
            kind,
            front_cut,
            tail_cut,
        } = *self;
        if front_cut < 1 || front_cut > tail_cut || tail_cut > layer_count {
            return Err(Error::config(format!(
                "cuts ({front_cut}, {tail_cut}) invalid for {layer_count} layers; need 1 <= front <= tail <= layers"
            )));
        }
        match kind {
            SplitKind::Vanilla if tail_cut != layer_count => Err(Error::config(
                "vanilla split cannot have a tail; tail_cut must equal the layer count",
            )),
            SplitKind::UShaped if tail_cut == layer_count => Err(Error::config(
                "u-shaped split needs at least one tail layer holding the output head",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSegments {
    pub front: SequentialModel,
    pub body: SequentialModel,
    /// Empty under a vanilla split.
    pub tail: SequentialModel,
}

/// Cuts `model` at the configured layer boundaries. The layers are moved
/// into the segments.
pub fn split_model(model: SequentialModel, config: SplitConfig) -> Result<ModelSegments> {
    config.validate(model.len())?;
    let mut layers = model.into_layers();
    let tail = layers.split_off(config.tail_cut);
    let body = layers.split_off(config.front_cut);
    Ok(ModelSegments {
        front: SequentialModel::new(layers)?,
        body: SequentialModel::new(body)?,
        tail: SequentialModel::new(tail)?,
    })
}

/// Forward caches for the three segments.
#[derive(Debug, Clone)]
pub struct SegmentCaches {
    pub front: ForwardCache,
    pub body: ForwardCache,
    pub tail: ForwardCache,
}

/// Gradients for the three segments plus dL/d(input).
#[derive(Debug, Clone)]
pub struct SegmentGradients {
    pub front: Gradients,
    pub body: Gradients,
    pub tail: Gradients,
    pub input: Tensor,
}

impl ModelSegments {
    pub fn param_count(&self) -> usize {
        self.front.param_count() + self.body.param_count() + self.tail.param_count()
    }

    /// Reassembles the original layer list.
    pub fn concat(&self) -> SequentialModel {
        let layers = [&self.front, &self.body, &self.tail]
            .into_iter()
            .flat_map(|m| m.layers().iter().cloned())
            .collect();
        SequentialModel::new(layers).expect("segments chain by construction")
    }

    fn check_boundaries(&self) -> Result<()> {
        let pairs = [(&self.front, &self.body), (&self.body, &self.tail)];
        for (a, b) in pairs {
            if let (Some(out), Some(inp)) = (a.out_width(), b.in_width()) {
                if out != inp {
                    return Err(Error::state(format!(
                        "segment boundary mismatch: {out} outputs feed {inp} inputs"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Runs front, body, tail in sequence; identical arithmetic to the uncut
    /// model's forward pass.
    pub fn composed_forward(&self, input: &Tensor) -> Result<(Tensor, SegmentCaches)> {
        self.check_boundaries()?;
        let (smashed, front) = self.front.forward(input)?;
        let (body_out, body) = self.body.forward(&smashed)?;
        let (out, tail) = self.tail.forward(&body_out)?;
        Ok((out, SegmentCaches { front, body, tail }))
    }

    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.composed_forward(input).map(|(out, _)| out)
    }

    /// Segment-wise backward pass, tail to front.
    pub fn composed_backward(
        &self,
        caches: &SegmentCaches,
        loss_grad: &Tensor,
    ) -> Result<SegmentGradients> {
        let (tail, g) = self.tail.backward(&caches.tail, loss_grad)?;
        let (body, g) = self.body.backward(&caches.body, &g)?;
        let (front, input) = self.front.backward(&caches.front, &g)?;
        Ok(SegmentGradients {
            front,
            body,
            tail,
            input,
        })
    }
}
