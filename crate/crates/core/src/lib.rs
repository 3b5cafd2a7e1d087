//! Deterministic simulator for privacy-preserving collaborative training.
//!
//! The crate trains a small dense binary classifier under five protocols
//! (Federated Learning, Split Learning, SplitFed v1/v2/v3). Every protocol
//! talks over an in-process message bus with a fixed binary wire format.
//! Around that sits an experiment harness that measures how much a client
//! loses when it trains first in a round instead of last.
//!
//! Module map:
//!
//! - [`nn`]: tensors, dense layers, BCE loss, Adam.
//! - [`split`]: cutting a model into client front / server body / client tail.
//! - [`transport`]: wire codec and the simulated channel bus.
//! - [`protocols`]: round engines, parameter averaging, checkpoint selection.
//! - [`data`]: synthetic non-IID client datasets.
//! - [`metrics`]: AUPRC, F1, Cohen's kappa, fixed-sensitivity thresholds.
//! - [`harness`]: experiment configs, order/client-count sweeps, reports.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod protocols;
pub mod rng;
pub mod split;
pub mod transport;

pub use error::{Error, Result};
