use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{generate_clients, read_datasets, ClientDataset, DataSplit};
use crate::metrics::{evaluate, MetricReport, ScoredSet};
use crate::nn::{bce_loss, init_model, Tensor};
use crate::protocols::{select_checkpoint, Checkpoint, ClientModel, ProtocolKind, Simulation};
use crate::split::{ModelSegments, SplitKind};
use crate::transport::{LogRecord, TrafficSummary};
use crate::{Error, Result};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientResult {
    pub id: u16,
    pub metrics: MetricReport,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: ProtocolKind,
    pub split: SplitKind,
    pub seed: u64,
    pub order: Vec<u16>,
    pub epochs: usize,
    /// 1-based epoch whose models were evaluated.
    pub checkpoint_epoch: usize,
    /// Pooled validation loss after each epoch.
    pub val_losses: Vec<f64>,
    pub clients: Vec<ClientResult>,
    pub traffic: TrafficSummary,
    #[serde(skip)]
    pub log: Vec<LogRecord>,
    #[serde(skip)]
    pub duration: Duration,
}

impl RunResult {
    pub fn metrics_for(&self, id: u16) -> Option<&MetricReport> {
        self.clients.iter().find(|c| c.id == id).map(|c| &c.metrics)
    }
}

/// Datasets for every client the config asks for, ascending by id.
pub fn load_clients(cfg: &ExperimentConfig) -> Result<Vec<Arc<ClientDataset>>> {
    let mut clients = match &cfg.dataset {
        Some(path) => read_datasets(path)?,
        None => generate_clients(
            cfg.client_count()?,
            &cfg.base_manifest()?,
            &cfg.data_spec(),
            cfg.seed,
        )?,
    };
    clients.sort_by_key(|c| c.id);
    if cfg.dataset.is_some() {
        if let Some(n) = cfg.clients {
            if n == 0 || n > clients.len() {
                return Err(Error::config(format!(
                    "{n} clients requested, dataset has {}",
                    clients.len()
                )));
            }
            clients.truncate(n);
        }
    }
    Ok(clients.into_iter().map(Arc::new).collect())
}

/// Runs `cfg` once with clients visited in the configured order (ascending
/// ids if none is set).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let clients = load_clients(cfg)?;
    let order = match &cfg.order {
        Some(o) => o.clone(),
        None => clients.iter().map(|c| c.id).collect(),
    };
    run_with_clients(cfg, &clients, &order)
}

fn scores(segments: &ModelSegments, split: &DataSplit) -> Result<Tensor> {
    segments.predict(&split.full().features)
}

/// Sample-weighted mean validation BCE over all clients.
fn pooled_val_loss(models: &[ClientModel], clients: &[Arc<ClientDataset>]) -> Result<f64> {
    let mut weighted = 0.0;
    let mut total = 0usize;
    for (m, c) in models.iter().zip(clients) {
        let probs = scores(&m.segments, &c.val)?;
        let labels = Tensor::vector(c.val.labels().iter().map(|&l| f64::from(l)).collect())?;
        let (loss, _) = bce_loss(&probs, &labels)?;
        weighted += loss * c.val.len() as f64;
        total += c.val.len();
    }
    Ok(weighted / total as f64)
}

fn scored(segments: &ModelSegments, split: &DataSplit) -> Result<ScoredSet> {
    ScoredSet::new(
        scores(segments, split)?.into_values(),
        split.labels().to_vec(),
    )
}

/// Trains on already-loaded clients, keeps the epoch with the lowest pooled
/// validation loss, and evaluates every client's model from that epoch.
pub fn run_with_clients(
    cfg: &ExperimentConfig,
    clients: &[Arc<ClientDataset>],
    order: &[u16],
) -> Result<RunResult> {
    let started = Instant::now();
    let model = init_model(&cfg.widths, cfg.seed)?;
    let mut sim = Simulation::new(
        cfg.protocol,
        model,
        cfg.split_config(),
        clients.to_vec(),
        cfg.adam(),
        cfg.batch_size,
    )?
    .with_threads(cfg.threads);

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        sim.run_round(order, cfg.seed)?;
        let models = sim.client_models();
        let val_loss = pooled_val_loss(&models, clients)?;
        history.push(Checkpoint {
            epoch,
            val_loss,
            snapshot: models,
        });
    }
    let best = &history[select_checkpoint(&history)?];

    let results = best
        .snapshot
        .iter()
        .zip(clients)
        .map(|(m, c)| {
            let val = scored(&m.segments, &c.val)?;
            let test = scored(&m.segments, &c.test)?;
            Ok(ClientResult {
                id: c.id,
                metrics: evaluate(&val, &test, cfg.sensitivity)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunResult {
        protocol: cfg.protocol,
        split: cfg.split,
        seed: cfg.seed,
        order: order.to_vec(),
        epochs: cfg.epochs,
        checkpoint_epoch: best.epoch,
        val_losses: history.iter().map(|c| c.val_loss).collect(),
        clients: results,
        traffic: sim.bus().traffic(),
        log: if cfg.message_log {
            sim.bus().log()
        } else {
            Vec::new()
        },
        duration: started.elapsed(),
    })
}
