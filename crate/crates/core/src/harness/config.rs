use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DataSpec, PartitionManifest};
use crate::metrics::DEFAULT_SENSITIVITY;
use crate::nn::AdamConfig;
use crate::protocols::ProtocolKind;
use crate::split::{SplitConfig, SplitKind};
use crate::{Error, Result};

/// Experiment settings. Read from a flat TOML file; every key is optional
/// and falls back to the default below.
///
/// | key              | default              | meaning                                        |
/// |------------------|----------------------|------------------------------------------------|
/// | `protocol`       | `"sl"`               | fl, sl, sfv1, sfv2, sfv3                       |
/// | `split`          | `"ushape"`           | ushape or vanilla                              |
/// | `front_cut`      | 1                    | layers on the client front                     |
/// | `tail_cut`       | layers - 1 (ushape)  | first tail layer (vanilla: layer count)        |
/// | `widths`         | `[8, 16, 16, 16, 8, 1]` | layer widths, input first                   |
/// | `manifest`       | none                 | manifest file; default is the 5-client layout  |
/// | `manifest_scale` | 1                    | divide manifest counts by this                 |
/// | `dataset`        | none                 | dataset file to load instead of generating     |
/// | `clients`        | all                  | use the first N clients                        |
/// | `dim`            | 8                    | feature dimension                              |
/// | `cluster_std`    | 1.0                  | per-class Gaussian std                         |
/// | `separation`     | 2.0                  | distance between class means                   |
/// | `shift_scale`    | 1.0                  | per-client rotation/offset step                |
/// | `lr`             | 1e-4                 | Adam learning rate                             |
/// | `batch_size`     | 16                   | minibatch rows                                 |
/// | `epochs`         | 10                   | global epochs                                  |
/// | `seed`           | 0                    | base seed                                      |
/// | `seeds`          | 1                    | consecutive seeds in multi-seed mode           |
/// | `order`          | ascending ids        | client order for a single run                  |
/// | `probe`          | 0                    | client tracked by sweeps                       |
/// | `all_clients`    | false                | order sweep over every client, not just probe  |
/// | `client_counts`  | `[2, 3, 4, 5]`       | settings for the client-count sweep            |
/// | `sensitivity`    | 0.81                 | recall target for the decision threshold       |
/// | `threads`        | false                | run parallel-protocol clients on threads       |
/// | `message_log`    | false                | write the message log next to the report       |
/// | `out`            | `"out"`              | output directory                               |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub split: SplitKind,
    pub front_cut: Option<usize>,
    pub tail_cut: Option<usize>,
    pub widths: Vec<usize>,
    pub manifest: Option<PathBuf>,
    pub manifest_scale: usize,
    pub dataset: Option<PathBuf>,
    pub clients: Option<usize>,
    pub dim: usize,
    pub cluster_std: f64,
    pub separation: f64,
    pub shift_scale: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub seeds: usize,
    pub order: Option<Vec<u16>>,
    pub probe: u16,
    pub all_clients: bool,
    pub client_counts: Vec<usize>,
    pub sensitivity: f64,
    pub threads: bool,
    pub message_log: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let data = DataSpec::default();
        Self {
            protocol: ProtocolKind::Sl,
            split: SplitKind::UShaped,
            front_cut: None,
            tail_cut: None,
            widths: vec![data.dim, 16, 16, 16, 8, 1],
            manifest: None,
            manifest_scale: 1,
            dataset: None,
            clients: None,
            dim: data.dim,
            cluster_std: data.cluster_std,
            separation: data.separation,
            shift_scale: data.shift_scale,
            lr: AdamConfig::default().lr,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            seeds: 1,
            order: None,
            probe: 0,
            all_clients: false,
            client_counts: vec![2, 3, 4, 5],
            sensitivity: DEFAULT_SENSITIVITY,
            threads: false,
            message_log: false,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn data_spec(&self) -> DataSpec {
        DataSpec {
            dim: self.dim,
            cluster_std: self.cluster_std,
            separation: self.separation,
            shift_scale: self.shift_scale,
            ..DataSpec::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn split_config(&self) -> SplitConfig {
        let layers = self.layer_count();
        let default = SplitConfig::default_for(self.split, layers);
        SplitConfig {
            kind: self.split,
            front_cut: self.front_cut.unwrap_or(default.front_cut),
            tail_cut: match self.split {
                SplitKind::Vanilla => self.tail_cut.unwrap_or(layers),
                SplitKind::UShaped => self.tail_cut.unwrap_or(default.tail_cut),
            },
        }
    }

    /// The manifest before client truncation.
    pub fn base_manifest(&self) -> Result<PartitionManifest> {
        let base = match &self.manifest {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::config(format!("cannot read manifest {}: {e}", path.display()))
                })?;
                PartitionManifest::from_text(&text)?
            }
            None => PartitionManifest::hospitals(),
        };
        base.scaled(self.manifest_scale)
    }

    /// Number of participating clients.
    pub fn client_count(&self) -> Result<usize> {
        let available = self.base_manifest()?.len();
        let n = self.clients.unwrap_or(available);
        if n == 0 || n > available {
            return Err(Error::config(format!(
                "{n} clients requested, manifest has {available}"
            )));
        }
        Ok(n)
    }

    /// Checks everything that can be checked before training starts.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.seeds == 0 {
            return Err(Error::config("seeds must be at least 1"));
        }
        if self.widths.first() != Some(&self.dim) {
            return Err(Error::config(format!(
                "first width {:?} must equal the feature dimension {}",
                self.widths.first(),
                self.dim
            )));
        }
        if self.widths.len() < 2 || self.widths.last() != Some(&1) || self.widths.contains(&0) {
            return Err(Error::config("widths must be positive and end in 1"));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity <= 1.0) {
            return Err(Error::config("sensitivity must lie in (0, 1]"));
        }
        self.adam().validate()?;
        self.data_spec().validate()?;
        if self.protocol.is_split() {
            self.split_config().validate(self.layer_count())?;
        }
        if self.dataset.is_none() {
            let n = self.client_count()?;
            if let Some(order) = &self.order {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                let ids: Vec<u16> = (0..n as u16).collect();
                if sorted != ids {
                    return Err(Error::config(format!(
                        "order {order:?} is not a permutation of 0..{n}"
                    )));
                }
            }
        } else if let Some(path) = &self.dataset {
            if !path.exists() {
                return Err(Error::config(format!(
                    "dataset {} not found",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}
