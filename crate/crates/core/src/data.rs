//! Synthetic non-IID client data.
//!
//! Each client draws samples from two isotropic Gaussian clusters, one per
//! class. Client `k` rotates the class-separation vector by `k * shift_scale`
//! radians in the plane of the first two feature axes and shifts both
//! clusters by `k * shift_scale` along the third axis. With `shift_scale = 0`
//! every client shares one distribution.
//!
//! Each split gets an exact positive count (`round(n * prevalence)`), which
//! is then shuffled. Every client has its own random stream, so client `k`'s
//! data does not depend on how many other clients are generated.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"SDS1";

/// One labelled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u8,
}

/// A set of samples stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSplit {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

/// A minibatch: `features` is `[n, d]`, `labels` is `[n]` with values in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Tensor,
}

impl DataSplit {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::input(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::input("labels must be 0 or 1"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite feature"));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn from_samples(dim: usize, samples: &[Sample]) -> Result<Self> {
        if samples.iter().any(|s| s.features.len() != dim) {
            return Err(Error::input("sample width mismatch"));
        }
        Self::new(
            dim,
            samples
                .iter()
                .flat_map(|s| s.features.iter().copied())
                .collect(),
            samples.iter().map(|s| s.label).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            features: self.features[i * self.dim..(i + 1) * self.dim].to_vec(),
            label: self.labels[i],
        }
    }

    /// Rows `range` as a batch.
    pub fn batch(&self, range: std::ops::Range<usize>) -> Batch {
        let n = range.len();
        Batch {
            features: Tensor::from_parts(
                vec![n, self.dim],
                self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            ),
            labels: Tensor::from_parts(
                vec![n],
                self.labels[range].iter().map(|&l| f64::from(l)).collect(),
            ),
        }
    }

    /// Consecutive batches of `batch_size` rows in stored order; the last one
    /// may be shorter.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = Batch> + '_ {
        let n = self.len();
        let step = batch_size.max(1);
        (0..n)
            .step_by(step)
            .map(move |start| self.batch(start..(start + step).min(n)))
    }

    /// The whole split as one batch.
    pub fn full(&self) -> Batch {
        self.batch(0..self.len())
    }
}

/// Fraction of label-1 samples.
pub fn prevalence(split: &DataSplit) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::input("prevalence of an empty split"));
    }
    Ok(split.positives() as f64 / split.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientShift {
    /// Rotation of the class-separation vector, radians.
    pub angle: f64,
    /// Shift of both class means along the third feature axis.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub id: u16,
    pub shift: ClientShift,
    pub train: DataSplit,
    pub val: DataSplit,
    pub test: DataSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Per-client split sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub clients: Vec<ClientCounts>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    clients: usize,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    total_train: usize,
    total_val: usize,
    total_test: usize,
}

impl PartitionManifest {
    /// Five clients with the uneven train counts of the original hospital
    /// study and 500 validation / 500 test samples each.
    pub fn hospitals() -> Self {
        let train = [1816, 3772, 1150, 880, 1090];
        Self {
            clients: train
                .into_iter()
                .map(|t| ClientCounts {
                    train: t,
                    val: 500,
                    test: 500,
                })
                .collect(),
        }
    }

    /// Every count divided by `divisor`, rounded to the nearest integer.
    pub fn scaled(&self, divisor: usize) -> Result<Self> {
        if divisor == 0 {
            return Err(Error::input("scale divisor must be positive"));
        }
        Ok(Self {
            clients: self
                .clients
                .iter()
                .map(|c| ClientCounts {
                    train: div_round(c.train, divisor),
                    val: div_round(c.val, divisor),
                    test: div_round(c.test, divisor),
                })
                .collect(),
        })
    }

    /// The first `n` clients.
    pub fn take(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.clients.len() {
            return Err(Error::config(format!(
                "cannot take {n} clients from a manifest of {}",
                self.clients.len()
            )));
        }
        Ok(Self {
            clients: self.clients[..n].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn totals(&self) -> ClientCounts {
        self.clients.iter().fold(
            ClientCounts {
                train: 0,
                val: 0,
                test: 0,
            },
            |acc, c| ClientCounts {
                train: acc.train + c.train,
                val: acc.val + c.val,
                test: acc.test + c.test,
            },
        )
    }

    /// Renders the manifest as a key-value text file.
    pub fn to_text(&self) -> Result<String> {
        let totals = self.totals();
        let file = ManifestFile {
            clients: self.len(),
            train: self.clients.iter().map(|c| c.train).collect(),
            val: self.clients.iter().map(|c| c.val).collect(),
            test: self.clients.iter().map(|c| c.test).collect(),
            total_train: totals.train,
            total_val: totals.val,
            total_test: totals.test,
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file: ManifestFile = toml::from_str(text)?;
        let n = file.clients;
        if file.train.len() != n || file.val.len() != n || file.test.len() != n {
            return Err(Error::config(
                "manifest count lists disagree with client count",
            ));
        }
        let manifest = Self {
            clients: (0..n)
                .map(|i| ClientCounts {
                    train: file.train[i],
                    val: file.val[i],
                    test: file.test[i],
                })
                .collect(),
        };
        let t = manifest.totals();
        if (t.train, t.val, t.test) != (file.total_train, file.total_val, file.total_test) {
            return Err(Error::config(
                "manifest totals do not match per-client counts",
            ));
        }
        Ok(manifest)
    }
}

fn div_round(n: usize, d: usize) -> usize {
    (n + d / 2) / d
}

/// Shape of the synthetic distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub dim: usize,
    pub cluster_std: f64,
    /// Distance between the two class means.
    pub separation: f64,
    pub shift_scale: f64,
    pub train_prevalence: f64,
    pub eval_prevalence: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            dim: 8,
            cluster_std: 1.0,
            separation: 2.0,
            shift_scale: 1.0,
            train_prevalence: 0.5,
            eval_prevalence: 0.1,
        }
    }
}

impl DataSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::config("feature dimension must be at least 3"));
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::config("cluster_std must be positive"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config("separation must be non-negative"));
        }
        if !(self.shift_scale >= 0.0 && self.shift_scale.is_finite()) {
            return Err(Error::config("shift_scale must be non-negative"));
        }
        for p in [self.train_prevalence, self.eval_prevalence] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config(format!("prevalence {p} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn shift_for(&self, client: u16) -> ClientShift {
        let k = f64::from(client);
        ClientShift {
            angle: k * self.shift_scale,
            offset: k * self.shift_scale,
        }
    }

    /// Class means `(negative, positive)` for `client`.
    pub fn class_means(&self, client: u16) -> (Vec<f64>, Vec<f64>) {
        let shift = self.shift_for(client);
        let half = self.separation / 2.0;
        let mut neg = vec![0.0; self.dim];
        let mut pos = vec![0.0; self.dim];
        let (s, c) = shift.angle.sin_cos();
        pos[0] = half * c;
        pos[1] = half * s;
        neg[0] = -half * c;
        neg[1] = -half * s;
        pos[2] = shift.offset;
        neg[2] = shift.offset;
        (neg, pos)
    }
}

fn positives_for(n: usize, prevalence: f64) -> Result<usize> {
    let pos = (n as f64 * prevalence).round() as usize;
    if pos == 0 || pos >= n {
        return Err(Error::config(format!(
            "a split of {n} samples cannot hold prevalence {prevalence} with both classes present"
        )));
    }
    Ok(pos)
}

fn draw_split<R: Rng>(
    rng: &mut R,
    spec: &DataSpec,
    means: &(Vec<f64>, Vec<f64>),
    n: usize,
    prevalence: f64,
) -> Result<DataSplit> {
    let pos = positives_for(n, prevalence)?;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < pos)).collect();
    labels.shuffle(rng);
    let mut features = Vec::with_capacity(n * spec.dim);
    for &label in &labels {
        let mu = if label == 1 { &means.1 } else { &means.0 };
        for &m in mu {
            let z: f64 = rng.sample(StandardNormal);
            features.push(m + spec.cluster_std * z);
        }
    }
    DataSplit::new(spec.dim, features, labels)
}

/// Generates datasets for the first `n_clients` entries of `manifest`.
pub fn generate_clients(
    n_clients: usize,
    manifest: &PartitionManifest,
    spec: &DataSpec,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    spec.validate()?;
    let manifest = manifest.take(n_clients)?;
    let n_clients = u16::try_from(n_clients)
        .ok()
        .filter(|&n| n < u16::MAX)
        .ok_or_else(|| Error::config("too many clients"))?;
    (0..n_clients)
        .zip(&manifest.clients)
        .map(|(k, counts)| {
            let mut rng = stream_rng(seed, Stream::Data, u64::from(k));
            let means = spec.class_means(k);
            Ok(ClientDataset {
                id: k,
                shift: spec.shift_for(k),
                train: draw_split(&mut rng, spec, &means, counts.train, spec.train_prevalence)?,
                val: draw_split(&mut rng, spec, &means, counts.val, spec.eval_prevalence)?,
                test: draw_split(&mut rng, spec, &means, counts.test, spec.eval_prevalence)?,
            })
        })
        .collect()
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::input("count exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Binary dataset file:
///
/// ```text
/// "SDS1" | dim u32 | clients u32
/// per client:  id u16 | train u32 | val u32 | test u32 | angle f64 | offset f64
/// per client, per split (train, val, test), per sample: dim x f64 | label u8
/// ```
///
/// Integers and reals are little-endian.
pub fn encode_datasets(clients: &[ClientDataset]) -> Result<Vec<u8>> {
    let dim = clients.first().map_or(0, |c| c.train.dim());
    let mut out = Vec::new();
    out.extend_from_slice(&DATASET_MAGIC);
    put_u32(&mut out, dim)?;
    put_u32(&mut out, clients.len())?;
    for c in clients {
        out.extend_from_slice(&c.id.to_le_bytes());
        for s in [&c.train, &c.val, &c.test] {
            if s.dim() != dim && !s.is_empty() {
                return Err(Error::input("clients disagree on feature dimension"));
            }
            put_u32(&mut out, s.len())?;
        }
        out.extend_from_slice(&c.shift.angle.to_le_bytes());
        out.extend_from_slice(&c.shift.offset.to_le_bytes());
    }
    for c in clients {
        for s in [&c.train, &c.val, &c.test] {
            for i in 0..s.len() {
                for v in &s.features[i * dim..(i + 1) * dim] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.push(s.labels[i]);
            }
        }
    }
    Ok(out)
}

pub fn decode_datasets(bytes: &[u8]) -> Result<Vec<ClientDataset>> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::input("dataset file is truncated"))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != DATASET_MAGIC {
        return Err(Error::input("not a dataset file (bad magic)"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let dim = u32_at(take(4)?);
    let n = u32_at(take(4)?);
    let mut headers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let id = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
        let counts = [u32_at(take(4)?), u32_at(take(4)?), u32_at(take(4)?)];
        let shift = ClientShift {
            angle: f64_at(take(8)?),
            offset: f64_at(take(8)?),
        };
        headers.push((id, counts, shift));
    }
    let mut clients = Vec::with_capacity(headers.len());
    for (id, counts, shift) in headers {
        let mut splits = Vec::with_capacity(3);
        for count in counts {
            let mut features = Vec::with_capacity(count.saturating_mul(dim).min(1 << 24));
            let mut labels = Vec::with_capacity(count.min(1 << 24));
            for _ in 0..count {
                for chunk in take(dim * 8)?.chunks_exact(8) {
                    features.push(f64_at(chunk));
                }
                labels.push(take(1)?[0]);
            }
            splits.push(DataSplit::new(dim, features, labels)?);
        }
        let test = splits.pop().expect("three splits");
        let val = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        clients.push(ClientDataset {
            id,
            shift,
            train,
            val,
            test,
        });
    }
    if pos != bytes.len() {
        return Err(Error::input("trailing bytes after dataset"));
    }
    Ok(clients)
}

pub fn write_datasets(path: &Path, clients: &[ClientDataset]) -> Result<()> {
    let bytes = encode_datasets(clients)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_datasets(path: &Path) -> Result<Vec<ClientDataset>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_datasets(&bytes)
}
