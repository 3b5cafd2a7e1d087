use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::percent_drop;
use crate::protocols::ProtocolKind;
use crate::transport::{LogRecord, TrafficSummary};
use crate::Result;

use super::config::ExperimentConfig;
use super::experiment::RunResult;
use super::sweep::TrendPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub auprc: f64,
    pub f1: f64,
    pub kappa: f64,
}

/// Percent drops; `None` where the Last value is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropTriple {
    pub auprc: Option<f64>,
    pub f1: Option<f64>,
    pub kappa: Option<f64>,
}

impl DropTriple {
    pub fn between(first: &MetricTriple, last: &MetricTriple) -> Self {
        Self {
            auprc: percent_drop(first.auprc, last.auprc).ok(),
            f1: percent_drop(first.f1, last.f1).ok(),
            kappa: percent_drop(first.kappa, last.kappa).ok(),
        }
    }
}

impl MetricTriple {
    /// Each score rounded to the 4 places a table shows.
    pub fn quantized(&self) -> Self {
        let q = |v: f64| (v * 1e4).round() / 1e4;
        Self {
            auprc: q(self.auprc),
            f1: q(self.f1),
            kappa: q(self.kappa),
        }
    }
}

/// One table row. Scores are held at table precision and the drops are
/// computed from exactly those values, so anyone reading the table back can
/// recompute every drop cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub first: MetricTriple,
    pub last: MetricTriple,
    pub drop: DropTriple,
}

impl ReportRow {
    pub fn new(key: String, first: MetricTriple, last: MetricTriple) -> Self {
        let (first, last) = (first.quantized(), last.quantized());
        Self {
            key,
            drop: DropTriple::between(&first, &last),
            first,
            last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub protocol: ProtocolKind,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str =
    "row,auprc_first,auprc_last,auprc_drop,f1_first,f1_last,f1_drop,kappa_first,kappa_last,kappa_drop";

fn fixed(v: f64, places: usize) -> String {
    let s = format!("{v:.places$}");
    // -0.0 and tiny negatives would otherwise print with a sign.
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn score_cell(v: f64) -> String {
    fixed(v, 4)
}

fn drop_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |d| fixed(d, 2))
}

fn csv_key(key: &str) -> String {
    if key.contains([',', '"', '\n']) {
        format!("\"{}\"", key.replace('"', "\"\""))
    } else {
        key.to_string()
    }
}

/// Table as CSV: scores to 4 decimals, drops to 2, undefined drops spelled
/// out.
pub fn render_csv(table: &ReportTable) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_key(&r.key),
            score_cell(r.first.auprc),
            score_cell(r.last.auprc),
            drop_cell(r.drop.auprc),
            score_cell(r.first.f1),
            score_cell(r.last.f1),
            drop_cell(r.drop.f1),
            score_cell(r.first.kappa),
            score_cell(r.last.kappa),
            drop_cell(r.drop.kappa),
        );
    }
    out
}

pub fn render_trend_csv(trend: &[TrendPoint]) -> String {
    let mut out = String::from("clients,auprc_drop,f1_drop,kappa_drop\n");
    for p in trend {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.clients,
            drop_cell(p.drop.auprc),
            drop_cell(p.drop.f1),
            drop_cell(p.drop.kappa)
        );
    }
    out
}

/// Same as [`render_csv`] with the drop columns only, for per-seed median drops.
pub fn render_drops_csv(drops: &[(String, DropTriple)]) -> String {
    let mut out = String::from("row,auprc_drop,f1_drop,kappa_drop\n");
    for (key, d) in drops {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_key(key),
            drop_cell(d.auprc),
            drop_cell(d.f1),
            drop_cell(d.kappa)
        );
    }
    out
}

/// One line per (run, client): the raw test metrics at full precision.
pub fn render_metrics_csv(runs: &[RunResult]) -> String {
    let mut out = String::from(
        "seed,protocol,split,order,client,checkpoint_epoch,auprc,f1,kappa,threshold,tp,fp,fn,tn\n",
    );
    for r in runs {
        let order: Vec<String> = r.order.iter().map(u16::to_string).collect();
        for c in &r.clients {
            let m = &c.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.protocol,
                r.split,
                order.join("-"),
                c.id,
                r.checkpoint_epoch,
                m.auprc,
                m.f1,
                m.kappa,
                m.threshold,
                m.confusion.tp,
                m.confusion.fp,
                m.confusion.fn_,
                m.confusion.tn
            );
        }
    }
    out
}

/// Pooled validation loss per epoch, one column per run.
pub fn render_val_losses_csv(runs: &[RunResult]) -> String {
    let mut out = String::from("epoch");
    for i in 0..runs.len() {
        let _ = write!(out, ",run{i}");
    }
    out.push('\n');
    let epochs = runs.iter().map(|r| r.val_losses.len()).max().unwrap_or(0);
    for e in 0..epochs {
        let _ = write!(out, "{}", e + 1);
        for r in runs {
            match r.val_losses.get(e) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Message log as newline-delimited JSON.
pub fn emit_message_log(dir: &Path, name: &str, log: &[LogRecord]) -> Result<PathBuf> {
    let mut text = String::new();
    for rec in log {
        text.push_str(&serde_json::to_string(rec)?);
        text.push('\n');
    }
    write(dir, name, &text)
}

/// Reads a `runs.json` written by [`emit_runs`].
pub fn load_runs(path: &Path) -> Result<Vec<RunResult>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn emit_report(table: &ReportTable, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write(dir, &format!("{stem}.csv"), &render_csv(table))?,
        write(
            dir,
            &format!("{stem}.json"),
            &serde_json::to_string_pretty(table)?,
        )?,
    ])
}

pub fn emit_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    write(dir, name, contents)
}

pub fn emit_runs(runs: &[RunResult], dir: &Path) -> Result<PathBuf> {
    write(dir, "runs.json", &serde_json::to_string_pretty(runs)?)
}

/// Reads a table written by [`emit_report`].
pub fn load_table(path: &Path) -> Result<ReportTable> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Message and byte counters summed over a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub messages: u64,
    pub total_bytes: u64,
    pub upstream_bytes: u64,
    pub downstream_bytes: u64,
    pub bytes_by_type: BTreeMap<String, u64>,
    pub count_by_type: BTreeMap<String, u64>,
}

impl Counters {
    pub fn sum<'a>(traffic: impl IntoIterator<Item = &'a TrafficSummary>) -> Self {
        let mut c = Counters {
            messages: 0,
            total_bytes: 0,
            upstream_bytes: 0,
            downstream_bytes: 0,
            bytes_by_type: BTreeMap::new(),
            count_by_type: BTreeMap::new(),
        };
        for t in traffic {
            c.messages += t.messages;
            c.total_bytes += t.total_bytes;
            c.upstream_bytes += t.upstream_bytes;
            c.downstream_bytes += t.downstream_bytes;
            for (k, v) in &t.bytes_by_type {
                *c.bytes_by_type.entry(k.name().to_string()).or_default() += v;
            }
            for (k, v) in &t.count_by_type {
                *c.count_by_type.entry(k.name().to_string()).or_default() += v;
            }
        }
        c
    }
}

/// Everything needed to reproduce an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub checkpoint_epochs: Vec<usize>,
    pub counters: Counters,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, seeds: Vec<u64>, runs: &[RunResult]) -> Self {
        Self {
            version: concat!("splitsim ", env!("CARGO_PKG_VERSION")).to_string(),
            command: command.to_string(),
            seeds,
            runs: runs.len(),
            checkpoint_epochs: runs.iter().map(|r| r.checkpoint_epoch).collect(),
            counters: Counters::sum(runs.iter().map(|r| &r.traffic)),
            config: cfg.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn emit(&self, dir: &Path) -> Result<PathBuf> {
        write(dir, "manifest.toml", &self.to_toml()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(a: f64, f: f64, k: f64) -> MetricTriple {
        MetricTriple {
            auprc: a,
            f1: f,
            kappa: k,
        }
    }

    fn table() -> ReportTable {
        ReportTable {
            title: "x".into(),
            protocol: ProtocolKind::Sl,
            rows: vec![
                ReportRow::new("A".into(), t(0.5, 0.4, 0.3), t(0.6, 0.4, 0.0)),
                ReportRow::new("B".into(), t(0.75, 0.1, -0.2), t(0.5, 0.2, -0.2)),
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let csv = render_csv(&table());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "A,0.5000,0.6000,16.67,0.4000,0.4000,0.00,0.3000,0.0000,undefined"
        );
        assert_eq!(
            lines[2],
            "B,0.7500,0.5000,-50.00,0.1000,0.2000,50.00,-0.2000,-0.2000,0.00"
        );
    }

    #[test]
    fn negative_zero_prints_unsigned() {
        assert_eq!(fixed(-0.0, 2), "0.00");
        assert_eq!(fixed(-0.001, 2), "0.00");
        assert_eq!(fixed(-0.01, 2), "-0.01");
    }

    #[test]
    fn emitted_files_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&table(), dir.path(), "t").unwrap();
        let first: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        emit_report(&table(), dir.path(), "t").unwrap();
        let second: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        assert_eq!(load_table(&paths[1]).unwrap(), table());
    }

    #[test]
    fn manifest_serializes() {
        let m = RunManifest::new("run", &ExperimentConfig::default(), vec![0], &[]);
        let text = m.to_toml().unwrap();
        assert!(text.contains("version = \"splitsim "));
        assert!(text.contains("[config]"));
    }
}
