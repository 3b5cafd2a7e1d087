use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::MetricReport;
use crate::protocols::ProtocolKind;
use crate::{Error, Result};

use super::config::ExperimentConfig;
use super::experiment::{load_clients, run_with_clients, RunResult};
use super::report::{DropTriple, MetricTriple, ReportRow, ReportTable};
use super::stats::median;

/// `[probe, others ascending]`.
pub fn probe_first(ids: &[u16], probe: u16) -> Vec<u16> {
    let mut order = vec![probe];
    order.extend(ids.iter().copied().filter(|&i| i != probe));
    order
}

/// `[others ascending, probe]`.
pub fn probe_last(ids: &[u16], probe: u16) -> Vec<u16> {
    let mut order: Vec<u16> = ids.iter().copied().filter(|&i| i != probe).collect();
    order.push(probe);
    order
}

/// Row label for a client: A, B, C, ...
pub fn client_label(id: u16) -> String {
    if id < 26 {
        char::from(b'A' + id as u8).to_string()
    } else {
        format!("client {id}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub table: ReportTable,
    pub runs: Vec<RunResult>,
}

fn triple(m: &MetricReport) -> MetricTriple {
    MetricTriple {
        auprc: m.auprc,
        f1: m.f1,
        kappa: m.kappa,
    }
}

fn probe_pair(
    cfg: &ExperimentConfig,
    clients: &[std::sync::Arc<crate::data::ClientDataset>],
    probe: u16,
    key: String,
    runs: &mut Vec<RunResult>,
) -> Result<ReportRow> {
    let ids: Vec<u16> = clients.iter().map(|c| c.id).collect();
    if !ids.contains(&probe) {
        return Err(Error::config(format!(
            "probe client {probe} is not present"
        )));
    }
    let first = run_with_clients(cfg, clients, &probe_first(&ids, probe))?;
    let last = run_with_clients(cfg, clients, &probe_last(&ids, probe))?;
    let row = ReportRow::new(
        key,
        triple(first.metrics_for(probe).expect("probe evaluated")),
        triple(last.metrics_for(probe).expect("probe evaluated")),
    );
    runs.push(first);
    runs.push(last);
    Ok(row)
}

/// Trains with each tracked client first and then last in the order and
/// tabulates its test metrics. Tracks every client when `all_clients` is set,
/// otherwise only the probe.
pub fn sweep_order(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let clients = load_clients(cfg)?;
    if clients.len() < 2 {
        return Err(Error::config("an order sweep needs at least two clients"));
    }
    let targets: Vec<u16> = if cfg.all_clients {
        clients.iter().map(|c| c.id).collect()
    } else {
        vec![cfg.probe]
    };
    let mut runs = Vec::new();
    let rows = targets
        .into_iter()
        .map(|t| probe_pair(cfg, &clients, t, client_label(t), &mut runs))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome {
        table: ReportTable {
            title: format!("order sweep ({})", cfg.protocol),
            protocol: cfg.protocol,
            rows,
        },
        runs,
    })
}

/// Drop of the probe's metrics at one client count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub clients: usize,
    pub drop: DropTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSweepOutcome {
    pub table: ReportTable,
    pub trend: Vec<TrendPoint>,
    pub runs: Vec<RunResult>,
}

/// Repeats the probe-first/probe-last comparison using the first `n`
/// clients for each `n` in `client_counts`.
pub fn sweep_client_count(cfg: &ExperimentConfig) -> Result<CountSweepOutcome> {
    let max = *cfg
        .client_counts
        .iter()
        .max()
        .ok_or_else(|| Error::config("client_counts is empty"))?;
    if cfg.client_counts.iter().any(|&n| n < 2) {
        return Err(Error::config(
            "each client-count setting needs at least two clients",
        ));
    }
    if usize::from(cfg.probe) >= *cfg.client_counts.iter().min().unwrap_or(&0) {
        return Err(Error::config(format!(
            "probe client {} is outside the smallest setting",
            cfg.probe
        )));
    }
    let cfg_all = ExperimentConfig {
        clients: Some(max),
        ..cfg.clone()
    };
    cfg_all.validate()?;
    let all = load_clients(&cfg_all)?;

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut trend = Vec::new();
    for &n in &cfg.client_counts {
        let row = probe_pair(cfg, &all[..n], cfg.probe, format!("{n} clients"), &mut runs)?;
        trend.push(TrendPoint {
            clients: n,
            drop: row.drop,
        });
        rows.push(row);
    }
    Ok(CountSweepOutcome {
        table: ReportTable {
            title: format!("client-count sweep ({})", cfg.protocol),
            protocol: cfg.protocol,
            rows,
        },
        trend,
        runs,
    })
}

/// The seeds a multi-seed run covers.
pub fn seed_list(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect()
}

/// Runs `f` once per seed (in parallel) and returns results in seed order.
pub fn for_each_seed<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&ExperimentConfig) -> Result<T> + Sync,
{
    seed_list(cfg)
        .into_par_iter()
        .map(|seed| {
            f(&ExperimentConfig {
                seed,
                seeds: 1,
                ..cfg.clone()
            })
        })
        .collect()
}

fn median_of<F: Fn(&ReportRow) -> f64>(rows: &[&ReportRow], f: F) -> f64 {
    median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
}

fn median_opt<F: Fn(&ReportRow) -> Option<f64>>(rows: &[&ReportRow], f: F) -> Option<f64> {
    let defined: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    median(&defined)
}

fn rows_by_key<'a>(tables: &'a [ReportTable]) -> Result<Vec<(String, Vec<&'a ReportRow>)>> {
    let first = tables
        .first()
        .ok_or_else(|| Error::input("no tables to summarize"))?;
    first
        .rows
        .iter()
        .map(|row| {
            let matching = tables
                .iter()
                .map(|t| {
                    t.rows
                        .iter()
                        .find(|r| r.key == row.key)
                        .ok_or_else(|| Error::input(format!("row {} missing in a table", row.key)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((row.key.clone(), matching))
        })
        .collect()
}

/// Per-key medians of the First and Last cells; drops are recomputed from
/// those medians.
pub fn median_table(tables: &[ReportTable]) -> Result<ReportTable> {
    let rows = rows_by_key(tables)?
        .into_iter()
        .map(|(key, rs)| {
            ReportRow::new(
                key,
                MetricTriple {
                    auprc: median_of(&rs, |r| r.first.auprc),
                    f1: median_of(&rs, |r| r.first.f1),
                    kappa: median_of(&rs, |r| r.first.kappa),
                },
                MetricTriple {
                    auprc: median_of(&rs, |r| r.last.auprc),
                    f1: median_of(&rs, |r| r.last.f1),
                    kappa: median_of(&rs, |r| r.last.kappa),
                },
            )
        })
        .collect();
    Ok(ReportTable {
        title: format!("{} (median of {} seeds)", tables[0].title, tables.len()),
        protocol: tables[0].protocol,
        rows,
    })
}

/// Per-key median of each seed's own drop. Seeds whose drop is undefined
/// are left out.
pub fn median_drops(tables: &[ReportTable]) -> Result<Vec<(String, DropTriple)>> {
    Ok(rows_by_key(tables)?
        .into_iter()
        .map(|(key, rs)| {
            let d = DropTriple {
                auprc: median_opt(&rs, |r| r.drop.auprc),
                f1: median_opt(&rs, |r| r.drop.f1),
                kappa: median_opt(&rs, |r| r.drop.kappa),
            };
            (key, d)
        })
        .collect())
}

/// Rebuilds a sweep table from its stored runs, which come in
/// (probe-first, probe-last) pairs. Rows are keyed by client count when the
/// pairs differ in size and by probe label otherwise.
pub fn table_from_runs(runs: &[RunResult]) -> Result<ReportTable> {
    if runs.is_empty() || runs.len() % 2 != 0 {
        return Err(Error::input("sweep runs must come in first/last pairs"));
    }
    let pairs: Vec<(&RunResult, &RunResult)> = runs.chunks(2).map(|p| (&p[0], &p[1])).collect();
    let by_count = pairs
        .iter()
        .any(|(a, _)| a.order.len() != pairs[0].0.order.len());
    let rows = pairs
        .iter()
        .map(|(first, last)| {
            let probe = first.order[0];
            let mut ids = first.order.clone();
            ids.sort_unstable();
            if last.order != probe_last(&ids, probe) || first.order != probe_first(&ids, probe) {
                return Err(Error::input("runs are not a probe-first/probe-last pair"));
            }
            let metrics = |r: &RunResult| {
                r.metrics_for(probe)
                    .map(triple)
                    .ok_or_else(|| Error::input("probe missing from run"))
            };
            let key = if by_count {
                format!("{} clients", ids.len())
            } else {
                client_label(probe)
            };
            Ok(ReportRow::new(key, metrics(first)?, metrics(last)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let protocol = runs[0].protocol;
    Ok(ReportTable {
        title: format!(
            "{} sweep ({protocol})",
            if by_count { "client-count" } else { "order" }
        ),
        protocol,
        rows,
    })
}

/// Checks a protocol name list such as `"sl,sfv2"`.
pub fn parse_protocols(list: &str) -> Result<Vec<ProtocolKind>> {
    list.split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<_>>>()
}
