//! Experiment driver: configuration, single runs, order and client-count
//! sweeps, multi-seed summaries, and report files.

mod config;
mod experiment;
mod report;
mod stats;
mod sweep;

pub use config::ExperimentConfig;
pub use experiment::{load_clients, run_experiment, run_with_clients, ClientResult, RunResult};
pub use report::{
    emit_message_log, emit_report, emit_runs, emit_text, load_runs, load_table, render_csv,
    render_drops_csv, render_metrics_csv, render_trend_csv, render_val_losses_csv, Counters,
    DropTriple, MetricTriple, ReportRow, ReportTable, RunManifest, CSV_HEADER,
};
pub use stats::{average_ranks, median, spearman};
pub use sweep::{
    client_label, for_each_seed, median_drops, median_table, parse_protocols, probe_first,
    probe_last, seed_list, sweep_client_count, sweep_order, table_from_runs, CountSweepOutcome,
    SweepOutcome, TrendPoint,
};
