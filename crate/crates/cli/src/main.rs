use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splitsim_core::data::{generate_clients, write_datasets};
use splitsim_core::harness::{
    emit_message_log, emit_report, emit_runs, emit_text, for_each_seed, load_runs, median_drops,
    median_table, render_csv, render_drops_csv, render_metrics_csv, render_trend_csv,
    render_val_losses_csv, run_experiment, sweep_client_count, sweep_order, table_from_runs,
    ExperimentConfig, ReportTable, RunManifest, RunResult,
};
use splitsim_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "splitsim",
    version,
    about = "Deterministic FL / SL / SplitFed simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate client datasets and write them with their partition manifest.
    GenData(Overrides),
    /// Train and evaluate once.
    Run(Overrides),
    /// Compare each tracked client placed first and last in the order.
    SweepOrder(Overrides),
    /// Repeat the first/last comparison for each client-count setting.
    SweepClients(Overrides),
    /// Re-render tables from the runs stored in an output directory.
    Report {
        #[arg(long, value_name = "DIR")]
        from: PathBuf,
        /// Where to write the re-rendered files (default: stdout only).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Flags layered over the config file (or the defaults).
#[derive(Args)]
struct Overrides {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// fl, sl, sfv1, sfv2 or sfv3
    #[arg(long)]
    protocol: Option<String>,
    /// vanilla or ushape
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_name = "CLIENT_ID")]
    probe: Option<u16>,
    /// Run this many consecutive seeds and add a median summary.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use the first N clients.
    #[arg(long)]
    clients: Option<usize>,
    /// Divide the manifest counts by this.
    #[arg(long, value_name = "DIV")]
    scale: Option<usize>,
    /// Read clients from a dataset file instead of generating them.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Track every client in an order sweep.
    #[arg(long)]
    all_clients: bool,
    /// Run parallel-protocol clients on threads.
    #[arg(long)]
    threads: bool,
    /// Also write the message log.
    #[arg(long)]
    log: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.protocol {
            cfg.protocol = v.parse()?;
        }
        if let Some(v) = &self.split {
            cfg.split = v.parse()?;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.probe {
            cfg.probe = v;
        }
        if let Some(v) = self.seeds {
            cfg.seeds = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.clients {
            cfg.clients = Some(v);
        }
        if let Some(v) = self.scale {
            cfg.manifest_scale = v;
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        cfg.all_clients |= self.all_clients;
        cfg.threads |= self.threads;
        cfg.message_log |= self.log;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("splitsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(o) => gen_data(&o.resolve()?),
        Command::Run(o) => run(&o.resolve()?, "run"),
        Command::SweepOrder(o) => sweep(&o.resolve()?, "sweep-order"),
        Command::SweepClients(o) => sweep(&o.resolve()?, "sweep-clients"),
        Command::Report { from, out } => report(&from, out.as_deref()),
    }
}

fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.dataset.is_some() {
        return Err(Error::InvalidConfig(
            "gen-data writes a dataset; drop the dataset key".into(),
        ));
    }
    let n = cfg.client_count()?;
    let manifest = cfg.base_manifest()?.take(n)?;
    let clients = generate_clients(n, &manifest, &cfg.data_spec(), cfg.seed)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_datasets(&cfg.out.join("datasets.bin"), &clients)?;
    emit_text(&cfg.out, "partition.toml", &manifest.to_text()?)?;
    println!("wrote {} clients to {}", clients.len(), cfg.out.display());
    Ok(())
}

fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    if cfg.seeds > 1 {
        cfg.out.join(format!("seed-{seed}"))
    } else {
        cfg.out.clone()
    }
}

fn emit_run_files(cfg: &ExperimentConfig, dir: &Path, runs: &[RunResult]) -> Result<()> {
    emit_runs(runs, dir)?;
    emit_text(dir, "metrics.csv", &render_metrics_csv(runs))?;
    emit_text(dir, "val_losses.csv", &render_val_losses_csv(runs))?;
    if cfg.message_log {
        for (i, r) in runs.iter().enumerate() {
            let name = if runs.len() == 1 {
                "messages.ndjson".to_string()
            } else {
                format!("messages-{i}.ndjson")
            };
            emit_message_log(dir, &name, &r.log)?;
        }
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    let results = for_each_seed(cfg, run_experiment)?;
    for r in &results {
        emit_run_files(cfg, &seed_dir(cfg, r.seed), std::slice::from_ref(r))?;
    }
    if cfg.seeds > 1 {
        emit_text(&cfg.out, "metrics.csv", &render_metrics_csv(&results))?;
    }
    let seeds = results.iter().map(|r| r.seed).collect();
    RunManifest::new(command, cfg, seeds, &results).emit(&cfg.out)?;
    print!("{}", render_metrics_csv(&results));
    Ok(())
}

struct SeedSweep {
    seed: u64,
    table: ReportTable,
    trend: Option<String>,
    runs: Vec<RunResult>,
}

fn sweep(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    let by_count = command == "sweep-clients";
    let results = for_each_seed(cfg, |c| {
        if by_count {
            let o = sweep_client_count(c)?;
            Ok(SeedSweep {
                seed: c.seed,
                table: o.table,
                trend: Some(render_trend_csv(&o.trend)),
                runs: o.runs,
            })
        } else {
            let o = sweep_order(c)?;
            Ok(SeedSweep {
                seed: c.seed,
                table: o.table,
                trend: None,
                runs: o.runs,
            })
        }
    })?;
    for s in &results {
        let dir = seed_dir(cfg, s.seed);
        emit_report(&s.table, &dir, "report")?;
        if let Some(trend) = &s.trend {
            emit_text(&dir, "trend.csv", trend)?;
        }
        emit_run_files(cfg, &dir, &s.runs)?;
    }
    let tables: Vec<ReportTable> = results.iter().map(|s| s.table.clone()).collect();
    let shown = if cfg.seeds > 1 {
        write_summary(&tables, &cfg.out)?
    } else {
        tables[0].clone()
    };
    let seeds = results.iter().map(|s| s.seed).collect();
    let runs: Vec<RunResult> = results.into_iter().flat_map(|s| s.runs).collect();
    RunManifest::new(command, cfg, seeds, &runs).emit(&cfg.out)?;
    print!("{}", render_csv(&shown));
    Ok(())
}

fn write_summary(tables: &[ReportTable], dir: &Path) -> Result<ReportTable> {
    let summary = median_table(tables)?;
    emit_report(&summary, dir, "summary")?;
    emit_text(
        dir,
        "median_drops.csv",
        &render_drops_csv(&median_drops(tables)?),
    )?;
    Ok(summary)
}

/// Rebuilds report tables from `runs.json` in `from`, or from every
/// `seed-*/runs.json` below it for multi-seed output.
fn report(from: &Path, out: Option<&Path>) -> Result<()> {
    let single = from.join("runs.json");
    let table_dirs: Vec<PathBuf> = if single.is_file() {
        vec![from.to_path_buf()]
    } else {
        let mut dirs: Vec<(u64, PathBuf)> = std::fs::read_dir(from)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let seed = name.strip_prefix("seed-")?.parse().ok()?;
                e.path()
                    .join("runs.json")
                    .is_file()
                    .then(|| (seed, e.path()))
            })
            .collect();
        dirs.sort();
        dirs.into_iter().map(|(_, p)| p).collect()
    };
    if table_dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no runs.json under {}",
            from.display()
        )));
    }
    let tables = table_dirs
        .iter()
        .map(|d| table_from_runs(&load_runs(&d.join("runs.json"))?))
        .collect::<Result<Vec<_>>>()?;
    let shown = if tables.len() > 1 {
        match out {
            Some(dir) => write_summary(&tables, dir)?,
            None => median_table(&tables)?,
        }
    } else {
        if let Some(dir) = out {
            emit_report(&tables[0], dir, "report")?;
        }
        tables[0].clone()
    };
    print!("{}", render_csv(&shown));
    Ok(())
}
