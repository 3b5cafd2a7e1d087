use splitsim_core::harness::*;
use splitsim_core::metrics::percent_drop;
use splitsim_core::protocols::ProtocolKind;
use splitsim_core::split::SplitKind;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        manifest_scale: 10,
        clients: Some(3),
        epochs: 3,
        lr: 1e-3,
        ..ExperimentConfig::default()
    }
}

#[test]
fn same_config_and_seed_give_identical_files() {
    let cfg = small();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = Vec::new();
    for d in &dirs {
        let out = sweep_order(&cfg).unwrap();
        emit_report(&out.table, d.path(), "order").unwrap();
        emit_runs(&out.runs, d.path()).unwrap();
        RunManifest::new("sweep-order", &cfg, vec![cfg.seed], &out.runs)
            .emit(d.path())
            .unwrap();
        let mut names: Vec<_> = std::fs::read_dir(d.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        files.push(
            names
                .iter()
                .map(|n| (n.clone(), std::fs::read(d.path().join(n)).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(files[0].len(), 4);
    assert_eq!(files[0], files[1]);
}

#[test]
fn different_seeds_give_different_runs() {
    let a = run_experiment(&small()).unwrap();
    let b = run_experiment(&ExperimentConfig { seed: 1, ..small() }).unwrap();
    assert_ne!(a.clients, b.clients);
}

#[test]
fn every_protocol_agrees_with_a_single_client() {
    let base = ExperimentConfig {
        clients: Some(1),
        ..small()
    };
    let reference = run_experiment(&base).unwrap();
    for protocol in [
        ProtocolKind::Fl,
        ProtocolKind::Sfv1,
        ProtocolKind::Sfv2,
        ProtocolKind::Sfv3,
    ] {
        for split in [SplitKind::UShaped, SplitKind::Vanilla] {
            let r = run_experiment(&ExperimentConfig {
                protocol,
                split,
                ..base.clone()
            })
            .unwrap();
            assert_eq!(r.clients, reference.clients, "{protocol} {split}");
            assert_eq!(r.val_losses, reference.val_losses);
        }
    }
}

#[test]
fn parallel_protocols_report_zero_drops() {
    for protocol in [ProtocolKind::Fl, ProtocolKind::Sfv3] {
        let out = sweep_order(&ExperimentConfig {
            protocol,
            all_clients: true,
            ..small()
        })
        .unwrap();
        assert_eq!(out.table.rows.len(), 3);
        for line in render_csv(&out.table).lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            for i in [3, 6, 9] {
                assert!(cells[i] == "0.00" || cells[i] == "undefined", "{line}");
            }
        }
    }
}

#[test]
fn drop_cells_recompute_from_printed_scores() {
    let cfg = ExperimentConfig {
        all_clients: true,
        ..small()
    };
    let out = sweep_order(&cfg).unwrap();
    let csv = render_csv(&out.table);
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 10);
        for i in [1, 4, 7] {
            let first: f64 = cells[i].parse().unwrap();
            let last: f64 = cells[i + 1].parse().unwrap();
            let expect = match percent_drop(first, last) {
                Ok(d) => format!("{d:.2}").replace("-0.00", "0.00"),
                Err(_) => "undefined".into(),
            };
            assert_eq!(cells[i + 2], expect, "{line}");
        }
    }
}

#[test]
fn client_count_sweep_rows_and_trend() {
    let cfg = ExperimentConfig {
        client_counts: vec![2, 3],
        clients: None,
        ..small()
    };
    let out = sweep_client_count(&cfg).unwrap();
    assert_eq!(out.table.rows.len(), 2);
    assert_eq!(
        out.trend.iter().map(|p| p.clients).collect::<Vec<_>>(),
        vec![2, 3]
    );
    assert_eq!(out.runs.len(), 4);
    assert_eq!(out.runs[0].order, vec![0, 1]);
    assert_eq!(out.runs[1].order, vec![1, 0]);
    let trend_csv = render_trend_csv(&out.trend);
    assert!(trend_csv.starts_with("clients,auprc_drop,f1_drop,kappa_drop\n2,"));
}

#[test]
fn multi_seed_summary_has_one_row_per_key() {
    let cfg = ExperimentConfig {
        seeds: 3,
        epochs: 2,
        ..small()
    };
    let tables = for_each_seed(&cfg, |c| sweep_order(c).map(|o| o.table)).unwrap();
    assert_eq!(tables.len(), 3);
    let summary = median_table(&tables).unwrap();
    assert_eq!(summary.rows.len(), 1);
    assert_eq!(median_drops(&tables).unwrap().len(), 1);
    // Runs are seeded independently of the thread they land on.
    let again = for_each_seed(&cfg, |c| sweep_order(c).map(|o| o.table)).unwrap();
    assert_eq!(tables, again);
}

#[test]
fn message_log_is_kept_on_request() {
    let r = run_experiment(&ExperimentConfig {
        message_log: true,
        epochs: 1,
        ..small()
    })
    .unwrap();
    assert_eq!(r.log.len() as u64, r.traffic.messages);
    let quiet = run_experiment(&ExperimentConfig {
        epochs: 1,
        ..small()
    })
    .unwrap();
    assert!(quiet.log.is_empty());
}
