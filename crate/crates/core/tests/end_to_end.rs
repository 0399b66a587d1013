use cellfree::harness::{emit_results, read_csv_rows, read_json, run_experiment, OutputFormat, RowKind, ScenarioConfig};
use cellfree::strategies::Strategy;
use cellfree::Exec;

fn tiny() -> ScenarioConfig {
    ScenarioConfig { num_aps: 16, num_users: 5, num_cpus: 2, n_throws: 3, n_fading: 5, n_mc: 48, ..ScenarioConfig::default() }
}

#[test]
fn files_round_trip() {
    let table = run_experiment(&tiny(), Exec::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let csv_path = dir.path().join("r.csv");
    emit_results(&table, &csv_path, OutputFormat::Csv).unwrap();
    let rows = read_csv_rows(&std::fs::read_to_string(&csv_path).unwrap()).unwrap();
    assert_eq!(rows, table.rows);

    let json_path = dir.path().join("r.json");
    emit_results(&table, &json_path, OutputFormat::Json).unwrap();
    assert_eq!(read_json(&std::fs::read_to_string(&json_path).unwrap()).unwrap(), table);
}

#[test]
fn reruns_are_reproducible_and_seed_sensitive() {
    let a = run_experiment(&tiny(), Exec::Parallel).unwrap();
    let b = run_experiment(&tiny(), Exec::Sequential).unwrap();
    assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    let c = run_experiment(&ScenarioConfig { master_seed: 77, ..tiny() }, Exec::Parallel).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn aggregates_cover_every_strategy() {
    let table = run_experiment(&tiny(), Exec::Parallel).unwrap();
    let aggregates: Vec<_> = table.rows.iter().filter(|r| r.kind == RowKind::Aggregate).collect();
    assert_eq!(aggregates.len(), Strategy::ALL.len());
    for agg in aggregates {
        assert_eq!(agg.n + agg.dropped_trials, 3);
        if let (Some(min), Some(max)) = (agg.min_rate, agg.max_rate) {
            assert!(min >= 0.0 && max >= min);
        }
    }
}
