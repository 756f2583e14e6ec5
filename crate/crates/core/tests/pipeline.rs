use std::fs;

use gridpe::analysis::{cell_count_percentiles, median_error_curve, RunSummary};
use gridpe::grid::read_snapshot_csv;
use gridpe::harness::{
    export_snapshots, run_batch, run_trials, run_with_truth, sample_truth, RunConfig, Study, CURVE_FILE, SUMMARY_FILE,
    THETA_FILE, TIMING_FILE,
};

fn small(study: Study) -> RunConfig {
    RunConfig {
        study,
        n_trials: 6,
        n_experiments: 40,
        t2_true: matches!(study, Study::GridDephased | Study::Hybrid).then_some(100.0),
        n1: 10,
        n2: 5,
        ..RunConfig::default()
    }
}

#[test]
fn batch_files_agree_with_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { output_dir: Some(dir.path().to_path_buf()), ..small(Study::GridIdeal) };
    let summary = run_batch(&cfg).unwrap();

    let traces = run_trials(&cfg).unwrap();
    assert_eq!(summary.median_error, median_error_curve(&traces).unwrap());
    let counts: Vec<usize> = traces.iter().map(|t| t.final_record().count).collect();
    assert_eq!(summary.final_cell_counts, counts);
    assert_eq!(summary.percentiles_cells, cell_count_percentiles(&counts).unwrap());

    let stored: RunSummary = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(stored, summary);
    let curve = fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
    assert_eq!(curve.lines().count(), cfg.n_experiments + 2);
    assert!(dir.path().join(TIMING_FILE).exists());
    assert!(!dir.path().join(THETA_FILE).exists());
}

#[test]
fn hybrid_batch_writes_theta_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { output_dir: Some(dir.path().to_path_buf()), ..small(Study::Hybrid) };
    let summary = run_batch(&cfg).unwrap();
    let theta = summary.median_theta_rel_error.unwrap();
    assert_eq!(theta.len(), cfg.n_experiments + 1);
    let csv = fs::read_to_string(dir.path().join(THETA_FILE)).unwrap();
    assert_eq!(csv.lines().count(), cfg.n_experiments + 2);
}

#[test]
fn snapshots_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { snapshot_schedule: vec![0, 20, 40], ..small(Study::GridIdeal) };
    let trace = run_with_truth(&cfg, &sample_truth(&cfg, 0), 0).unwrap();
    let paths = export_snapshots(dir.path(), &trace).unwrap();
    assert_eq!(paths.len(), 3);
    for (path, snap) in paths.iter().zip(&trace.snapshots) {
        let (k, grid) = read_snapshot_csv(fs::File::open(path).unwrap()).unwrap();
        assert_eq!(k, snap.experiment);
        assert_eq!(grid.cells(), snap.grid.cells());
    }
}

#[test]
fn every_study_runs_end_to_end() {
    for study in [Study::GridIdeal, Study::LwIdeal, Study::GridDephased, Study::Hybrid] {
        let s = run_batch(&small(study)).unwrap();
        assert_eq!(s.n_trials, 6);
        assert!(s.median_error.iter().all(|e| e.is_finite()), "{study:?}");
        assert!(s.median_error[40] < s.median_error[0], "{study:?} did not learn");
    }
}
