use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::RunSummary;
use crate::error::Result;
use crate::filters::TrialTrace;
use crate::grid::write_snapshot_csv;

pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVE_FILE: &str = "median_error.csv";
pub const THETA_FILE: &str = "theta_error.csv";
/// Wall time lives apart from the summary so that the summary is reproducible.
pub const TIMING_FILE: &str = "timing.json";

#[derive(Serialize)]
struct CurveRow {
    experiment_index: usize,
    median_abs_error: f64,
    q25_error: f64,
    q75_error: f64,
    median_cell_count: f64,
}

#[derive(Serialize)]
struct ThetaRow {
    experiment_index: usize,
    median_theta_rel_error: f64,
}

/// Writes the summary, curves, timing and trial-0 snapshots into `dir`.
pub fn write_outputs(dir: &Path, summary: &RunSummary, traces: &[TrialTrace], wall_seconds: f64) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    fs::write(dir.join(SUMMARY_FILE), json)?;
    fs::write(
        dir.join(TIMING_FILE),
        serde_json::to_string_pretty(&serde_json::json!({ "wall_seconds": wall_seconds }))? + "\n",
    )?;

    let mut csv = csv::Writer::from_path(dir.join(CURVE_FILE))?;
    for k in 0..summary.median_error.len() {
        csv.serialize(CurveRow {
            experiment_index: k,
            median_abs_error: summary.median_error[k],
            q25_error: summary.q25_error[k],
            q75_error: summary.q75_error[k],
            median_cell_count: summary.median_cell_count[k],
        })?;
    }
    csv.flush()?;

    if let Some(theta) = &summary.median_theta_rel_error {
        let mut csv = csv::Writer::from_path(dir.join(THETA_FILE))?;
        for (k, &e) in theta.iter().enumerate() {
            csv.serialize(ThetaRow { experiment_index: k, median_theta_rel_error: e })?;
        }
        csv.flush()?;
    }

    if let Some(first) = traces.first() {
        export_snapshots(dir, first)?;
    }
    Ok(())
}

/// One `snapshot_{k}.csv` per grid kept by the trace.
pub fn export_snapshots(dir: &Path, trace: &TrialTrace) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    trace
        .snapshots
        .iter()
        .map(|s| {
            let path = dir.join(format!("snapshot_{}.csv", s.experiment));
            write_snapshot_csv(BufWriter::new(File::create(&path)?), s.experiment, &s.grid)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{read_snapshot_csv, uniform_grid};
    use crate::harness::{run_batch, RunConfig};

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            n_trials: 3,
            n_experiments: 10,
            snapshot_schedule: vec![0, 10],
            output_dir: Some(dir.path().to_owned()),
            ..RunConfig::default()
        };
        let summary = run_batch(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment_index,median_abs_error,q25_error,q75_error,median_cell_count"
        );
        assert_eq!(lines.count(), 11);
        let back: RunSummary =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(back, summary);
        assert!(dir.path().join(TIMING_FILE).exists());
        assert!(!dir.path().join(THETA_FILE).exists());
        let (k, g) = read_snapshot_csv(File::open(dir.path().join("snapshot_0.csv")).unwrap()).unwrap();
        assert_eq!(k, 0);
        assert_eq!(g, uniform_grid(0.0, 1.0, 100).unwrap());
        assert!(dir.path().join("snapshot_10.csv").exists());
    }
}
