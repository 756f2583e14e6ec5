use std::process::Command;

fn gridpe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridpe"))
}

#[test]
fn run_then_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("batch");
    let status = gridpe()
        .args(["run", "--study", "grid-ideal", "--w-th", "1e-3", "--trials", "10", "--experiments", "200", "--seed", "7"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["median_error.csv", "summary.json", "timing.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let p = &summary["percentiles_cells"];
    let output = gridpe().arg("table").arg(out.join("summary.json")).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    let expect = [&p["q2_5"], &p["q50"], &p["q97_5"]].map(|v| v.as_f64().unwrap().to_string());
    assert_eq!(&row[3..], &expect);
}

#[test]
fn config_file_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "study = \"grid-ideal\"\nn_experiments = 50\nsnapshot_schedule = [0, 25, 50]\n").unwrap();
    let out = dir.path().join("snaps");
    let status = gridpe()
        .args(["snapshot", "--omega", "0.5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let first = std::fs::read_to_string(out.join("snapshot_0.csv")).unwrap();
    assert!(first.starts_with("experiment_index,cell_left,cell_centroid,cell_right,weight\n"));
    assert_eq!(first.lines().count(), 101);
    assert!(out.join("snapshot_50.csv").exists());
}

#[test]
fn missing_config_is_a_config_error() {
    let status = gridpe().args(["run", "--config", "/nonexistent/run.toml"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_values_exit_2() {
    let status = gridpe().args(["run", "--trials", "0"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = gridpe().args(["run", "--bogus"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = gridpe().args(["run", "--snapshot-at", "5000", "--experiments", "10"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn version_prints() {
    let out = gridpe().arg("version").output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("gridpe "));
}
