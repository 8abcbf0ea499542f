//! End-to-end checks of the command-line surface: exit codes, artifact
//! shapes, and the JSON round-trip contract.

use std::path::Path;
use std::process::Command;

use leadersel::instances::{reference_config, sweep_config};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leadersel"))
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("network.json");
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn select_then_simulate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &reference_config().to_json());

    let out = bin()
        .args(["select", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("status: Certified"), "stdout: {}", stdout);
    assert!(stdout.contains("verdict: PASS"));

    // JSON round-trip fixpoint
    let report_path = dir.path().join("report.json");
    let text = std::fs::read_to_string(&report_path).unwrap();
    let parsed: leadersel::report::RunReport = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&parsed).unwrap();
    assert_eq!(text, again);
    // leaders contain the mandatory pair
    assert!(parsed.selection.leaders.contains(&1));
    assert!(parsed.selection.leaders.contains(&6));

    // simulate consumes the report
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("time,topology,agent_1_norm"));
    assert!(lines.count() > 100);
}

#[test]
fn simulate_without_report_is_uncertified_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &reference_config().to_json());
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "missing report is a configuration error");
}

#[test]
fn invalid_config_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "{ not valid json");
    let out = bin()
        .args(["select", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "stderr: {}", stderr);
}

#[test]
fn degenerate_instance_exits_three() {
    // Rates far above the bound make every shifted mode stable.
    let mut cfg = reference_config();
    cfg.params.eta = vec![6.0, 6.0, 6.0];
    cfg.params.mu = vec![0.0001, 0.0001, 0.0001];
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &cfg.to_json());
    let out = bin()
        .args(["select", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("degenerate"), "stderr: {}", stderr);
}

#[test]
fn algorithm_two_reports_xi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &reference_config().to_json());
    let out = bin()
        .args(["select", "--algorithm", "2", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("xi: "), "stdout: {}", stdout);
}

#[test]
fn sweep_dwell_writes_monotone_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep_config();
    // three points keep the end-to-end test quick
    cfg.dwell_increments = Some(vec![0.0, 1.2, 2.4]);
    let cfg_path = write_config(dir.path(), &cfg.to_json());
    let out = bin()
        .args(["sweep-dwell", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let counts: Vec<usize> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 3);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "counts {:?}", counts);
    assert_eq!(*counts.last().unwrap(), 6);
}

#[test]
fn compare_writes_aligned_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_config();
    cfg.trials = 10;
    let cfg_path = write_config(dir.path(), &cfg.to_json());
    let out = bin()
        .args(["compare", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("n_leaders,f_gamma_submodular,f_maximum,f_random_mean"));
    assert!(csv.lines().count() >= 3);
}

#[test]
fn modes_table_writes_rows_per_stable_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &reference_config().to_json());
    let out = bin()
        .args(["modes-table", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("modes_table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "header plus one row per stable count 0..=3");
}
