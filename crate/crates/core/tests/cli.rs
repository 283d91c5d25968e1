use std::fs;
use std::process::Command;

use stochtr::harness::{read_csv, CSV_HEADER};

fn stochtr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochtr"))
}

#[test]
fn run_writes_progress_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let status = stochtr()
        .args(["run", "--problem", "himmelblau", "--solver", "vmi3", "--budget", "3000", "--reps", "3"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("final true value"), "{stdout}");

    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 200 * 3);
    assert_eq!(rows[0].budget, 0.0);
    assert_eq!(rows.last().unwrap().budget, 3000.0);
}

#[test]
fn qaoa_reads_graph_file_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("square.txt");
    fs::write(&graph, "# 4-cycle\n4 4\n0 1\n1 2\n2 3\n3 0 # closing edge\n").unwrap();
    let config = dir.path().join("solver.cfg");
    fs::write(&config, "# smaller first stage\nlambda_constant = 20\ngrid_points = 11\n").unwrap();
    let out = dir.path().join("qaoa.csv");
    let status = stochtr()
        .args(["run", "--problem", "qaoa", "--solver", "vmi1", "--depth", "1", "--budget", "20000"])
        .args(["--reps", "2", "--cn", "10"])
        .arg("--graph")
        .arg(&graph)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let rows = read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 11 * 2);
    // Gap column is the true value minus −maxcut(C4) = −4.
    for r in &rows {
        assert!((r.delta - (r.true_value + 4.0)).abs() < 1e-12);
        assert!(r.delta >= -1e-12);
    }
}

#[test]
fn unknown_config_key_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "trust_radius = 3\n").unwrap();
    let out = dir.path().join("never.csv");
    let output = stochtr()
        .args(["run", "--problem", "himmelblau", "--solver", "vmi2", "--budget", "100"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("trust_radius"));
    assert!(!out.exists());
}

#[test]
fn invalid_setting_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "eta1 = 0.9\neta2 = 0.5\n").unwrap();
    let output = stochtr()
        .args(["run", "--problem", "himmelblau", "--solver", "vmi3", "--budget", "100"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing-dir").join("curve.csv");
    let output = stochtr()
        .args(["run", "--problem", "himmelblau", "--solver", "spsa", "--budget", "500", "--reps", "1"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}
