//! End-to-end tests of the `gdr` binary: exit codes, CSV shape, summary
//! files.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gdr"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gdr-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &PathBuf, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn run_example1_writes_constant_energy_csv() {
    let dir = workdir("run1");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{
            "system": {"type": "example1"},
            "scheme": {"variant": "new_conservative"},
            "solver": {"dt": 0.001},
            "duration": 0.5
        }"#,
    );
    let out = dir.join("traj.csv");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "t,q0,q1,s0,s1,T,V,E,l_x,l_y,l_z,j_x,j_y,j_z,diss_f,diss_s,newton_iters"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 501);
    let e_col = |row: &str| row.split(',').nth(7).unwrap().parse::<f64>().unwrap();
    let e0 = e_col(rows[0]);
    for row in &rows {
        assert!((e_col(row) - e0).abs() <= 1e-8 * e0.abs());
        // momenta columns empty for a non-particle system
        assert_eq!(row.split(',').nth(8).unwrap(), "");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("traj.csv.summary.json")).unwrap())
            .unwrap();
    assert!(summary["max_relative_energy_drift"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn run_zero_duration_emits_only_initial_row() {
    let dir = workdir("run0");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"system": {"type": "example1"}, "solver": {"dt": 0.001}, "duration": 0.0}"#,
    );
    let out = dir.join("traj.csv");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn rejects_negative_chi_with_exit_2() {
    let dir = workdir("badchi");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"system": {"type": "example1"}, "scheme": {"chi_f": -1.0}, "solver": {"dt": 0.001}, "duration": 1.0}"#,
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("chi"));
}

#[test]
fn rejects_unknown_keys_with_exit_2() {
    let dir = workdir("badkey");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"system": {"type": "example1"}, "solver": {"dt": 0.001}, "duration": 1.0, "typo": true}"#,
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("typo"));
}

#[test]
fn missing_config_file_is_exit_2() {
    let status = bin()
        .args(["run", "--config", "/nonexistent/nowhere.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bad_spring_topology_is_exit_2() {
    let dir = workdir("badspring");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{
            "system": {
                "type": "spring_network",
                "particles": [{"mass": 1.0, "position": [0, 0, 0]}, {"mass": 1.0, "position": [1, 0, 0]}],
                "springs": [{"i": 0, "j": 5, "stiffness": 10.0}]
            },
            "solver": {"dt": 0.001},
            "duration": 1.0
        }"#,
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn solver_failure_is_exit_3() {
    let dir = workdir("diverge");
    // one Newton iteration cannot reach tolerance on the stiff example
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"system": {"type": "example2"}, "solver": {"dt": 0.1, "max_iters": 1}, "duration": 0.5}"#,
    );
    let output = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("Newton"));
}

#[test]
fn quotient_on_linear_oscillator_reports_both_quotients() {
    let dir = workdir("quotient");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{
            "system": {
                "type": "linear_oscillator",
                "mass": [[1.0, 0.0], [0.0, 1.0]],
                "stiffness": [[16.0, -15.0], [-15.0, 16.0]]
            },
            "initial": {"q": [1.0, 0.918], "s": [0.0, 0.0]},
            "scheme": {"variant": "new_conservative"},
            "solver": {"dt": 0.01},
            "duration": 5.0
        }"#,
    );
    let out = dir.join("q.csv");
    let status = bin()
        .args(["quotient", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().next().unwrap().contains("q_i"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("q.csv.summary.json")).unwrap())
            .unwrap();
    for key in ["median_log2_q_ii", "median_log2_q_i"] {
        let v = summary[key].as_f64().unwrap();
        assert!((1.8..=2.2).contains(&v), "{key} = {v}");
    }
}

#[test]
fn compare_shows_midpoint_drift() {
    let dir = workdir("compare");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"system": {"type": "example1"}, "solver": {"dt": 0.01}, "duration": 10.0}"#,
    );
    let out = dir.join("cmp.csv");
    let output = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut drift = std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let mut it = line.split(',');
        let name = it.next().unwrap().to_string();
        drift.insert(name, it.next().unwrap().parse::<f64>().unwrap());
    }
    assert_eq!(drift.len(), 4);
    assert!(drift["midpoint"] > 10.0 * drift["new_conservative"]);
    assert!(drift["new_conservative"] <= 1e-8 && drift["gonzalez"] <= 1e-8);
}

#[test]
fn run_is_deterministic() {
    let dir = workdir("determinism");
    let cfg = write(
        &dir,
        "cfg.json",
        r#"{"system": {"type": "example1"}, "scheme": {"chi_f": 0.0025, "chi_s": 0.008}, "solver": {"dt": 0.001}, "duration": 0.2}"#,
    );
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("t{k}.csv"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
