use std::path::Path;
use std::process::{Command, Output};

use fraclin::harness::output::{read_report, read_trajectory};

fn fraclin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclin")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "model = \"both\"
partition_level = 2

[grid]
width = 6.0
height = 6.0
cells_x = 6
cells_y = 6
margin = 1.0

[params]
epsilon = 0.1
kappa = 1.0
";

#[test]
fn zero_load_simulate_writes_an_unbroken_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}\n[boundary]\nkind = \"uniaxial_stretch\"\namplitude = 0.0\n");
    let cfg = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = fraclin(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["nonlinear", "linear"] {
        let traj = read_trajectory(&out_dir.join(format!("trajectory_{name}.json"))).unwrap();
        assert_eq!(traj.steps.len(), 5);
        for s in &traj.steps {
            assert!(s.broken.is_empty());
            assert!(s.total.abs() < 1e-20, "{name} t = {}: {}", s.time, s.total);
        }
    }
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        (SMALL.replace("cells_x = 6", "cells_x = 2"), "cells_x"),
        (SMALL.replace("kappa = 1.0", "kappa = 1.0\ngamma = 0.5"), "gamma"),
        (format!("{SMALL}unknown_key = 1\n"), "unknown"),
    ] {
        let cfg = write_config(dir.path(), &body);
        let out = fraclin(&["simulate", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "{stderr}");
    }
    let out = fraclin(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn print_defaults_is_a_loadable_config() {
    let out = fraclin(&["--print-defaults"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &String::from_utf8(out.stdout).unwrap());
    assert_eq!(
        fraclin::harness::config::load_config(Path::new(&cfg)).unwrap(),
        fraclin::harness::config::RunConfig::default()
    );
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}\n[boundary]\nkind = \"uniaxial_stretch\"\namplitude = 1.5\n");
    let cfg = write_config(dir.path(), &body);
    let mut files = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "4")] {
        let out_dir = dir.path().join(run);
        let out = fraclin(&[
            "simulate", "--config", &cfg, "--seed", "7", "--workers", workers, "--out", out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(std::fs::read(out_dir.join("trajectory_nonlinear.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn ladder_writes_a_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("model = \"both\"\n", "ladder = [0.2, 0.1]\nreport_times = [0.5, 1.0]\n")
        + "\n[boundary]\nkind = \"simple_shear\"\namplitude = 0.2\n";
    let cfg = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = fraclin(&["ladder", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(text.starts_with("# schema_version: 1\n"));
    let rows = read_report(&out_dir.join("report.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().map(|r| (r.epsilon, r.time)).collect::<Vec<_>>(), [(0.2, 0.5), (0.2, 1.0), (0.1, 0.5), (0.1, 1.0)]);
    for r in &rows {
        assert!(r.total_gap.is_finite() && r.displacement_error >= 0.0);
    }
    for name in ["trajectory_linear.json", "trajectory_eps_0p2.json", "trajectory_eps_0p1.json"] {
        read_trajectory(&out_dir.join(name)).unwrap();
    }
}

#[test]
fn oracle_reports_the_gap_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraclin(&["oracle", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("max relative gap") && l.ends_with("<= 1e-6")), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["steps"].as_array().unwrap().len(), 9);
}
