use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/formation4.toml")
}

fn swarmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_variant(dir: &TempDir, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(bundled()).unwrap();
    let path = dir.path().join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn bundled_scenario_validates() {
    let out = swarmsim(&["validate", bundled().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("valid"));
}

#[test]
fn tilted_agent_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = write_variant(&dir, "tilted.toml", |t| {
        t.replace(
            "agent = 1\nposition = [-3.0, 0.0, 5.0]",
            "agent = 1\nposition = [-3.0, 0.0, 5.0]\norientation = [0.0, 1.6, 0.0]",
        )
    });
    let out = swarmsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).contains('['));
}

#[test]
fn malformed_file_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("broken.toml");
    fs::write(&path, "name = \n[[agents]\n").unwrap();
    assert_eq!(code(&swarmsim(&["validate", path.to_str().unwrap()])), 2);
    assert_eq!(code(&swarmsim(&["run", path.to_str().unwrap()])), 2);
    assert_eq!(code(&swarmsim(&["validate", "/no/such/file.toml"])), 2);
}

#[test]
fn short_run_reports_running_and_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = swarmsim(&[
        "run",
        bundled().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--t-end",
        "0.5",
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let report: toml::Table = toml::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"].as_str(), Some("running"));
    assert_eq!(report["scenario_sha256"].as_str().unwrap().len(), 64);
    for f in ["trajectory.csv", "summary.toml", "lyapunov.csv", "report.toml"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn dt_override_changes_the_time_grid() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = swarmsim(&[
        "run",
        bundled().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--t-end",
        "0.1",
        "--dt",
        "0.002",
    ]);
    assert_eq!(code(&out), 4);
    let lyap = fs::read_to_string(out_dir.join("lyapunov.csv")).unwrap();
    let times: Vec<f64> = lyap
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    // logged every 10 steps
    assert!((times[1] - 0.02).abs() < 1e-12, "{times:?}");
    assert!((times.last().unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn bad_override_is_rejected() {
    let b = bundled();
    let path = b.to_str().unwrap();
    assert_eq!(code(&swarmsim(&["run", path, "--dt", "-1"])), 2);
    assert_eq!(code(&swarmsim(&["run", path, "--integrator", "leapfrog"])), 2);
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = swarmsim(&["run", bundled().to_str().unwrap(), "--out", d.to_str().unwrap(), "--t-end", "0.2"]);
        assert_eq!(code(&out), 4);
    }
    for f in ["trajectory.csv", "gamma.csv", "inputs.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn selfcheck_passes() {
    let out = swarmsim(&["selfcheck"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("gradient-fd"));
}

#[test]
fn check_gradients_passes() {
    let out = swarmsim(&["check-gradients", "--seed", "7", "--scenarios", "2", "--states", "5"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn caged_agent_never_breaks_geometric_safety() {
    let dir = TempDir::new().unwrap();
    let cage = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/cage.toml");
    let out = swarmsim(&["run", cage.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let c = code(&out);
    assert!(c == 0 || c == 3 || c == 4, "exit {c}");
    let report: toml::Table = toml::from_str(&stdout(&out)).unwrap();
    if let Some(v) = report.get("violation") {
        assert!(v.as_str().unwrap().starts_with("potential-blow-up"), "{v}");
    }
    let num = |k: &str| report[k].as_float().unwrap();
    assert!(num("min_dist_agents") > 0.5);
    assert!(num("min_dist_obstacles") > 1.0);
    assert!(num("max_extent") < 10.0);
    assert!(num("max_edge_distance") < 5.0);
    assert!(num("max_abs_theta") < 1.4);
}
