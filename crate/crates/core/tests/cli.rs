use std::path::{Path, PathBuf};
use std::process::Command;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn g2lab(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_g2lab"))
        .args(args)
        .env("G2LAB_OUT", out)
        .output()
        .expect("binary runs")
}

#[test]
fn passing_config_exits_zero_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = g2lab(&["run", data("ou_pass.cfg").to_str().unwrap()], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("suite,name,state_or_time,lhs,rhs,slack,tolerance,pass\n"));
    let suites: Vec<&str> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let mut sorted = suites.clone();
    sorted.sort();
    assert_eq!(suites, sorted);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("seed = 42\n"));
    assert!(summary.contains("PASS"));
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = data("path3.cfg");
    g2lab(&["run", cfg.to_str().unwrap()], a.path());
    g2lab(&["run", cfg.to_str().unwrap()], b.path());
    for file in ["report.csv", "summary.txt"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn false_curvature_claim_exits_one_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = g2lab(&["run", data("ou_fail.cfg").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report
        .lines()
        .any(|l| l.starts_with("curvature,curvature_claim,") && l.ends_with(",false")));
    assert!(report.lines().any(|l| l.starts_with("calculus,")));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("error: K = 3 exceeds"));
}

#[test]
fn malformed_config_exits_two_and_names_field() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["run", "validate"] {
        let out = g2lab(&[cmd, data("malformed.cfg").to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("times.alpha_list"));
    }
    assert!(!dir.path().join("report.csv").exists());
    let missing = g2lab(&["validate", "/nonexistent/config.cfg"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn validate_accepts_golden_configs() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["ou_pass.cfg", "ou_fail.cfg", "path3.cfg"] {
        let out = g2lab(&["validate", data(cfg).to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cfg}");
    }
}

#[test]
fn plots_script_from_report() {
    let dir = tempfile::tempdir().unwrap();
    g2lab(&["run", data("path3.cfg").to_str().unwrap()], dir.path());
    let report = dir.path().join("report.csv");
    let out = g2lab(&["plots", report.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let script = std::fs::read_to_string(dir.path().join("plots.gp")).unwrap();
    let c = script.find("# suite curvature").unwrap();
    let g = script.find("# suite gradient").unwrap();
    assert!(c < g);

    std::fs::write(&report, "not,a,report\n").unwrap();
    let out = g2lab(&["plots", report.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
