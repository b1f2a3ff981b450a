use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ehpc(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ehpc"));
    cmd.args(args).env_remove("EHPC_OUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn selftest_passes() {
    let out = ehpc(&["selftest"], &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn every_bundled_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let configs = std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap();
    for entry in configs {
        let path = entry.unwrap().path();
        let out = ehpc(
            &[
                "simulate",
                "--config",
                path.to_str().unwrap(),
                "--replications",
                "2",
                "--horizon",
                "100",
            ],
            &[("EHPC_OUT_DIR", dir.path())],
        );
        assert!(
            out.status.success(),
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn simulate_writes_csv_svg_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv: PathBuf = dir.path().join("nested/out.csv");
    let svg: PathBuf = dir.path().join("plot.svg");
    let out = ehpc(
        &[
            "simulate",
            "--config",
            &bundled("quick.json"),
            "--out-csv",
            csv.to_str().unwrap(),
            "--out-svg",
            svg.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("slot,mean_avg_utility,stderr,mean_Q,mean_E,violations,scaled_count")
    );
    assert_eq!(lines.count(), 500);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"total_violations\": 0"), "{stdout}");
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = ehpc(
        &[
            "simulate",
            "--config",
            &bundled("quick.json"),
            "--horizon",
            "20",
        ],
        &[("EHPC_OUT_DIR", dir.path())],
    );
    assert!(out.status.success());
    assert!(dir.path().join("quick.csv").exists());
}

#[test]
fn bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(bundled("iid_baseline2.json"))
        .unwrap()
        .replace("\"mode\": \"fixed\"", "\"mode\": \"theorem3\"");
    std::fs::write(&path, text).unwrap();
    let out = ehpc(&["simulate", "--config", path.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn oracle_reports_upper_bound() {
    let out = ehpc(
        &[
            "oracle",
            "--config",
            &bundled("quick.json"),
            "--samples",
            "20000",
        ],
        &[],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let u: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("U* = "))
        .expect("U* line")
        .parse()
        .unwrap();
    assert!((u - 1.039).abs() < 0.02, "{u}");
}

#[test]
fn figures_command_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ehpc(
        &[
            "figures",
            "--id",
            "7",
            "--outdir",
            dir.path().to_str().unwrap(),
            "--replications",
            "2",
            "--horizon",
            "100",
            "--oracle-samples",
            "0",
        ],
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("figure7.csv").exists());
    assert!(dir.path().join("figure7.svg").exists());
    let bad = ehpc(
        &[
            "figures",
            "--id",
            "9",
            "--outdir",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(!bad.status.success());
}
