use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CSV_HEADER: &str = "k,c0_conn_dist,c1_metric_dist,max_transport_dist,class_id,class_residual,leq_limit_member,leq_residual";

fn lab(args: &[&str]) -> Output {
    lab_with_env(args, &[])
}

fn lab_with_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_holonomy-lab"));
    cmd.args(args).env_remove("HOLONOMY_LAB_OUT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_manifest(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const QUICK_POINCARE: &str = r#"{
    "family": {"name": "poincare2d"},
    "ks": [2, 4],
    "integrator": {"steps": 512},
    "classification": {"target": "so2_block", "restarts": 8}
}"#;

#[test]
fn families_lists_the_five_builtins() {
    let o = lab(&["families"]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(names, ["poincare2d", "flat", "product4d", "sheared_poincare", "fubini_study_chart"]);
}

#[test]
fn order_exit_codes() {
    let o = lab(&["order", "trivial", "so2_block", "--dim", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("holds"));

    let o = lab(&["order", "so2_block", "u2", "--dim", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let o = lab(&["order", "so4", "u2", "--dim", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("does not hold"));

    let o = lab(&["order", "so2_block_02", "so2_block_12", "--dim", "3"]);
    assert_eq!(o.status.code(), Some(0));

    for bad in [
        vec!["order", "nope", "so2_block", "--dim", "2"],
        vec!["order", "trivial", "so2_block", "--dim", "5"],
        vec!["order", "so2_block_13", "so2_block", "--dim", "3"],
        vec!["order", "trivial", "so2_block"],
        vec![],
        vec!["frobnicate"],
    ] {
        assert_eq!(lab(&bad).status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn run_writes_report_files() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(&dir, "poincare.json", QUICK_POINCARE);
    let out = dir.path().join("out");
    let o = lab(&["run", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines[3].starts_with("-1,"));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("[Hol(g)] ≤ [Hol(g_2)] holds"));
    assert!(stdout(&o).contains("semicontinuity: true"));
}

#[test]
fn run_uses_environment_output_directory() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(&dir, "poincare.json", QUICK_POINCARE);
    let out = dir.path().join("from-env");
    let o = lab_with_env(&["run", manifest.to_str().unwrap()], &[("HOLONOMY_LAB_OUT", &out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("report.csv").exists());
}

#[test]
fn identical_runs_give_identical_csv() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(&dir, "poincare.json", QUICK_POINCARE);
    let csv: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|sub| {
            let out = dir.path().join(sub);
            let o = lab(&["run", manifest.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"]);
            assert_eq!(o.status.code(), Some(0));
            std::fs::read(out.join("report.csv")).unwrap()
        })
        .collect();
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn manifest_errors_are_listed_and_exit_two() {
    let dir = TempDir::new().unwrap();
    let typo = write_manifest(&dir, "typo.json", &QUICK_POINCARE.replace("\"ks\"", "\"kz\": [], \"ks\""));
    let o = lab(&["run", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kz"), "{}", stderr(&o));

    let invalid = write_manifest(
        &dir,
        "invalid.json",
        r#"{"family": {"name": "poincare2d"}, "ks": [],
            "classification": {"target": "su2", "restarts": 0}}"#,
    );
    let o = lab(&["run", invalid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["ks", "restarts", "su2"] {
        assert!(err.contains(needle), "{needle} missing: {err}");
    }

    let missing = dir.path().join("missing.json");
    assert_eq!(lab(&["run", missing.to_str().unwrap()]).status.code(), Some(2));

    let manifest = write_manifest(&dir, "poincare.json", QUICK_POINCARE);
    assert_eq!(lab(&["run", manifest.to_str().unwrap(), "--steps", "2"]).status.code(), Some(2));
}

#[test]
fn transport_prints_matrix_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(&dir, "poincare.json", QUICK_POINCARE);
    let m = manifest.to_str().unwrap();
    let o = lab(&["transport", m, "--k", "2", "--loop", "square-0-1-0.05"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("error_estimate") && text.contains("so_defect"));
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with('[')).count(), 2);

    let o = lab(&["transport", m, "--k", "limit", "--loop", "square-0-1-0.05"]);
    assert_eq!(o.status.code(), Some(0));

    let o = lab(&["transport", m, "--k", "2", "--loop", "no-such-loop"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("square-0-1-0.05"));

    assert_eq!(lab(&["transport", m, "--k", "0", "--loop", "square-0-1-0.05"]).status.code(), Some(2));
}

#[test]
fn classify_member_and_limit() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(&dir, "poincare.json", QUICK_POINCARE);
    let m = manifest.to_str().unwrap();
    let o = lab(&["classify", m, "--k", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("g_4: so2_block"));
    let o = lab(&["classify", m, "--k", "limit"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("g: trivial"));
}

#[test]
fn shipped_manifests_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    let mut count = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let o = lab(&["transport", path.to_str().unwrap(), "--k", "1", "--loop", "nope"]);
        // Validation passes, so the only complaint is the loop label.
        assert!(stderr(&o).contains("no loop `nope`"), "{}: {}", path.display(), stderr(&o));
        count += 1;
    }
    assert_eq!(count, 5);
}
