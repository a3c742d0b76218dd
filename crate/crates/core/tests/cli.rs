use std::path::Path;
use std::process::{Command, Output};

fn amgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amgc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/out");
    let o = amgc(&["run", "4r_generic_mgc", "--set", "duration=0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(entries(&out), ["summary.json", "trace.csv"]);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 500);
    assert_eq!(summary["controller"], "mgc");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 502);
}

#[test]
fn overrides_reproduce_the_adaptive_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = amgc(&["run", "4r_generic_amgc", "--set", "duration=1", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = amgc(&[
        "run", "4r_generic_mgc", "--set", "duration=1", "--set", "perturbation=0.1", "--set", "controller=amgc",
        "--set", "name=4r_generic_amgc", "--seed", "7", "--out", b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trace.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_path_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = amgc(&["run", "/no/such/file.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/file.json"));
    assert!(entries(dir.path()).is_empty(), "nothing is written on failure");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(amgc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(amgc(&[]).status.code(), Some(1));
    assert_eq!(amgc(&["run", "4r_generic_mgc", "--set", "no_equals"]).status.code(), Some(1));
    assert_eq!(amgc(&["check", "--filter", "zzz"]).status.code(), Some(1));
    assert_eq!(amgc(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_override_is_a_validation_error() {
    let o = amgc(&["run", "4r_generic_mgc", "--set", "k_q=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k_q"));
}

#[test]
fn numerical_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = amgc(&["run", "4r_generic_mgc", "--set", "control_rate=5", "--set", "duration=20", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("step"));
}

#[test]
fn check_passes_and_filters() {
    let o = amgc(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = amgc(&["check", "--filter", "liegroup"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("PASS")).map(String::from).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.contains("liegroup/")));
}

#[test]
fn injected_coad_sign_flip_is_caught_by_name() {
    let o = amgc(&["check", "--inject-fault", "coad-sign"]);
    assert_eq!(o.status.code(), Some(2));
    let failing: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("FAIL")).map(String::from).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].contains("liegroup/coad_duality"));
}

#[test]
fn compare_writes_one_row_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = amgc(&[
        "compare", "4r_generic_mgc_perturbed", "4r_generic_amgc", "4r_generic_baseline", "--set", "duration=0.2", "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(entries(dir.path()), ["comparison.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["mgc", "amgc", "baseline_pd"]);

    let o = amgc(&["compare", "planar_2link", "planar_2link", "--set", "duration=0.1", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["mgc", "mgc-2"]);
}

#[test]
fn schema_example_is_a_loadable_scenario() {
    let o = amgc(&["schema"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# Scenario schema"));

    let o = amgc(&["schema", "--example", "planar_2link"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("canonical.json");
    std::fs::write(&file, stdout(&o)).unwrap();
    let out = dir.path().join("out");
    let o = amgc(&["run", file.to_str().unwrap(), "--set", "duration=0.05", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
