use std::path::Path;
use std::process::{Command, Output};

fn saf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saf")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = saf(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn bank_design_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["design-bank", "--subbands", "4", "--out", "o"], dir.path());
    assert!(stdout.contains("paraunitarity error"));
    assert!(dir.path().join("o/bank_n4_l32.json").exists());
}

#[test]
fn simulate_theory_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--variant", "l1-qnsaf", "--beta", "1e-3", "--frames", "200", "--out", "o"];
    ok(&[&["simulate", "--runs", "5"][..], &common].concat(), dir.path());
    let th = ok(&[&["theory"][..], &common].concat(), dir.path());
    assert!(th.contains("β*"));
    let o = dir.path().join("o");
    for f in ["msd.csv", "summary.json", "config.json", "theory.json", "theory_l1_qnsaf.csv"] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    let cmp = ok(
        &["compare", "--simulation", "o/msd.csv", "--column", "l1_qnsaf", "--theory", "o/theory_l1_qnsaf.csv", "--out", "o"],
        dir.path(),
    );
    assert!(cmp.contains("max |diff|"));
    assert!(o.join("compare.csv").exists());

    // the saved config reproduces the run
    let again = ok(&["steady", "--config", "o/config.json", "--out", "o"], dir.path());
    assert!(again.contains("l1_qnsaf"));
    assert!(o.join("steady.json").exists());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["sweep", "--variant", "l1-qnsaf", "--axis", "beta", "--values", "0,1e-3", "--frames", "100", "--runs", "2", "--out", "o"],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{bad").unwrap();
    let out = saf(&["simulate", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: loading bad.json"));

    let out = saf(&["sweep", "--variant", "nsaf", "--axis", "rho", "--values", "1"], dir.path());
    assert!(!out.status.success());
    let out = saf(&["simulate", "--variant", "nsaf", "--mu", "-1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
