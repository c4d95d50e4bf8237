use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freightmatch"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to launch freightmatch")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn tiny_fixture_assignment() {
    // Flow targets A->A 40, A->B 20, B->B 30 can be met exactly and carry
    // the largest per-ton weight, so they fix every pair's tonnage.
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().arg("solve").arg(fixture()).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let assignments = fs::read_to_string(dir.path().join("assignments.csv")).unwrap();
    assert_eq!(
        assignments,
        "supplier,receiver,commodity,tons\nS1,R1,1,40.000000\nS1,R2,1,20.000000\nS2,R2,1,30.000000\n"
    );
    let unmet = fs::read_to_string(dir.path().join("unmet.csv")).unwrap();
    assert_eq!(unmet, "receiver,fraction,tons\nR1,0.000000000,0.000000\nR2,0.000000000,0.000000\n");
    for f in ["distance_distribution.csv", "flow_gaps.csv", "summary.csv", "commodity_breakdown.csv"] {
        assert!(dir.path().join("report").join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solve_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "decomposed");
    assert!(summary["bin_gap_total"].as_f64().unwrap() < 1e-9);
}

#[test]
fn joint_and_decomposed_agree_on_tiny_fixture() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(bin().arg("solve").arg(fixture()).arg("--out").arg(a.path()))), 0);
    assert_eq!(
        code(&run(bin().args(["solve", "--mode", "joint"]).arg(fixture()).arg("--out").arg(b.path()))),
        0
    );
    let read = |d: &Path| fs::read_to_string(d.join("assignments.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn generate_then_solve_is_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let inst = root.path().join("inst");
    let out = run(bin().args(["generate", "--seed", "4", "--zones", "3", "--out"]).arg(&inst));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let mut results = Vec::new();
    for k in 0..2 {
        let dir = root.path().join(format!("out{k}"));
        assert_eq!(code(&run(bin().arg("solve").arg(&inst).arg("--out").arg(&dir))), 0);
        let intl = root.path().join(format!("intl{k}"));
        assert_eq!(code(&run(bin().arg("international").arg(&inst).arg("--out").arg(&intl))), 0);
        results.push((
            fs::read(dir.join("assignments.csv")).unwrap(),
            fs::read(dir.join("unmet.csv")).unwrap(),
            fs::read(intl.join("international_shipments.csv")).unwrap(),
        ));
    }
    assert_eq!(results[0], results[1]);

    let again = root.path().join("inst2");
    assert_eq!(code(&run(bin().args(["generate", "--seed", "4", "--zones", "3", "--out"]).arg(&again))), 0);
    for f in ["establishments.csv", "flows.csv", "bin_targets.csv"] {
        assert_eq!(fs::read(inst.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn international_trade_type_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["international", "--trade-type", "export"]).arg(fixture()).arg("--out").arg(dir.path()));
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("international_shipments.csv")).unwrap();
    let mut total = 0.0;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], "S1");
        assert_eq!(cols[4], "export");
        total += cols[3].parse::<f64>().unwrap();
    }
    assert!((total - 500.0).abs() < 1e-6);
}

#[test]
fn missing_instance_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().arg("solve").arg(dir.path().join("nope")).arg("--out").arg(dir.path().join("o")));
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}

#[test]
fn malformed_row_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    fs::create_dir(&inst).unwrap();
    for entry in fs::read_dir(fixture()).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), inst.join(entry.file_name())).unwrap();
    }
    fs::write(inst.join("production.csv"), "establishment,commodity,tons\nS1,1,lots\n").unwrap();
    let out = run(bin().arg("solve").arg(&inst).arg("--out").arg(dir.path().join("o")));
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("production.csv"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["generate", "--capacity-ratio", "0.5"],
        vec!["solve", "--weights", "w9=1"],
        vec!["solve", "--max-suppliers", "0"],
        vec!["solve", "--bogus-flag"],
    ];
    for args in cases {
        let mut cmd = bin();
        cmd.args(&args);
        if args[0] == "solve" {
            cmd.arg(fixture());
        }
        let out = run(cmd.arg("--out").arg(&o));
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn export_lp_writes_model() {
    let dir = tempfile::tempdir().unwrap();
    let lp = dir.path().join("model.lp");
    let out = run(bin().arg("solve").arg(fixture()).arg("--out").arg(dir.path()).arg("--export-lp").arg(&lp));
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(lp).unwrap();
    assert!(text.contains("Minimize") && text.contains("Subject To"));
    assert!(text.contains("closure_R1"));
}
