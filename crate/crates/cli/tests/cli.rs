use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phia")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for out in [&a, &b] {
        let o = phia(&["gen", "--family", "sk_ising", "--n", "32", "--seed", "7", "--out", path(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let meta = fs::read_to_string(dir.path().join("a.txt.meta.json")).unwrap();
    assert!(meta.contains("\"sk_ising\"") && meta.contains("\"seed\": 7"), "{meta}");
}

#[test]
fn solves_single_field_problem() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.txt");
    fs::write(&file, "ising 1\nh 0 1\n").unwrap();
    let o = phia(&["solve", "--problem", path(&file), "--solver", "phia", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(record["result"]["best_energy"], -1.0);
    assert_eq!(record["seed"], 3);
    assert_eq!(record["config"]["solver"], "phia");
    assert_eq!(record["config"]["seed"], 3);
    assert!(stderr(&o).contains("seed=3"));
}

#[test]
fn duplicate_coupling_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("dup.txt");
    fs::write(&file, "ising 3\nJ 0 1 1\nJ 1 2 1\nJ 0 1 2\n").unwrap();
    let o = phia(&["solve", "--problem", path(&file), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    assert_eq!(phia(&["solve", "--problem", path(&missing), "--seed", "1"]).status.code(), Some(4));
    let file = dir.path().join("ok.txt");
    fs::write(&file, "ising 2\nJ 0 1 1\n").unwrap();
    let bad = phia(&["solve", "--problem", path(&file), "--seed", "1", "--epsilon=-1"]);
    assert_eq!(bad.status.code(), Some(5));
    assert!(stderr(&bad).contains("invalid configuration"));
    assert_eq!(phia(&["solve", "--problem", path(&file), "--seed", "1", "--solver", "simcim"]).status.code(), Some(5));
    assert_eq!(phia(&["solve", "--bogus"]).status.code(), Some(2));
    let nonfinite = dir.path().join("nan.txt");
    fs::write(&nonfinite, "ising 2\nJ 0 1 nan\n").unwrap();
    assert_eq!(phia(&["solve", "--problem", path(&nonfinite), "--seed", "1"]).status.code(), Some(3));
}

#[test]
fn fractional_200_spins_under_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("spin200.txt");
    let o = phia(&["gen", "--family", "spin_model", "--n", "200", "--seed", "11", "--out", path(&file)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("result.json");
    let o = phia(&[
        "solve", "--problem", path(&file), "--solver", "phia-fixed", "--seed", "5", "--outer-steps", "200", "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(record["n"], 200);
    assert_eq!(record["config"]["solver"], "phia-fixed");
    assert_eq!(record["config"]["format"]["frac_bits"], 16);
    assert_eq!(record["result"]["best_spins"].as_array().unwrap().len(), 200);
    assert!(record["result"]["best_energy"].as_f64().unwrap() < 0.0);
    assert!(record["result"]["saturations"].is_u64());
}

#[test]
fn maxcut_solve_reports_cut() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cubic.txt");
    assert!(phia(&["gen", "--family", "maxcut_d3", "--n", "16", "--seed", "2", "--out", path(&file)]).status.success());
    let o = phia(&["solve", "--problem", path(&file), "--solver", "sa", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    // 24 edges: E = (edges kept) - (edges cut) = 24 - 2 * cut.
    let e = record["result"]["best_energy"].as_f64().unwrap();
    let cut = record["cut_value"].as_f64().unwrap();
    assert_eq!(e, 24.0 - 2.0 * cut);
}

#[test]
fn verify_reports_fraction() {
    let o = phia(&["verify", "--n-max", "10", "--instances", "4", "--seeds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["pairs"], 8);
    assert!(report["fraction"].as_f64().unwrap() >= 0.95);
}

#[test]
fn cycles_prints_spot_value() {
    let o = phia(&["cycles", "--n", "32", "-l", "100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("T_est = 12381 Clk = 123.81 us"), "{text}");
    let o = phia(&["cycles", "--n", "8", "-l", "1", "--outer-steps", "2", "--json"]);
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[10]["ledger_total"]["half_cycles"], 2 * 2 * 64);
    assert_eq!(phia(&["cycles", "--n", "8", "-l", "0"]).status.code(), Some(5));
}

#[test]
fn bench_then_summary() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.jsonl");
    let o = phia(&[
        "bench", "--family", "sk_ising", "--n", "6,8,10", "--instances", "2", "--runs", "2", "--solver", "phia,sa",
        "--seed", "4", "--outer-steps", "100", "--sweeps", "100", "--out", path(&rows),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&rows).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
    assert!(text.starts_with("{\"experiment\""));
    let o = phia(&["summary", path(&rows)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("sk_ising")).count(), 6);
    assert!(s.contains("fit "), "{s}");

    let csv = dir.path().join("rows.csv");
    let o = phia(&[
        "bench", "--family", "sk_ising", "--n", "6", "--instances", "1", "--runs", "1", "--solver", "sa", "--seed", "4",
        "--format", "csv", "--out", path(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("family,n,instance"));
}
