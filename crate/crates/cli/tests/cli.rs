use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gridmesh_cli::{sweep_droop, trace};
use gridmesh_core::builder::build_centralized;
use gridmesh_core::case::bundled_case;
use gridmesh_core::harness::RunLog;
use gridmesh_core::{load_case, NetworkCase};
use gridmesh_milp::{solve_milp, SolveOptions};
use serde_json::Value;
use tempfile::tempdir;

fn gridmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridmesh")).args(args).env_remove("GRIDMESH_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = gridmesh(args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn optimum(case: &NetworkCase) -> f64 {
    let (model, _) = build_centralized(case).unwrap();
    solve_milp(&model, &SolveOptions { gap_tol: 1e-9, ..Default::default() }).unwrap().objective
}

#[test]
fn centralized_summary_reports_the_kernel_optimum() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("c");
    ok(&["solve", "--case", "case_mini2", "--method", "centralized", "--out", out.to_str().unwrap()]);
    let s = summary(&out);
    let best = optimum(&bundled_case("case_mini2").unwrap());
    assert!((s["feasible_cost"].as_f64().unwrap() - best).abs() < 1e-6);
    for key in ["method", "case", "seed", "iterations", "feasible_cost", "dual_bound", "gap", "per_mg_costs"] {
        assert!(s.get(key).is_some(), "summary lacks {key}");
    }
    assert_eq!(s["method"], "centralized");
    assert_eq!(s["per_mg_costs"].as_array().unwrap().len(), 2);
}

#[test]
fn daslr_solve_writes_replayable_artifacts() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    let o = out.to_str().unwrap();
    ok(&["solve", "--case", "case_mini2", "--method", "daslr", "--max-iters", "30", "--seed", "3", "--out", o]);
    let s = summary(&out);
    let costs: f64 = s["per_mg_costs"].as_array().unwrap().iter().map(|c| c["cost"].as_f64().unwrap()).sum();
    assert!((costs - s["feasible_cost"].as_f64().unwrap()).abs() < 1e-9);
    assert!(s["coupling_residual"].as_f64().unwrap() <= 1e-6);
    assert!(s["balance_residual"].as_f64().unwrap() <= 1e-6);

    let sched = fs::read_to_string(out.join("schedule.csv")).unwrap();
    assert_eq!(sched.lines().next().unwrap(), "t,mg,entity,quantity,value");
    let log = RunLog::read_dir(&out).unwrap();
    let trace_csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace_csv.lines().count() - 1, log.searches().count());
    let replay = ok(&["replay", "--log", o]);
    assert!(String::from_utf8_lossy(&replay.stdout).starts_with("verified, 0 mismatches (30 updates)"));
}

#[test]
fn same_flags_give_identical_runlogs() {
    let dir = tempdir().unwrap();
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        ok(&[
            "solve",
            "--case",
            "case_mini2",
            "--method",
            "daslr",
            "--max-iters",
            "20",
            "--seed",
            "11",
            "--delay-model",
            "uniform:1:4",
            "--out",
            out.to_str().unwrap(),
        ]);
        logs.push(fs::read(out.join("runlog.csv")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn threaded_runner_is_selected_by_environment() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("t");
    let o = out.to_str().unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_gridmesh"))
        .args(["solve", "--case", "case_mini2", "--method", "daslr", "--max-iters", "10", "--out", o])
        .env("GRIDMESH_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    let params = fs::read_to_string(out.join("run_params.json")).unwrap();
    assert!(params.contains("threaded"), "{params}");
    ok(&["replay", "--log", o]);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempdir().unwrap();
    let o = dir.path().join("x");
    let o = o.to_str().unwrap();
    let bad = gridmesh(&["solve", "--case", "case_mini2", "--method", "pso", "--out", o]);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("Usage:") && err.contains("daslr"), "{err}");

    for args in [
        vec!["solve", "--case", "no_such_case.json", "--method", "daslr", "--out", o],
        vec!["solve", "--case", "case_mini2", "--method", "daslr", "--delay-model", "fixed:0", "--out", o],
        vec!["solve", "--case", "case_mini2", "--method", "daslr", "--delay-model", "table:MG7=1", "--out", o],
        vec!["solve", "--case", "case_mini2", "--method", "admm", "--horizon", "0", "--out", o],
        vec!["sweep-droop", "--case", "case_mini2", "--fracs", "0.2,1.5", "--out", o],
    ] {
        assert_eq!(gridmesh(&args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(gridmesh(&["--help"]).status.code(), Some(0));
}

#[test]
fn infeasible_case_exits_with_two() {
    // renewable output far above anything the microgrid can absorb
    let dir = tempdir().unwrap();
    let mut case: Value = serde_json::from_str(&bundled_case("case_mini2").unwrap().to_json()).unwrap();
    let horizon = case["system"]["horizon"].as_u64().unwrap() as usize;
    case["microgrids"][0]["ders"].as_array_mut().unwrap().push(serde_json::json!({
        "id": "PV9", "kind": "PV", "bus": "a2", "p_min": 0.0, "p_max": 50.0, "q_min": 0.0, "q_max": 0.0,
        "profile": { "p": vec![50.0; horizon], "q": vec![0.0; horizon] }
    }));
    let path = dir.path().join("surplus.json");
    fs::write(&path, case.to_string()).unwrap();
    let o = dir.path().join("o");
    for method in ["centralized", "daslr", "admm"] {
        let run = gridmesh(&[
            "solve",
            "--case",
            path.to_str().unwrap(),
            "--method",
            method,
            "--max-iters",
            "4",
            "--out",
            o.to_str().unwrap(),
        ]);
        assert_eq!(run.status.code(), Some(2), "{method}: {}", String::from_utf8_lossy(&run.stderr));
    }
}

#[test]
fn compare_table_rows_add_up() {
    let dir = tempdir().unwrap();
    let o = dir.path().join("cmp");
    let run = ok(&["compare", "--case", "case_mini2", "--max-iters", "30", "--out", o.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&run.stdout).into_owned();
    assert_eq!(text, fs::read_to_string(o.join("compare.txt")).unwrap());
    assert!(text.lines().next().unwrap().starts_with("method"));

    let mut rdr = csv::Reader::from_path(o.join("compare.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[1], "MG1");
    assert_eq!(&header[2], "MG2");
    assert_eq!(&header[3], "total");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.iter().map(|r| r[0].to_string()).collect::<Vec<_>>(), ["daslr", "admm"]);
    for r in &rows {
        let sum: f64 = r[1].parse::<f64>().unwrap() + r[2].parse::<f64>().unwrap();
        assert!((sum - r[3].parse::<f64>().unwrap()).abs() <= 1e-9);
    }
    for m in ["daslr", "admm"] {
        let log = RunLog::read_dir(&o.join(m)).unwrap();
        let t = fs::read_to_string(o.join(format!("trace_{m}.csv"))).unwrap();
        assert_eq!(t.lines().count() - 1, log.searches().count(), "{m}");
        assert_eq!(trace(&log).len(), log.searches().count());
    }
}

#[test]
fn repeated_fraction_reduces_nothing() {
    let case = bundled_case("case_mini2").unwrap();
    let rows = sweep_droop(&case, &[0.2, 0.2], &SolveOptions::default()).unwrap();
    assert_eq!(rows[1].reduction_pct, 0.0);
    assert_eq!(rows[0].total, rows[1].total);
}

#[test]
fn sweep_matches_independent_centralized_solves() {
    let case = bundled_case("case_mini2").unwrap();
    let rows = sweep_droop(&case, &[0.2, 0.3], &SolveOptions { gap_tol: 1e-9, ..Default::default() }).unwrap();
    let a = optimum(&case.with_contribution_frac(0.2));
    let b = optimum(&case.with_contribution_frac(0.3));
    assert!((rows[0].total - a).abs() < 1e-6 && (rows[1].total - b).abs() < 1e-6);
    let expect = 100.0 * (a - b) / a;
    assert!((rows[1].reduction_pct - expect).abs() < 1e-6, "{} vs {expect}", rows[1].reduction_pct);
    assert!(rows[1].total <= rows[0].total);
    let per_mg: f64 = rows[1].per_mg.iter().map(|c| c.cost).sum();
    assert!((per_mg - rows[1].total).abs() < 1e-9);
}

#[test]
fn sweep_command_writes_its_table() {
    let dir = tempdir().unwrap();
    let o = dir.path().join("sw");
    ok(&["sweep-droop", "--case", "case_mini2", "--fracs", "0.2,0.3", "--out", o.to_str().unwrap()]);
    let csv = fs::read_to_string(o.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "frac,MG1,MG2,total,reduction_pct,status");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn exported_case_loads_back_unchanged() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("case.json");
    ok(&["export-case", "--case", "case33_4mg", "--horizon", "3", "--levels", "4", "--out", path.to_str().unwrap()]);
    let back = load_case(&path).unwrap();
    assert_eq!(back, bundled_case("case33_4mg").unwrap().with_horizon(3).with_droop_levels(4));
}

#[test]
fn mps_export_names_every_column() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("m.mps");
    let p = path.to_str().unwrap();
    ok(&["export-mps", "--case", "case_mini2", "--out", p]);
    let text = fs::read_to_string(&path).unwrap();
    for section in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
        assert!(text.contains(section), "{section}");
    }
    ok(&["export-mps", "--case", "case_mini2", "--mg", "MG2", "--out", p]);
    let sub = fs::read_to_string(&path).unwrap();
    assert!(sub.len() < text.len());
    assert_eq!(gridmesh(&["export-mps", "--case", "case_mini2", "--mg", "MG5", "--out", p]).status.code(), Some(1));
}
