use std::sync::Arc;

use gridmesh_core::builder::build_centralized;
use gridmesh_core::case::bundled_case;
use gridmesh_core::harness::*;
use gridmesh_core::NetworkCase;
use gridmesh_milp::{solve_milp, BranchAndBound, SolveOptions};

fn opts() -> RunOptions {
    RunOptions::new(Arc::new(BranchAndBound::new(SolveOptions { gap_tol: 1e-9, ..Default::default() })))
}

fn mini2() -> NetworkCase {
    bundled_case("case_mini2").unwrap()
}

fn optimum(case: &NetworkCase) -> f64 {
    let (model, _) = build_centralized(case).unwrap();
    solve_milp(&model, &SolveOptions { gap_tol: 1e-9, ..Default::default() }).unwrap().objective
}

/// Arrival rows (everything but feasibility searches).
fn arrivals(log: &RunLog) -> Vec<&LogRow> {
    log.rows.iter().filter(|r| r.actor != "coordinator").collect()
}

fn assert_bounds_are_monotone(log: &RunLog) {
    let (mut best_f, mut best_d) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in &log.rows {
        if let (Some(f), Some(d)) = (row.feasible_cost, row.dual_bound) {
            assert!(d <= f + 1e-9 * f.abs().max(1.0), "event {}: dual {d} above feasible {f}", row.event_seq);
        }
        if let Some(f) = row.feasible_cost {
            assert!(f <= best_f, "event {}: feasible cost rose", row.event_seq);
            best_f = f;
        }
        if let Some(d) = row.dual_bound {
            assert!(d >= best_d, "event {}: dual bound fell", row.event_seq);
            best_d = d;
        }
    }
}

#[test]
fn same_seed_gives_byte_identical_logs() {
    let case = mini2();
    let mut o = opts();
    o.seed = 7;
    o.max_iters = 20;
    o.delay = DelayModel::parse("uniform:1:3", &case).unwrap();
    let a = run(&case, "daslr", &o).unwrap();
    let b = run(&case, "daslr", &o).unwrap();
    assert_eq!(a.log.runlog_csv().unwrap(), b.log.runlog_csv().unwrap());
    assert_eq!(a.log.arrivals_csv().unwrap(), b.log.arrivals_csv().unwrap());
    assert_eq!(a.log.multipliers_csv().unwrap(), b.log.multipliers_csv().unwrap());
    o.seed = 8;
    let c = run(&case, "daslr", &o).unwrap();
    assert_ne!(a.log.runlog_csv().unwrap(), c.log.runlog_csv().unwrap());
}

#[test]
fn runlog_has_the_documented_header() {
    let mut o = opts();
    o.max_iters = 4;
    let out = run(&mini2(), "daslr", &o).unwrap();
    let csv = out.log.runlog_csv().unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "event_seq,sim_time,actor,event,r,stepsize,violation_norm,feasible_cost,dual_bound,gap"
    );
}

#[test]
fn heterogeneous_delays_follow_the_hand_calendar() {
    // MG1 solves in 1 s, MG2 in 5 s, broadcasts are instantaneous. MG1's
    // first report waits for MG2's; MG2 completes initialization at t = 5
    // and both restart; MG1 then updates every second while MG2's next
    // report, computed at the first multipliers, lands at t = 10.
    let case = mini2();
    let mut o = opts();
    o.gap_tol = 0.0;
    o.max_iters = 10;
    o.delay = DelayModel::parse("table:MG1=1,*=5", &case).unwrap();
    let out = run(&case, "daslr", &o).unwrap();
    let got: Vec<(f64, &str, &str, Option<usize>)> =
        arrivals(&out.log).iter().map(|r| (r.sim_time, r.actor.as_str(), r.event.as_str(), r.r)).collect();
    let expect = [
        (1.0, "MG1", "init", None),
        (5.0, "MG2", "update", Some(0)),
        (6.0, "MG1", "update", Some(1)),
        (7.0, "MG1", "update", Some(2)),
        (8.0, "MG1", "update", Some(3)),
        (9.0, "MG1", "update", Some(4)),
        (10.0, "MG1", "update", Some(5)),
    ];
    assert_eq!(&got[..expect.len()], &expect[..]);
    assert_eq!((got[7].0, got[7].1), (10.0, "MG2"));
    assert!(got[7].2 == "update" || got[7].2 == "reject");

    // at least two multiplier updates between consecutive MG2 arrivals
    let rows = arrivals(&out.log);
    let slow: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.actor == "MG2").map(|(i, _)| i).collect();
    assert!(slow.len() >= 2);
    for w in slow.windows(2) {
        let between = rows[w[0] + 1..w[1]].iter().filter(|r| r.event == "update").count();
        assert!(between >= 2, "only {between} updates between MG2 arrivals");
    }
}

#[test]
fn compute_time_is_the_sum_of_drawn_delays() {
    let case = mini2();
    let mut o = opts();
    o.max_iters = 9;
    o.gap_tol = 0.0;
    o.delay = DelayModel::Fixed { seconds: 1.5 };
    let out = run(&case, "daslr", &o).unwrap();
    let solves = out.compute_time / 1.5;
    assert_eq!(solves, solves.round());
    let reported = arrivals(&out.log).len() as f64;
    // every arrival was drawn once; solves still running at the stop were drawn too
    assert!(solves >= reported && solves <= reported + case.microgrids.len() as f64);
    assert_eq!(out.sim_time, out.log.rows.last().unwrap().sim_time);
}

#[test]
fn untouched_log_replays_clean() {
    let mut o = opts();
    o.max_iters = 30;
    o.gap_tol = 0.0;
    let out = run(&mini2(), "daslr", &o).unwrap();
    let report = replay(&out.log).unwrap();
    assert_eq!(report.to_string(), format!("verified, 0 mismatches ({} updates)", report.updates_checked));
    assert_eq!(report.updates_checked, 30);
    assert!(report.max_recursion_error <= 1e-12);
}

#[test]
fn perturbed_multiplier_is_caught_at_its_update() {
    let mut o = opts();
    o.max_iters = 12;
    o.gap_tol = 0.0;
    let mut log = run(&mini2(), "daslr", &o).unwrap().log;
    let target = log.multipliers.len() / 2;
    let seq = log.multipliers[target].event_seq;
    log.multipliers[target].lambda_p += 1e-6;
    let report = replay(&log).unwrap();
    assert!(!report.verified());
    assert_eq!(report.mismatches, 1);
    assert!(report.first_mismatch.unwrap().starts_with(&format!("event {seq} ")));
}

#[test]
fn written_logs_read_back_and_replay() {
    let mut o = opts();
    o.max_iters = 8;
    o.daslr.init_price = 0.5;
    let out = run(&mini2(), "daslr", &o).unwrap();
    let dir = std::env::temp_dir().join(format!("gridmesh-harness-{}", std::process::id()));
    out.log.write_dir(&dir).unwrap();
    let back = RunLog::read_dir(&dir).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back, out.log);
    assert!(replay(&back).unwrap().verified());
}

#[test]
fn reduced_case33_run_replays_clean() {
    let case = bundled_case("case33_4mg").unwrap().with_horizon(2).with_droop_levels(3);
    let mut o = RunOptions::new(Arc::new(BranchAndBound::new(SolveOptions {
        gap_tol: 1e-4,
        node_limit: 2000,
        ..Default::default()
    })));
    o.max_iters = 8;
    o.gap_tol = 0.0;
    o.delay = DelayModel::parse("table:MG1=1,*=3", &case).unwrap();
    let out = run(&case, "daslr", &o).unwrap();
    let report = replay(&out.log).unwrap();
    assert!(report.verified(), "{report}");
    assert_eq!(report.updates_checked, 8);
    assert_bounds_are_monotone(&out.log);
}

#[test]
fn replay_rejects_other_methods() {
    let mut o = opts();
    o.max_iters = 4;
    let out = run(&mini2(), "admm", &o).unwrap();
    assert!(matches!(replay(&out.log), Err(HarnessError::CorruptLog(_))));
}

#[test]
fn dual_and_feasible_bounds_move_monotonically() {
    let mut o = opts();
    o.max_iters = 40;
    o.gap_tol = 0.0;
    o.delay = DelayModel::parse("uniform:0.5:2", &mini2()).unwrap();
    for method in ["daslr", "admm"] {
        let out = run(&mini2(), method, &o).unwrap();
        assert_bounds_are_monotone(&out.log);
        assert!(out.dual_bound.unwrap() <= out.feasible_cost + 1e-9);
    }
}

#[test]
fn single_microgrid_runs_are_one_standalone_solve() {
    let case = mini2().single_microgrid(0);
    let best = optimum(&case);
    for method in ["daslr", "admm", "centralized"] {
        let out = run(&case, method, &opts()).unwrap();
        assert!((out.feasible_cost - best).abs() < 1e-9, "{method}");
        assert_eq!(out.log.rows.len(), 1, "{method}");
        assert_eq!(out.log.rows[0].event, "solve");
        assert_eq!(out.gap, Some(0.0));
    }
}

#[test]
fn centralized_run_reports_the_kernel_optimum() {
    let case = mini2();
    let out = run(&case, "centralized", &opts()).unwrap();
    assert!((out.feasible_cost - optimum(&case)).abs() < 1e-9);
    let total: f64 = out.per_mg_costs.iter().sum();
    assert!((total - out.feasible_cost).abs() < 1e-9);
}

#[test]
fn per_mg_costs_add_up_to_the_restored_cost() {
    let mut o = opts();
    o.max_iters = 20;
    let out = run(&mini2(), "daslr", &o).unwrap();
    let total: f64 = out.per_mg_costs.iter().sum();
    assert!((total - out.feasible_cost).abs() < 1e-9);
    assert!((out.schedule.total_cost(&mini2()) - out.feasible_cost).abs() < 1e-9);
}

#[test]
fn threaded_runner_finds_a_consistent_schedule() {
    let case = mini2();
    let mut o = opts();
    o.runner = Runner::Threaded;
    o.max_iters = 20;
    let out = run(&case, "daslr", &o).unwrap();
    assert!(out.feasible_cost >= optimum(&case) - 1e-6);
    assert!(out.schedule.coupling_residual(&case) <= 1e-6);
    assert!(replay(&out.log).unwrap().verified());
}

#[test]
fn unknown_method_is_an_error() {
    assert!(matches!(run(&mini2(), "pso", &opts()), Err(HarnessError::UnknownMethod(_))));
    assert!(method("admm").is_ok());
    let names: Vec<String> = methods().iter().map(|m| m.name().to_string()).collect();
    assert_eq!(names, ["daslr", "admm", "centralized"]);
}

#[test]
fn delay_specs_parse_and_validate() {
    let case = mini2();
    assert_eq!(DelayModel::parse("fixed:2", &case).unwrap(), DelayModel::Fixed { seconds: 2.0 });
    assert_eq!(DelayModel::parse("uniform:1:3", &case).unwrap(), DelayModel::Uniform { low: 1.0, high: 3.0 });
    assert_eq!(
        DelayModel::parse("table:MG2=4,*=1", &case).unwrap(),
        DelayModel::Table { seconds: vec![1.0, 4.0] }
    );
    for bad in ["fixed:0", "fixed:-1", "uniform:3:1", "table:MG9=1", "table:MG1=1", "gauss:1", "fixed"] {
        assert!(matches!(DelayModel::parse(bad, &case), Err(HarnessError::InvalidDelay(_))), "{bad}");
    }
    let mut o = opts();
    o.delay = DelayModel::Table { seconds: vec![1.0] };
    assert!(matches!(run(&case, "daslr", &o), Err(HarnessError::InvalidDelay(_))));
}
