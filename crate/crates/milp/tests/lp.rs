mod common;

use common::{dense_lp, model_bounds, random_lp, Oracle};
use gridmesh_milp::{solve_lp, MilpModel, Sense, SolveOptions, SolveStatus, VarKind};

#[test]
fn single_variable_lower_bound_row() {
    let mut m = MilpModel::new("bound");
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, 1.0);
    m.add_row("lb", vec![(x, 1.0)], Sense::Ge, 3.0);
    let sol = solve_lp(&m, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 3.0).abs() < 1e-12);
}

#[test]
fn contradictory_rows_are_infeasible() {
    let mut m = MilpModel::new("contra");
    let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, 0.0);
    m.add_row("up", vec![(x, 1.0)], Sense::Le, -1.0);
    m.add_row("lo", vec![(x, 1.0)], Sense::Ge, 0.0);
    let sol = solve_lp(&m, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_ray_is_reported() {
    let mut m = MilpModel::new("ray");
    let x = m.add_var("x", 0.0, f64::INFINITY, VarKind::Continuous, -1.0);
    let y = m.add_var("y", 0.0, f64::INFINITY, VarKind::Continuous, 0.0);
    m.add_row("r", vec![(x, 1.0), (y, -1.0)], Sense::Le, 2.0);
    let sol = solve_lp(&m, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

#[test]
fn iteration_cap_is_reported() {
    let m = random_lp(3, 30);
    let opts = SolveOptions { iter_limit: 1, ..SolveOptions::default() };
    let sol = solve_lp(&m, &opts).unwrap();
    assert!(matches!(sol.status, SolveStatus::IterLimit | SolveStatus::Optimal));
}

#[test]
fn invalid_model_is_rejected() {
    let mut m = MilpModel::new("bad");
    m.add_var("x", 2.0, 1.0, VarKind::Continuous, 0.0);
    assert!(solve_lp(&m, &SolveOptions::default()).is_err());
}

#[test]
fn random_lps_match_dense_oracle() {
    for seed in 0..20 {
        let m = random_lp(seed, 30);
        let sol = solve_lp(&m, &SolveOptions::default()).unwrap();
        let Oracle::Optimal(expected) = dense_lp(&m, &model_bounds(&m)) else {
            panic!("generator must produce feasible bounded LPs (seed {seed})");
        };
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        assert!(
            (sol.objective - expected).abs() <= 1e-7 * (1.0 + expected.abs()),
            "seed {seed}: kernel {} oracle {}",
            sol.objective,
            expected
        );
        assert!(m.max_violation(&sol.values) <= 1e-7, "seed {seed}");
    }
}

#[test]
fn equality_heavy_lp_with_degenerate_vertices() {
    // transportation problem: 3 sources, 3 sinks, balanced supply
    let supply = [20.0, 30.0, 25.0];
    let demand = [10.0, 35.0, 30.0];
    let cost = [[8.0, 6.0, 10.0], [9.0, 12.0, 13.0], [14.0, 9.0, 16.0]];
    let mut m = MilpModel::new("transport");
    let mut x = [[gridmesh_milp::VarId(0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            x[i][j] = m.add_var(format!("x{i}{j}"), 0.0, f64::INFINITY, VarKind::Continuous, cost[i][j]);
        }
    }
    for i in 0..3 {
        m.add_row(format!("s{i}"), (0..3).map(|j| (x[i][j], 1.0)).collect(), Sense::Eq, supply[i]);
    }
    for j in 0..3 {
        m.add_row(format!("d{j}"), (0..3).map(|i| (x[i][j], 1.0)).collect(), Sense::Eq, demand[j]);
    }
    let sol = solve_lp(&m, &SolveOptions::default()).unwrap();
    let Oracle::Optimal(expected) = dense_lp(&m, &model_bounds(&m)) else { panic!() };
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - expected).abs() < 1e-9);
}
