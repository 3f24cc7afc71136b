use gridmesh_core::builder::{build_centralized, Multipliers};
use gridmesh_core::case::bundled_case;
use gridmesh_core::daslr::*;
use gridmesh_core::NetworkCase;
use gridmesh_milp::{solve_milp, BranchAndBound, MilpSolver, SolveOptions};

fn solver() -> BranchAndBound {
    BranchAndBound::new(SolveOptions { gap_tol: 1e-9, ..Default::default() })
}

/// Report for `mg` whose exchanges on every incident link are given by `f(link, side_a)`.
fn report(case: &NetworkCase, mg: usize, stamp: usize, f: impl Fn(usize, bool) -> [f64; 4]) -> SubproblemReport {
    let exchanges = (0..case.horizon())
        .map(|_| {
            case.incident_links(mg)
                .into_iter()
                .map(|(link, side_a)| {
                    let [buy_p, sell_p, buy_q, sell_q] = f(link, side_a);
                    ExchangeValues { link, side_a, buy_p, sell_p, buy_q, sell_q }
                })
                .collect()
        })
        .collect();
    SubproblemReport { mg, stamp, exchanges, local_cost: 0.0, bound: 0.0, decisions: Vec::new() }
}

/// Violation assembled link by link: direction 2k is a buying from b.
fn hand_violation(case: &NetworkCase, latest: &[&SubproblemReport]) -> Vec<f64> {
    let d_len = case.directed_count();
    let t_len = case.horizon();
    let mut g = vec![0.0; 2 * t_len * d_len];
    let value = |mg: usize, t: usize, k: usize| {
        latest[mg].exchanges[t].iter().find(|x| x.link == k).copied().expect("incident link")
    };
    for (k, link) in case.interfaces.iter().enumerate() {
        let a = case.mg_index(&link.mg_a).unwrap();
        let b = case.mg_index(&link.mg_b).unwrap();
        for t in 0..t_len {
            let (xa, xb) = (value(a, t, k), value(b, t, k));
            let base = t * d_len;
            g[base + 2 * k] = xa.buy_p - xb.sell_p;
            g[base + 2 * k + 1] = xb.buy_p - xa.sell_p;
            g[t_len * d_len + base + 2 * k] = xa.buy_q - xb.sell_q;
            g[t_len * d_len + base + 2 * k + 1] = xb.buy_q - xa.sell_q;
        }
    }
    g
}

#[test]
fn single_interface_update_is_direct_substitution() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(1);
    let reps = [
        report(&case, 0, 0, |_, _| [0.5, 0.0, 0.0, 0.0]),
        report(&case, 1, 0, |_, _| [0.0, 0.3, 0.0, 0.0]),
    ];
    let latest: Vec<Option<SubproblemReport>> = reps.iter().cloned().map(Some).collect();
    let g = violation(&case, &latest);
    let mut lambda = Multipliers::for_case(&case);
    apply_step(&mut lambda, &g, 1.0);
    assert!((lambda.p[0][0] - 0.2).abs() < 1e-15);
    assert_eq!(lambda.p[0][1], 0.0);
    assert!(lambda.q.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn stepsize_examples() {
    assert_eq!(next_stepsize(0.5, 3.0, 2.0, 2.0), 1.5);
    let e = next_stepsize(0.9, 1.0, 1.0, 2.0);
    assert!((e - 0.45).abs() < 1e-15);
}

#[test]
fn gamma_is_clamped_and_below_one() {
    let p = DaslrParams::default();
    for r in 1..500 {
        let g = gamma(&p, r);
        assert!(g >= p.gamma_min && g <= p.gamma_max && g < 1.0, "r={r} γ={g}");
    }
}

#[test]
fn gap_substitution() {
    assert!((relative_gap(100.0, 99.0) - 0.01).abs() < 1e-15);
    assert_eq!(relative_gap(42.0, 42.0), 0.0);
}

#[test]
fn zero_violation_leaves_multipliers_and_advances_r() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(1);
    let mut coord = Coordinator::new(&case, DaslrParams::default());
    let zero = |_, _| [0.0; 4];
    assert_eq!(coord.on_arrival(report(&case, 0, 0, zero)).unwrap(), Arrival::Init);
    let out = coord.on_arrival(report(&case, 1, 0, zero)).unwrap();
    assert!(matches!(out, Arrival::Update { r: 0, stepsize: None, violation_norm, .. } if violation_norm == 0.0));
    assert_eq!(coord.r, 1);
    assert_eq!(coord.lambda, Multipliers::for_case(&case));
    assert_eq!(coord.stepsize, None);
}

#[test]
fn unknown_actor_is_rejected() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(1);
    let mut coord = Coordinator::new(&case, DaslrParams::default());
    let mut rep = report(&case, 0, 0, |_, _| [0.0; 4]);
    rep.mg = 7;
    assert!(matches!(coord.on_arrival(rep), Err(CoordError::StaleActor(7))));
}

#[test]
fn mixed_freshness_ledger() {
    // four microgrids; after initialization MG1 reports twice while the
    // others keep their stale values
    let case = bundled_case("case33_4mg").unwrap().with_horizon(1);
    let params = DaslrParams::default();
    let mut coord = Coordinator::new(&case, params.clone());
    let init: Vec<SubproblemReport> = (0..4)
        .map(|m| report(&case, m, 0, move |k, a| [0.001 * (m + 1) as f64, 0.0005 * k as f64, if a { 0.0002 } else { 0.0 }, 0.0001]))
        .collect();
    for rep in &init[..3] {
        assert_eq!(coord.on_arrival(rep.clone()).unwrap(), Arrival::Init);
    }
    coord.on_arrival(init[3].clone()).unwrap();

    let mut latest: Vec<&SubproblemReport> = init.iter().collect();
    let g0 = hand_violation(&case, &latest);
    let n0 = g0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e0 = params.init_c * case.cost_scale() / n0;
    let mut lambda: Vec<f64> = g0.iter().map(|g| e0 * g).collect();
    for (a, b) in coord.lambda.flat().iter().zip(&lambda) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    let fresh1 = report(&case, 0, 1, |_, _| [0.0, 0.002, 0.0, 0.0003]);
    let fresh2 = report(&case, 0, 2, |k, _| [0.0015 * k as f64, 0.0, 0.0001, 0.0]);
    let (mut e, mut n) = (e0, n0);
    for (r, fresh) in [(1usize, &fresh1), (2, &fresh2)] {
        let out = coord.on_arrival(fresh.clone()).unwrap();
        assert!(matches!(out, Arrival::Update { r: rr, .. } if rr == r));
        latest[0] = fresh;
        let g = hand_violation(&case, &latest);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step = gamma(&params, r) * e * n / gn;
        for (l, gi) in lambda.iter_mut().zip(&g) {
            *l += step * gi;
        }
        (e, n) = (step, gn);
        for (a, b) in coord.lambda.flat().iter().zip(&lambda) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "r={r}: {a} vs {b}");
        }
        assert!((coord.stepsize.unwrap() - e).abs() <= 1e-12 * e);
    }
}

#[test]
fn stale_report_that_does_not_improve_surrogate_is_rejected_once() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(1);
    let mut coord = Coordinator::new(&case, DaslrParams::default());
    coord.on_arrival(report(&case, 0, 0, |_, _| [0.004, 0.0, 0.0, 0.0])).unwrap();
    coord.on_arrival(report(&case, 1, 0, |_, _| [0.0, 0.0, 0.0, 0.0])).unwrap();
    // λ on "MG1 buys" is now positive; a stale report buying more is worse
    assert!(coord.lambda.p[0][0] > 0.0);
    coord.on_arrival(report(&case, 1, 1, |_, _| [0.0, 0.001, 0.0, 0.0])).unwrap();
    let stale = report(&case, 0, 0, |_, _| [0.006, 0.0, 0.0, 0.0]);
    assert_eq!(coord.on_arrival(stale.clone()).unwrap(), Arrival::Rejected);
    assert!(matches!(coord.on_arrival(stale).unwrap(), Arrival::Update { .. }));
}

#[test]
fn restoration_fixes_the_average_of_both_sides() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(1);
    let a = report(&case, 0, 0, |_, _| [0.004, 0.0, 0.0, 0.0]);
    let b = report(&case, 1, 0, |_, _| [0.0, 0.002, 0.0, 0.0]);
    let props = [Proposal::from(&a), Proposal::from(&b)];
    let (model, map) = restoration_model(&case, &props, Fixing::Exchanges).unwrap();
    let xa = map.mgs[0].exchange(0, 0).unwrap();
    let xb = map.mgs[1].exchange(0, 0).unwrap();
    for (v, want) in [(xa.buy_p, 0.003), (xb.sell_p, 0.003), (xa.sell_p, 0.0), (xb.buy_p, 0.0)] {
        let meta = model.var(v);
        assert!((meta.lower - want).abs() < 1e-15 && (meta.upper - want).abs() < 1e-15, "{}", meta.name);
    }
    assert_eq!(model.var(xa.u_buy).lower, 1.0);
    assert_eq!(model.var(xb.u_buy).upper, 0.0);
}

#[test]
fn consistent_fixing_restores_its_own_cost() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(2);
    let (model, map) = build_centralized(&case).unwrap();
    let opt = solve_milp(&model, &SolveOptions::default()).unwrap();
    let reps: Vec<SubproblemReport> = (0..2)
        .map(|m| {
            let vars = &map.mgs[m];
            let exchanges = vars
                .periods
                .iter()
                .map(|p| {
                    p.exchange
                        .iter()
                        .map(|e| ExchangeValues {
                            link: e.link,
                            side_a: e.side_a,
                            buy_p: opt.value(e.buy_p),
                            sell_p: opt.value(e.sell_p),
                            buy_q: opt.value(e.buy_q),
                            sell_q: opt.value(e.sell_q),
                        })
                        .collect()
                })
                .collect();
            SubproblemReport { mg: m, stamp: 0, exchanges, local_cost: 0.0, bound: 0.0, decisions: Vec::new() }
        })
        .collect();
    let props: Vec<Proposal> = reps.iter().map(Proposal::from).collect();
    let restored = restore_feasibility(&case, &props, &solver()).unwrap().unwrap();
    assert!((restored.cost - opt.objective).abs() <= 1e-6 * opt.objective.abs().max(1.0));
}

#[test]
fn restored_cost_and_dual_bracket_the_optimum() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(2);
    let (model, _) = build_centralized(&case).unwrap();
    let opt = solve_milp(&model, &SolveOptions::default()).unwrap().objective;
    let s = solver();
    let mut coord = Coordinator::new(&case, DaslrParams::default());
    for round in 0..6 {
        for m in 0..2 {
            let rep = solve_subproblem(&case, m, &coord.lambda, coord.r, &s).unwrap();
            coord.on_arrival(rep).unwrap();
        }
        let q = dual_value(&case, &coord.lambda, &s).unwrap();
        assert!(q <= opt + 1e-7, "round {round}: dual {q} above optimum {opt}");
        coord.search(&s).unwrap();
        if let Some(f) = coord.feasible_cost() {
            assert!(f >= opt - 1e-7, "round {round}: restored {f} below optimum {opt}");
        }
    }
}

#[test]
fn dual_at_zero_equals_optimum_without_exchange() {
    let mut case = bundled_case("case_mini2").unwrap().with_horizon(2);
    for link in &mut case.interfaces {
        link.p_buy_max = 0.0;
        link.p_sell_max = 0.0;
        link.q_buy_max = 0.0;
        link.q_sell_max = 0.0;
    }
    let (model, _) = build_centralized(&case).unwrap();
    let opt = solve_milp(&model, &SolveOptions::default()).unwrap().objective;
    let q = dual_value(&case, &Multipliers::for_case(&case), &solver()).unwrap();
    assert!((q - opt).abs() <= 1e-6 * opt.abs().max(1.0), "{q} vs {opt}");
}

#[test]
fn single_microgrid_closes_the_gap_after_one_update() {
    let case = bundled_case("case_mini2").unwrap().with_horizon(2).single_microgrid(0);
    let s = solver();
    let mut coord = Coordinator::new(&case, DaslrParams::default());
    let rep = solve_subproblem(&case, 0, &coord.lambda, 0, &s).unwrap();
    assert!(matches!(coord.on_arrival(rep).unwrap(), Arrival::Update { .. }));
    assert_eq!(coord.r, 1);
    assert!(coord.search_due());
    coord.search(&s).unwrap();
    assert!(coord.gap().unwrap().abs() < 1e-6);
    assert!(coord.converged());
}

#[test]
fn weak_duality_over_random_multipliers() {
    use rand::{Rng, SeedableRng};
    let case = bundled_case("case_mini2").unwrap().with_horizon(1);
    let (model, _) = build_centralized(&case).unwrap();
    let opt = solve_milp(&model, &SolveOptions::default()).unwrap().objective;
    let s: &dyn MilpSolver = &solver();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut lambda = Multipliers::for_case(&case);
        for v in lambda.p.iter_mut().chain(lambda.q.iter_mut()).flatten() {
            *v = rng.gen_range(-2000.0..2000.0);
        }
        let q = dual_value(&case, &lambda, s).unwrap();
        assert!(q <= opt + 1e-7, "{q} > {opt}");
    }
}
