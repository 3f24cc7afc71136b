use gridmesh_core::builder::{build_centralized, build_subproblem, Multipliers};
use gridmesh_core::case::{bundled_case, bundled_names, droop_grid, generate, NetworkCase};
use gridmesh_core::daslr::{apply_step, gamma, next_stepsize, norm, DaslrParams};
use gridmesh_milp::{solve_milp, SolveOptions};
use proptest::prelude::*;

proptest! {
    #[test]
    fn droop_grid_is_uniform_and_closed(min in 0.001..1.0f64, step in 0.0001..0.1f64, d in 0usize..200) {
        let max = min + step * d as f64;
        let g = droop_grid(min, max, step);
        prop_assert_eq!(g.len(), d + 1);
        prop_assert_eq!(g[0], min);
        prop_assert_eq!(*g.last().unwrap(), max);
        for w in g.windows(2) {
            let gap = w[1] - w[0];
            prop_assert!(((gap - step) / step).abs() <= 1e-9, "spacing {gap} vs {step}");
        }
    }

    #[test]
    fn stepsize_recursion_holds(
        gamma in 0.01..0.999f64,
        prev in 1e-6..1e3f64,
        prev_norm in 1e-6..1e3f64,
        norm in 1e-6..1e3f64,
    ) {
        let e = next_stepsize(gamma, prev, prev_norm, norm);
        let lhs = e * norm;
        let rhs = gamma * prev * prev_norm;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn gamma_stays_in_its_clamp(m in 1.0..100.0f64, p in 0.0..0.5f64, r in 0usize..10_000) {
        let params = DaslrParams { gamma_m: m, gamma_p: p, ..DaslrParams::default() };
        let g = gamma(&params, r);
        prop_assert!(g >= params.gamma_min && g <= params.gamma_max);
    }

    #[test]
    fn multiplier_step_is_lambda_plus_e_g(
        g in prop::collection::vec(-1.0..1.0f64, 8),
        e in 0.0..10.0f64,
        start in -1.0..1.0f64,
    ) {
        let mut lambda = Multipliers::zeros(2, 2);
        for v in lambda.p.iter_mut().chain(lambda.q.iter_mut()).flatten() {
            *v = start;
        }
        apply_step(&mut lambda, &g, e);
        let flat = lambda.flat();
        for (l, gi) in flat.iter().zip(&g) {
            prop_assert_eq!(*l, start + e * gi);
        }
        prop_assert!((norm(&g) - g.iter().map(|v| v * v).sum::<f64>().sqrt()).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn subproblem_solutions_respect_exclusivity(prices in prop::collection::vec(-0.05..0.05f64, 16), mg in 0usize..2) {
        let case = bundled_case("case_mini2").unwrap();
        let mut lambda = Multipliers::for_case(&case);
        for (v, p) in lambda.p.iter_mut().chain(lambda.q.iter_mut()).flatten().zip(&prices) {
            *v = *p;
        }
        let id = case.microgrids[mg].id.clone();
        let (model, map) = build_subproblem(&case, &id, &lambda).unwrap();
        let sol = solve_milp(&model, &SolveOptions::default()).unwrap();
        prop_assert!(sol.has_incumbent());
        for pv in &map.mgs[0].periods {
            for x in &pv.exchange {
                if sol.value(x.u_buy) > 0.5 {
                    prop_assert!(sol.value(x.sell_p) <= 1e-9 && sol.value(x.sell_q) <= 1e-9);
                } else {
                    prop_assert!(sol.value(x.buy_p) <= 1e-9 && sol.value(x.buy_q) <= 1e-9);
                }
            }
            for b in &pv.batteries {
                prop_assert!(sol.value(b.ch) <= 1e-9 || sol.value(b.dch) <= 1e-9);
            }
        }
    }
}

#[test]
fn cases_round_trip_through_json() {
    for name in bundled_names() {
        let case = bundled_case(name).unwrap();
        let again = NetworkCase::from_json_str(&case.to_json()).unwrap();
        assert_eq!(case, again, "{name}");
    }
}

#[test]
fn kw_and_per_unit_files_build_identical_models() {
    for name in ["case_mini2", "case33_4mg"] {
        let raw = generate(name).unwrap();
        let kw = NetworkCase::from_json_str(&serde_json::to_string(&raw).unwrap()).unwrap();
        let pu = NetworkCase::from_json_str(&kw.to_json()).unwrap();
        let (a, _) = build_centralized(&kw.with_horizon(2)).unwrap();
        let (b, _) = build_centralized(&pu.with_horizon(2)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}
