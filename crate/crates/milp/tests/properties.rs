mod common;

use common::{dense_lp, model_bounds, random_lp, random_milp, Oracle};
use gridmesh_milp::{solve_lp, solve_milp, SolveOptions, SolveStatus};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_optimum_is_feasible_and_matches_oracle(seed in 100u64..100_000) {
        let m = random_lp(seed, 15);
        let sol = solve_lp(&m, &SolveOptions::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(m.max_violation(&sol.values) <= 1e-7);
        if let Oracle::Optimal(v) = dense_lp(&m, &model_bounds(&m)) {
            prop_assert!((sol.objective - v).abs() <= 1e-7 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn milp_bound_sandwiches_incumbent(seed in 100u64..100_000) {
        let m = random_milp(seed, 8);
        let lp = solve_lp(&m, &SolveOptions::default()).unwrap();
        let sol = solve_milp(&m, &SolveOptions::default()).unwrap();
        if sol.status == SolveStatus::Optimal {
            prop_assert!(lp.objective <= sol.objective + 1e-9);
            prop_assert!(sol.best_bound <= sol.objective + 1e-9);
            prop_assert!(sol.best_bound >= lp.objective - 1e-9);
            prop_assert!(m.max_integrality_violation(&sol.values) <= 1e-6);
        }
    }
}
