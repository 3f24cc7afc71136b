//! Synchronous consensus ADMM over the same per-microgrid subproblems.
//!
//! Every exchange variable is tied to a consensus target per period and
//! directed interface. The quadratic penalty `ρ/2·(x − z)²` is replaced by
//! its piecewise-linear interpolant so that subproblems stay MILPs. The
//! duals of the buying side act as interface prices, so the sum of
//! subproblem bounds at those prices is a valid lower bound.

use gridmesh_milp::{MilpSolver, Sense, SolveStatus, VarId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builder::{build_subproblem, buy_direction, sell_direction, Multipliers, Schedule};
use crate::case::NetworkCase;
use crate::daslr::{relative_gap, restore, CoordError, ExchangeValues, Proposal};
use crate::harness::{attribute_costs, run_params, HarnessError, LogRow, RunLog, RunOptions, RunOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    /// Penalty in multiples of [`penalty_scale`].
    pub rho: f64,
    /// Linear pieces of the penalty over each exchange range.
    pub segments: usize,
    /// Primal and dual residual target in p.u.
    pub tol: f64,
    /// Primal residual above which a round counts towards divergence.
    pub divergence_ceiling: f64,
    pub divergence_window: usize,
    /// Round budget; `None` gives the same number of subproblem solves as
    /// the DA-SLR iteration budget.
    pub rounds: Option<usize>,
    /// Solve continuous relaxations instead of the MILPs.
    pub relax: bool,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            segments: 8,
            tol: 1e-4,
            divergence_ceiling: 1e-2,
            divergence_window: 20,
            rounds: None,
            relax: false,
        }
    }
}

/// Breakpoints of the penalty on `[0, upper]`: a uniform grid plus `z`.
pub fn pwl_breakpoints(upper: f64, z: f64, segments: usize) -> Vec<f64> {
    let n = segments.max(1);
    let mut pts: Vec<f64> = (0..=n).map(|i| upper * i as f64 / n as f64).collect();
    pts.push(z.clamp(0.0, upper));
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * upper.max(1.0));
    pts
}

/// The interpolant of `coef·(x − z)²` over [`pwl_breakpoints`].
pub fn pwl_penalty(x: f64, upper: f64, z: f64, segments: usize, coef: f64) -> f64 {
    let f = |v: f64| coef * (v - z) * (v - z);
    pwl_breakpoints(upper, z, segments)
        .windows(2)
        .map(|w| f(w[0]) + (f(w[1]) - f(w[0])) / (w[1] - w[0]) * (x - w[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Cost scale divided by the largest real-power exchange limit, so that
/// `ρ = 1` prices a deviation of one full link capacity at one cost scale.
pub fn penalty_scale(case: &NetworkCase) -> f64 {
    let cap = case
        .interfaces
        .iter()
        .flat_map(|l| [l.p_buy_max, l.p_sell_max])
        .fold(0.0f64, f64::max);
    if cap > 0.0 {
        case.cost_scale() / cap
    } else {
        case.cost_scale()
    }
}

/// `y + ρ·residual`.
pub fn dual_step(y: f64, residual: f64, rho: f64) -> f64 {
    y + rho * residual
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub rho: f64,
    pub z: Multipliers,
    pub y_buy: Multipliers,
    pub y_sell: Multipliers,
    pub round: usize,
    pub primal_history: Vec<f64>,
    pub dual_history: Vec<f64>,
    /// Exchanges reported in the last round, per microgrid and period.
    pub latest: Vec<Vec<Vec<ExchangeValues>>>,
    /// Integer decisions reported in the last round, per microgrid.
    pub decisions: Vec<Vec<f64>>,
    pub local_costs: Vec<f64>,
    pub diverged_at: Option<usize>,
}

impl AdmmState {
    pub fn new(case: &NetworkCase, rho: f64) -> Self {
        let zero = Multipliers::for_case(case);
        Self {
            rho,
            z: zero.clone(),
            y_buy: zero.clone(),
            y_sell: zero,
            round: 0,
            primal_history: Vec::new(),
            dual_history: Vec::new(),
            latest: vec![Vec::new(); case.microgrids.len()],
            decisions: vec![Vec::new(); case.microgrids.len()],
            local_costs: vec![0.0; case.microgrids.len()],
            diverged_at: None,
        }
    }

    /// Interface prices implied by the duals.
    pub fn prices(&self) -> &Multipliers {
        &self.y_buy
    }
}

fn add_penalty(model: &mut gridmesh_milp::MilpModel, x: VarId, z: f64, coef: f64, segments: usize, name: String) {
    let upper = model.var(x).upper;
    if !(upper > 0.0) || coef <= 0.0 {
        return;
    }
    let f = |v: f64| coef * (v - z) * (v - z);
    let top = f(0.0).max(f(upper));
    let s = model.continuous(format!("{name}:pen"), 0.0, top);
    model.set_objective(s, 1.0);
    for (i, w) in pwl_breakpoints(upper, z, segments).windows(2).enumerate() {
        let slope = (f(w[1]) - f(w[0])) / (w[1] - w[0]);
        model.add_row(format!("{name}:pen{i}"), vec![(s, 1.0), (x, -slope)], Sense::Ge, f(w[0]) - slope * w[0]);
    }
}

struct MgResult {
    exchanges: Vec<Vec<ExchangeValues>>,
    decisions: Vec<f64>,
    local_cost: f64,
}

fn solve_mg(
    case: &NetworkCase,
    mg: usize,
    state: &AdmmState,
    params: &AdmmParams,
    scale: f64,
    solver: &dyn MilpSolver,
) -> Result<MgResult, CoordError> {
    let id = &case.microgrids[mg].id;
    let (base, map) = build_subproblem(case, id, &Multipliers::for_case(case))?;
    let mut model = if params.relax { base.relaxed() } else { base.clone() };
    let coef = 0.5 * params.rho * scale;
    for (t, pv) in map.mgs[0].periods.iter().enumerate() {
        for x in &pv.exchange {
            let b = buy_direction(x.link, x.side_a);
            let s = sell_direction(x.link, x.side_a);
            let terms = [
                (x.buy_p, state.y_buy.p[t][b], state.z.p[t][b], "bp"),
                (x.buy_q, state.y_buy.q[t][b], state.z.q[t][b], "bq"),
                (x.sell_p, state.y_sell.p[t][s], state.z.p[t][s], "sp"),
                (x.sell_q, state.y_sell.q[t][s], state.z.q[t][s], "sq"),
            ];
            for (v, y, z, tag) in terms {
                model.add_objective(v, y);
                add_penalty(&mut model, v, z, coef, params.segments, format!("t{t}:x{}:{tag}", x.link));
            }
        }
    }
    let sol = solver.solve(&model)?;
    if !sol.has_incumbent() {
        return Err(CoordError::Subproblem { mg: id.clone(), status: sol.status });
    }
    let exchanges = map.mgs[0]
        .periods
        .iter()
        .map(|pv| {
            pv.exchange
                .iter()
                .map(|e| ExchangeValues {
                    link: e.link,
                    side_a: e.side_a,
                    buy_p: sol.value(e.buy_p),
                    sell_p: sol.value(e.sell_p),
                    buy_q: sol.value(e.buy_q),
                    sell_q: sol.value(e.sell_q),
                })
                .collect()
        })
        .collect();
    let local_cost = base.objective_value(&sol.values[..base.num_vars()]);
    let decisions = base.integer_vars().map(|v| sol.value(v)).collect();
    Ok(MgResult { exchanges, decisions, local_cost })
}

/// Residual norms of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundResiduals {
    pub primal: f64,
    pub dual: f64,
}

/// One synchronous round: every microgrid solves against the round-`r`
/// targets and duals, then targets and duals are updated together.
pub fn admm_iterate(
    state: &mut AdmmState,
    case: &NetworkCase,
    params: &AdmmParams,
    solver: &dyn MilpSolver,
) -> Result<RoundResiduals, CoordError> {
    let scale = penalty_scale(case);
    let results = (0..case.microgrids.len())
        .map(|m| solve_mg(case, m, state, params, scale, solver))
        .collect::<Result<Vec<_>, _>>()?;
    let find = |m: usize, t: usize, k: usize| results[m].exchanges.get(t).and_then(|r| r.iter().find(|x| x.link == k));
    let rho_eff = params.rho * scale;
    let (mut primal, mut dual) = (0.0f64, 0.0f64);
    for (k, link) in case.interfaces.iter().enumerate() {
        let (Some(a), Some(b)) = (case.mg_index(&link.mg_a), case.mg_index(&link.mg_b)) else {
            continue;
        };
        for t in 0..case.horizon() {
            let (Some(xa), Some(xb)) = (find(a, t, k), find(b, t, k)) else {
                continue;
            };
            // direction 2k: a buys from b; 2k + 1: b buys from a
            let pairs = [(2 * k, xa, xb), (2 * k + 1, xb, xa)];
            for (d, buyer, seller) in pairs {
                for (bx, sx, z, yb, ys) in [
                    (buyer.buy_p, seller.sell_p, &mut state.z.p[t][d], &mut state.y_buy.p[t][d], &mut state.y_sell.p[t][d]),
                    (buyer.buy_q, seller.sell_q, &mut state.z.q[t][d], &mut state.y_buy.q[t][d], &mut state.y_sell.q[t][d]),
                ] {
                    let next = 0.5 * (bx + sx);
                    *yb = dual_step(*yb, bx - next, rho_eff);
                    *ys = dual_step(*ys, sx - next, rho_eff);
                    primal += (bx - sx) * (bx - sx);
                    dual += (next - *z) * (next - *z);
                    *z = next;
                }
            }
        }
    }
    let res = RoundResiduals { primal: primal.sqrt(), dual: params.rho * dual.sqrt() };
    state.latest = results.iter().map(|r| r.exchanges.clone()).collect();
    state.local_costs = results.iter().map(|r| r.local_cost).collect();
    state.decisions = results.into_iter().map(|r| r.decisions).collect();
    state.primal_history.push(res.primal);
    state.dual_history.push(res.dual);
    state.round += 1;
    let w = params.divergence_window.max(1);
    if state.diverged_at.is_none()
        && state.primal_history.len() >= w
        && state.primal_history[state.primal_history.len() - w..].iter().all(|&p| p > params.divergence_ceiling)
    {
        state.diverged_at = Some(state.round);
    }
    Ok(res)
}

/// Sum of subproblem lower bounds at `lambda`, relaxed when asked.
fn lower_bound(case: &NetworkCase, lambda: &Multipliers, relax: bool, solver: &dyn MilpSolver) -> Result<f64, CoordError> {
    let mut total = 0.0;
    for mg in &case.microgrids {
        let (model, _) = build_subproblem(case, &mg.id, lambda)?;
        let model = if relax { model.relaxed() } else { model };
        let sol = solver.solve(&model)?;
        match sol.status {
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                return Err(CoordError::Subproblem { mg: mg.id.clone(), status: sol.status })
            }
            _ => total += sol.best_bound,
        }
    }
    Ok(total)
}

pub fn run(case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    run_with_state(case, opts).map(|(outcome, _)| outcome)
}

/// Run ADMM to convergence or budget and also return the final state.
pub fn run_with_state(case: &NetworkCase, opts: &RunOptions) -> Result<(RunOutcome, AdmmState), HarnessError> {
    let params = &opts.admm;
    let n = case.microgrids.len().max(1);
    opts.delay.validate(case.microgrids.len())?;
    let rounds = params.rounds.unwrap_or(opts.max_iters.div_ceil(n)).max(1);
    let solver = opts.solver.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = AdmmState::new(case, params.rho);
    let mut log = RunLog::new(run_params(case, "admm", opts));
    let mut best: Option<(f64, Schedule)> = None;
    let mut dual_bound: Option<f64> = None;
    let (mut now, mut compute_time) = (0.0, 0.0);
    let mut notes = vec![format!(
        "consensus ADMM on the coupling rows, penalty {}·scale/2·(x − z)² linearized over {} segments{}",
        params.rho,
        params.segments,
        if params.relax { ", continuous relaxation" } else { "" }
    )];
    let mut converged = false;
    for _ in 0..rounds {
        let res = admm_iterate(&mut state, case, params, solver)?;
        let draws: Vec<f64> = (0..case.microgrids.len()).map(|m| opts.delay.draw(m, &mut rng)).collect();
        compute_time += draws.iter().sum::<f64>();
        now += opts.broadcast_latency + draws.iter().copied().fold(0.0, f64::max);

        let latest: Vec<Proposal<'_>> = state
            .latest
            .iter()
            .zip(&state.decisions)
            .map(|(x, d)| Proposal { exchanges: x, decisions: d })
            .collect();
        if let Some(res) = restore(case, &latest, params.relax, solver)? {
            if best.as_ref().is_none_or(|(c, _)| res.cost < *c) {
                best = Some((res.cost, res.schedule));
            }
        }
        let d = lower_bound(case, state.prices(), params.relax, solver)?;
        dual_bound = Some(dual_bound.map_or(d, |b: f64| b.max(d)));

        let feasible = best.as_ref().map(|(c, _)| *c);
        let gap = feasible.zip(dual_bound).map(|(f, d)| relative_gap(f, d));
        for event in ["round", "search"] {
            log.rows.push(LogRow {
                event_seq: log.rows.len() as u64,
                sim_time: now,
                actor: "coordinator".into(),
                event: event.into(),
                r: Some(state.round),
                stepsize: None,
                violation_norm: Some(res.primal),
                feasible_cost: feasible,
                dual_bound,
                gap,
            });
        }
        if res.primal <= params.tol && res.dual <= params.tol {
            converged = true;
            break;
        }
        if gap.is_some_and(|g| g <= opts.gap_tol) {
            converged = true;
            break;
        }
    }
    if let Some(r) = state.diverged_at {
        notes.push(format!(
            "divergence detected: primal residual above {} for {} consecutive rounds by round {r}",
            params.divergence_ceiling, params.divergence_window
        ));
    }
    if !converged {
        notes.push(format!(
            "stopped after {} rounds, primal residual {:.3e}",
            state.round,
            state.primal_history.last().copied().unwrap_or(f64::NAN)
        ));
    }
    let (cost, schedule) = best.ok_or(HarnessError::NoFeasibleFound)?;
    let lambda = state.prices().clone();
    let outcome = RunOutcome {
        method: "admm".into(),
        per_mg_costs: attribute_costs(case, &schedule, &lambda),
        schedule,
        feasible_cost: cost,
        dual_bound,
        gap: dual_bound.map(|d| relative_gap(cost, d)),
        iterations: state.round,
        lambda,
        sim_time: now,
        compute_time,
        notes,
        log,
    };
    Ok((outcome, state))
}
