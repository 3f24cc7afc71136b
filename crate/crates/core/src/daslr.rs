//! Distributed asynchronous surrogate Lagrangian relaxation.
//!
//! The [`Coordinator`] owns the multipliers and updates them every time a
//! microgrid reports, using whatever exchange values are most recent for
//! the others. Workers see nothing but their own case slice and a
//! multiplier snapshot; they answer with a [`SubproblemReport`], which
//! carries exchange quantities and scalar metadata only.

use gridmesh_milp::{MilpModel, MilpSolver, SolveError, SolveStatus, VarId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{
    build_centralized, build_subproblem, buy_direction, sell_direction, BuildError, Multipliers, Schedule,
    VariableMap,
};
use crate::case::NetworkCase;

#[derive(Debug, Error)]
pub enum CoordError {
    #[error("arrival from unknown microgrid index {0}")]
    StaleActor(usize),
    #[error("no feasible schedule has been found yet")]
    NoFeasibleYet,
    #[error("no feasible schedule found within the iteration budget")]
    NoFeasibleFound,
    #[error("subproblem for {mg} ended with status {status}")]
    Subproblem { mg: String, status: SolveStatus },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Stepsize and stopping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaslrParams {
    /// `M` in `γ^r = 1 − 1/(M·r^(1−1/r^p))`.
    pub gamma_m: f64,
    /// `p` in the same schedule.
    pub gamma_p: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// `c` in `e⁰ = c·cost_scale/‖g⁰‖`.
    pub init_c: f64,
    /// Starting price on every active-power direction, as a multiple of
    /// `cost_scale`. Reactive prices always start at zero.
    #[serde(default)]
    pub init_price: f64,
    /// Accepted updates between feasibility searches; `None` uses the
    /// number of microgrids.
    pub search_every: Option<usize>,
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl DaslrParams {
    /// `λ⁰` for `case`.
    pub fn initial_multipliers(&self, case: &NetworkCase) -> Multipliers {
        let mut lambda = Multipliers::for_case(case);
        let price = self.init_price * case.cost_scale();
        for v in lambda.p.iter_mut().flatten() {
            *v = price;
        }
        lambda
    }
}

impl Default for DaslrParams {
    fn default() -> Self {
        Self {
            gamma_m: 20.0,
            gamma_p: 0.04,
            gamma_min: 0.01,
            gamma_max: 0.999,
            init_c: 0.1,
            init_price: 0.0,
            search_every: None,
            gap_tol: 0.002,
            max_iters: 200,
        }
    }
}

/// `γ^r` for `r >= 1`.
pub fn gamma(params: &DaslrParams, r: usize) -> f64 {
    let r = r.max(1) as f64;
    let g = 1.0 - 1.0 / (params.gamma_m * r.powf(1.0 - 1.0 / r.powf(params.gamma_p)));
    g.clamp(params.gamma_min, params.gamma_max)
}

/// Exchange quantities of one microgrid on one link in one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeValues {
    pub link: usize,
    pub side_a: bool,
    pub buy_p: f64,
    pub sell_p: f64,
    pub buy_q: f64,
    pub sell_q: f64,
}

/// What a microgrid sends back to the coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemReport {
    pub mg: usize,
    /// Update count of the multiplier snapshot the solve used.
    pub stamp: usize,
    /// `exchanges[t]` in the order of `NetworkCase::incident_links`.
    pub exchanges: Vec<Vec<ExchangeValues>>,
    /// Own generation, battery and shedding cost, without multiplier terms.
    pub local_cost: f64,
    /// Lower bound on the subproblem minimum at the snapshot.
    pub bound: f64,
    /// Values of the subproblem's integer variables in model order.
    pub decisions: Vec<f64>,
}

/// `Σ λ·buy − Σ λ·sell` of one microgrid's exchanges.
pub fn price_exchanges(lambda: &Multipliers, exchanges: &[Vec<ExchangeValues>]) -> f64 {
    let mut total = 0.0;
    for (t, row) in exchanges.iter().enumerate() {
        for x in row {
            let b = buy_direction(x.link, x.side_a);
            let s = sell_direction(x.link, x.side_a);
            total += lambda.p[t][b] * x.buy_p + lambda.q[t][b] * x.buy_q;
            total -= lambda.p[t][s] * x.sell_p + lambda.q[t][s] * x.sell_q;
        }
    }
    total
}

/// Solve microgrid `mg`'s subproblem at `lambda` and package the report.
pub fn solve_subproblem(
    case: &NetworkCase,
    mg: usize,
    lambda: &Multipliers,
    stamp: usize,
    solver: &dyn MilpSolver,
) -> Result<SubproblemReport, CoordError> {
    let id = &case.microgrids.get(mg).ok_or(CoordError::StaleActor(mg))?.id;
    let (model, map) = build_subproblem(case, id, lambda)?;
    let sol = solver.solve(&model)?;
    if !sol.has_incumbent() {
        return Err(CoordError::Subproblem { mg: id.clone(), status: sol.status });
    }
    let vars = &map.mgs[0];
    let exchanges: Vec<Vec<ExchangeValues>> = vars
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
    let local_cost = sol.objective - price_exchanges(lambda, &exchanges);
    let decisions = model.integer_vars().map(|v| sol.value(v)).collect();
    Ok(SubproblemReport { mg, stamp, exchanges, local_cost, bound: sol.best_bound, decisions })
}

/// Coupling violations `buy − sell` per period and directed interface,
/// flattened like [`Multipliers::flat`]. Microgrids without a report
/// contribute zeros.
pub fn violation(case: &NetworkCase, latest: &[Option<SubproblemReport>]) -> Vec<f64> {
    let t_len = case.horizon();
    let d_len = case.directed_count();
    let mut gp = vec![0.0; t_len * d_len];
    let mut gq = vec![0.0; t_len * d_len];
    for rep in latest.iter().flatten() {
        for (t, row) in rep.exchanges.iter().enumerate() {
            for x in row {
                let b = t * d_len + buy_direction(x.link, x.side_a);
                let s = t * d_len + sell_direction(x.link, x.side_a);
                gp[b] += x.buy_p;
                gq[b] += x.buy_q;
                gp[s] -= x.sell_p;
                gq[s] -= x.sell_q;
            }
        }
    }
    gp.extend(gq);
    gp
}

/// `e^r = γ^r·e^{r−1}·‖g^{r−1}‖/‖g^r‖`.
pub fn next_stepsize(gamma: f64, prev_step: f64, prev_norm: f64, norm: f64) -> f64 {
    gamma * prev_step * prev_norm / norm
}

/// `λ ← λ + e·g` with `g` laid out like [`Multipliers::flat`].
pub fn apply_step(lambda: &mut Multipliers, g: &[f64], e: f64) {
    let p = lambda.p.iter_mut().flatten();
    let q = lambda.q.iter_mut().flatten();
    for (slot, gi) in p.chain(q).zip(g) {
        *slot += e * gi;
    }
}

pub fn norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A feasible coupled schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Restored {
    pub cost: f64,
    pub schedule: Schedule,
}

/// What restoration uses from one microgrid's latest solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct Proposal<'r> {
    pub exchanges: &'r [Vec<ExchangeValues>],
    /// Values of the microgrid's integer variables in model order; empty
    /// leaves them free.
    pub decisions: &'r [f64],
}

impl<'r> From<&'r SubproblemReport> for Proposal<'r> {
    fn from(rep: &'r SubproblemReport) -> Self {
        Proposal { exchanges: &rep.exchanges, decisions: &rep.decisions }
    }
}

/// Which reported values a restoration model holds fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixing {
    /// Integer decisions of every microgrid plus the netted exchange
    /// direction; exchange amounts are re-optimized.
    Decisions,
    /// Exchange amounts at the average of both sides, netted to one
    /// direction; everything else is re-optimized.
    Exchanges,
}

/// Solve the coupled problem with the latest reported values fixed by
/// [`Fixing::Decisions`], falling back to [`Fixing::Exchanges`] when that
/// is infeasible. Returns `None` when both are.
pub fn restore_feasibility(
    case: &NetworkCase,
    latest: &[Proposal<'_>],
    solver: &dyn MilpSolver,
) -> Result<Option<Restored>, CoordError> {
    restore(case, latest, false, solver)
}

/// [`restore_feasibility`], optionally on the continuous relaxation. Relaxed
/// decisions are fractional, so a relaxed restoration fixes exchanges only.
pub fn restore(
    case: &NetworkCase,
    latest: &[Proposal<'_>],
    relax: bool,
    solver: &dyn MilpSolver,
) -> Result<Option<Restored>, CoordError> {
    let order: &[Fixing] = if relax { &[Fixing::Exchanges] } else { &[Fixing::Decisions, Fixing::Exchanges] };
    for &fixing in order {
        let (model, map) = restoration_model(case, latest, fixing)?;
        let model = if relax { model.relaxed() } else { model };
        let sol = solver.solve(&model)?;
        if sol.has_incumbent() {
            let schedule = Schedule::from_solution(case, &map, &sol.values);
            return Ok(Some(Restored { cost: sol.objective, schedule }));
        }
    }
    Ok(None)
}

/// The centralized model with reported values fixed as described by
/// `fixing`.
pub fn restoration_model(
    case: &NetworkCase,
    latest: &[Proposal<'_>],
    fixing: Fixing,
) -> Result<(MilpModel, VariableMap), CoordError> {
    let (mut model, map) = build_centralized(case)?;
    if fixing == Fixing::Decisions {
        for (vars, prop) in map.mgs.iter().zip(latest) {
            let ints: Vec<VarId> = vars.var_range.clone().map(VarId).filter(|v| model.var(*v).kind.is_integral()).collect();
            if ints.len() == prop.decisions.len() {
                for (v, &x) in ints.into_iter().zip(prop.decisions) {
                    model.fix(v, x.round());
                }
            }
        }
    }
    let find = |mg: usize, t: usize, k: usize| {
        latest.get(mg).and_then(|m| m.exchanges.get(t)).and_then(|r| r.iter().find(|x| x.link == k))
    };
    for (k, link) in case.interfaces.iter().enumerate() {
        let a = case.mg_index(&link.mg_a).ok_or_else(|| BuildError::UnknownMicrogrid(link.mg_a.clone()))?;
        let b = case.mg_index(&link.mg_b).ok_or_else(|| BuildError::UnknownMicrogrid(link.mg_b.clone()))?;
        for t in 0..case.horizon() {
            let (Some(va), Some(vb)) = (map.mgs[a].exchange(t, k), map.mgs[b].exchange(t, k)) else {
                continue;
            };
            let (va, vb) = (*va, *vb);
            let zero = ExchangeValues { link: k, side_a: true, buy_p: 0.0, sell_p: 0.0, buy_q: 0.0, sell_q: 0.0 };
            let ra = find(a, t, k).copied().unwrap_or(zero);
            let rb = find(b, t, k).copied().unwrap_or(zero);
            let ab_p = 0.5 * (ra.buy_p + rb.sell_p);
            let ba_p = 0.5 * (rb.buy_p + ra.sell_p);
            let ab_q = 0.5 * (ra.buy_q + rb.sell_q);
            let ba_q = 0.5 * (rb.buy_q + ra.sell_q);
            let (net_p, net_q) = (ab_p - ba_p, ab_q - ba_q);
            let a_buys = if net_p.abs() > 1e-12 { net_p > 0.0 } else { net_q > 0.0 };
            let (buyer, seller, p, q) = if a_buys { (va, vb, net_p, net_q) } else { (vb, va, -net_p, -net_q) };
            model.fix(buyer.u_buy, 1.0);
            model.fix(seller.u_buy, 0.0);
            if fixing == Fixing::Decisions {
                continue;
            }
            let cap = |x: f64, u: f64, w: f64| x.clamp(0.0, u.min(w));
            let p = cap(p, model.var(buyer.buy_p).upper, model.var(seller.sell_p).upper);
            let q = cap(q, model.var(buyer.buy_q).upper, model.var(seller.sell_q).upper);
            model.fix(buyer.buy_p, p);
            model.fix(seller.sell_p, p);
            model.fix(buyer.buy_q, q);
            model.fix(seller.sell_q, q);
            model.fix(buyer.sell_p, 0.0);
            model.fix(buyer.sell_q, 0.0);
            model.fix(seller.buy_p, 0.0);
            model.fix(seller.buy_q, 0.0);
        }
    }
    Ok((model, map))
}

/// `q(λ)`: the sum of subproblem lower bounds at `lambda`.
pub fn dual_value(case: &NetworkCase, lambda: &Multipliers, solver: &dyn MilpSolver) -> Result<f64, CoordError> {
    let mut total = 0.0;
    for (m, grid) in case.microgrids.iter().enumerate() {
        let (model, _) = build_subproblem(case, &grid.id, lambda)?;
        let sol = solver.solve(&model)?;
        match sol.status {
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                return Err(CoordError::Subproblem { mg: case.microgrids[m].id.clone(), status: sol.status })
            }
            _ => total += sol.best_bound,
        }
    }
    Ok(total)
}

/// Result of feeding one report to the coordinator.
#[derive(Debug, Clone, PartialEq)]
pub enum Arrival {
    /// Stored while waiting for the first report of every microgrid.
    Init,
    /// Multipliers were updated (possibly by a zero step). `r` is the index
    /// of the violation and stepsize used.
    Update { r: usize, stepsize: Option<f64>, violation_norm: f64, gamma: Option<f64> },
    /// The report did not improve the surrogate Lagrangian at the current
    /// multipliers; the microgrid should re-solve.
    Rejected,
}

/// Outcome of a feasibility search.
#[derive(Debug, Clone, PartialEq)]
pub struct Search {
    pub restored: Option<f64>,
    pub dual: f64,
}

pub struct Coordinator<'a> {
    case: &'a NetworkCase,
    pub params: DaslrParams,
    pub lambda: Multipliers,
    /// Current stepsize; `None` until the first nonzero violation.
    pub stepsize: Option<f64>,
    /// `‖g‖` of the last update with a nonzero violation.
    pub last_norm: Option<f64>,
    pub latest: Vec<Option<SubproblemReport>>,
    rejected_last: Vec<bool>,
    /// Number of multiplier updates performed.
    pub r: usize,
    since_search: usize,
    pub best_feasible: Option<Restored>,
    pub dual_bound: Option<f64>,
    started: bool,
}

impl<'a> Coordinator<'a> {
    pub fn new(case: &'a NetworkCase, params: DaslrParams) -> Self {
        let n = case.microgrids.len();
        let lambda = params.initial_multipliers(case);
        Self {
            case,
            params,
            lambda,
            stepsize: None,
            last_norm: None,
            latest: vec![None; n],
            rejected_last: vec![false; n],
            r: 0,
            since_search: 0,
            best_feasible: None,
            dual_bound: None,
            started: false,
        }
    }

    pub fn case(&self) -> &NetworkCase {
        self.case
    }

    pub fn search_every(&self) -> usize {
        self.params.search_every.unwrap_or(self.case.microgrids.len()).max(1)
    }

    /// Whether all microgrids have reported once and updates have begun.
    pub fn started(&self) -> bool {
        self.started
    }

    /// Surrogate Lagrangian contribution of a report at the current
    /// multipliers.
    pub fn surrogate(&self, rep: &SubproblemReport) -> f64 {
        rep.local_cost + price_exchanges(&self.lambda, &rep.exchanges)
    }

    pub fn on_arrival(&mut self, rep: SubproblemReport) -> Result<Arrival, CoordError> {
        let mg = rep.mg;
        if mg >= self.latest.len() {
            return Err(CoordError::StaleActor(mg));
        }
        if !self.started {
            self.latest[mg] = Some(rep);
            if self.latest.iter().any(Option::is_none) {
                return Ok(Arrival::Init);
            }
            self.started = true;
            return Ok(self.update());
        }
        let accept = rep.stamp == self.r
            || self.rejected_last[mg]
            || match &self.latest[mg] {
                Some(prev) => self.surrogate(&rep) < self.surrogate(prev),
                None => true,
            };
        if !accept {
            self.rejected_last[mg] = true;
            return Ok(Arrival::Rejected);
        }
        self.rejected_last[mg] = false;
        self.latest[mg] = Some(rep);
        Ok(self.update())
    }

    fn update(&mut self) -> Arrival {
        let r = self.r;
        let g = violation(self.case, &self.latest);
        let gn = norm(&g);
        let mut gamma_used = None;
        if gn > 0.0 {
            let e = match (self.stepsize, self.last_norm) {
                (Some(e), Some(prev)) => {
                    let gm = gamma(&self.params, r);
                    gamma_used = Some(gm);
                    next_stepsize(gm, e, prev, gn)
                }
                _ => self.params.init_c * self.case.cost_scale() / gn,
            };
            apply_step(&mut self.lambda, &g, e);
            self.stepsize = Some(e);
            self.last_norm = Some(gn);
        }
        self.r += 1;
        self.since_search += 1;
        Arrival::Update { r, stepsize: self.stepsize, violation_norm: gn, gamma: gamma_used }
    }

    pub fn search_due(&self) -> bool {
        self.started && self.since_search >= self.search_every()
    }

    /// Evaluate the dual bound at the current multipliers and try to
    /// restore a feasible schedule from the latest reports.
    pub fn search(&mut self, solver: &dyn MilpSolver) -> Result<Search, CoordError> {
        self.since_search = 0;
        let dual = dual_value(self.case, &self.lambda, solver)?;
        self.dual_bound = Some(self.dual_bound.map_or(dual, |d| d.max(dual)));
        let latest: Vec<Proposal<'_>> =
            self.latest.iter().map(|r| r.as_ref().map(Proposal::from).unwrap_or_default()).collect();
        let restored = restore_feasibility(self.case, &latest, solver)?;
        let cost = restored.as_ref().map(|r| r.cost);
        if let Some(res) = restored {
            if self.best_feasible.as_ref().is_none_or(|b| res.cost < b.cost) {
                self.best_feasible = Some(res);
            }
        }
        Ok(Search { restored: cost, dual })
    }

    pub fn feasible_cost(&self) -> Option<f64> {
        self.best_feasible.as_ref().map(|b| b.cost)
    }

    /// `(feasible − dual) / feasible`.
    pub fn gap(&self) -> Result<f64, CoordError> {
        let f = self.feasible_cost().ok_or(CoordError::NoFeasibleYet)?;
        let d = self.dual_bound.ok_or(CoordError::NoFeasibleYet)?;
        Ok(relative_gap(f, d))
    }

    pub fn converged(&self) -> bool {
        self.gap().is_ok_and(|g| g <= self.params.gap_tol)
    }

    pub fn budget_spent(&self) -> bool {
        self.r >= self.params.max_iters
    }
}

pub fn relative_gap(feasible: f64, dual: f64) -> f64 {
    (feasible - dual) / feasible.abs().max(1e-9)
}
