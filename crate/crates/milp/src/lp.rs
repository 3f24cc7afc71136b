//! Bounded-variable tableau simplex.
//!
//! Rows are brought to equality form `A x + s = b` with one slack per row;
//! the slack bounds encode the row sense. Variable bounds are handled
//! implicitly (nonbasic variables rest at a bound) so no bound rows are
//! materialized. Rows whose initial residual cannot be absorbed by their
//! slack receive an artificial column and phase 1 minimizes the artificial
//! sum. Warm starts after bound changes run the dual simplex from the
//! previous optimal basis.

use std::rc::Rc;

use crate::model::{MilpModel, Sense};

const NONBASIC: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, Copy)]
pub struct LpSettings {
    /// Primal feasibility tolerance on basic variable bounds.
    pub feas_tol: f64,
    /// Reduced-cost tolerance, scaled by the largest objective coefficient.
    pub opt_tol: f64,
    pub pivot_tol: f64,
    pub max_iters: usize,
    /// Consecutive degenerate pivots before Bland's rule takes over.
    pub bland_after: usize,
    /// Pivots after which the tableau is rebuilt from the original matrix.
    pub refactor_every: usize,
}

impl Default for LpSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iters: 200_000,
            bland_after: 50,
            refactor_every: 400,
        }
    }
}

/// Immutable column data shared by every tableau built for one model.
#[derive(Debug)]
pub(crate) struct LpData {
    pub m: usize,
    pub n_struct: usize,
    pub ncols: usize,
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    art_start: usize,
    slack_bounds: Vec<(f64, f64)>,
    dual_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Tableau {
    data: Rc<LpData>,
    t: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub x: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    d: Vec<f64>,
    pivots_since_refactor: usize,
    phase_one: bool,
}

/// Compact basis description used to rebuild a tableau without storing it.
#[derive(Debug, Clone)]
pub(crate) struct BasisInfo {
    basis: Vec<usize>,
    nonbasic_at_upper: Vec<bool>,
}

impl Tableau {
    pub fn struct_values(&self) -> &[f64] {
        &self.x[..self.data.n_struct]
    }

    pub fn objective(&self) -> f64 {
        let n = self.data.n_struct;
        self.data.cost[..n].iter().zip(&self.x[..n]).map(|(c, x)| c * x).sum()
    }

    pub fn basis_info(&self) -> BasisInfo {
        let nonbasic_at_upper = (0..self.data.ncols)
            .map(|j| {
                self.pos[j] == NONBASIC
                    && self.upper[j].is_finite()
                    && (self.x[j] - self.upper[j]).abs() <= (self.x[j] - self.lower[j]).abs()
            })
            .collect();
        BasisInfo { basis: self.basis.clone(), nonbasic_at_upper }
    }

    pub fn bytes(&self) -> usize {
        self.t.len() * 8
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.data.ncols + j]
    }

    fn is_basic(&self, j: usize) -> bool {
        self.pos[j] != NONBASIC
    }
}

impl LpData {
    /// Build column data from a model. Artificial columns are created for
    /// the rows listed in `art_rows` with the given signs.
    fn build(model: &MilpModel, art: &[(usize, f64)]) -> LpData {
        let n = model.num_vars();
        let m = model.num_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m + art.len()];
        for (i, row) in model.rows.iter().enumerate() {
            for &(v, a) in &row.coefs {
                if a != 0.0 {
                    if let Some(e) = cols[v.0].iter_mut().find(|e| e.0 == i) {
                        e.1 += a;
                    } else {
                        cols[v.0].push((i, a));
                    }
                }
            }
            cols[n + i].push((i, 1.0));
        }
        for (k, &(row, sign)) in art.iter().enumerate() {
            cols[n + m + k].push((row, sign));
        }
        let mut cost = vec![0.0; n + m + art.len()];
        for (j, v) in model.vars.iter().enumerate() {
            cost[j] = v.objective;
        }
        let slack_bounds = model
            .rows
            .iter()
            .map(|r| match r.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            })
            .collect();
        let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        LpData {
            m,
            n_struct: n,
            ncols: n + m + art.len(),
            cols,
            b: model.rows.iter().map(|r| r.rhs).collect(),
            cost,
            art_start: n + m,
            slack_bounds,
            dual_tol: cmax,
        }
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

/// Simplex engine bound to one model's column data.
pub(crate) struct LpEngine {
    pub settings: LpSettings,
}

pub(crate) struct SolveOutcome {
    pub status: LpStatus,
    pub iters: usize,
}

impl LpEngine {
    pub fn new(settings: LpSettings) -> Self {
        Self { settings }
    }

    /// Phase 1 + phase 2 from the slack/artificial basis.
    pub fn solve_cold(&self, model: &MilpModel, bounds: &[(f64, f64)]) -> (SolveOutcome, Tableau) {
        let mut tab = self.initial_tableau(model, bounds);
        let mut iters = 0usize;
        let status = self.run_cold(&mut tab, &mut iters);
        (SolveOutcome { status, iters }, tab)
    }

    fn initial_tableau(&self, model: &MilpModel, bounds: &[(f64, f64)]) -> Tableau {
        let n = model.num_vars();
        let m = model.num_rows();
        let x_struct: Vec<f64> = bounds.iter().map(|&(l, u)| initial_value(l, u)).collect();
        let mut art = Vec::new();
        let mut slack_val = vec![0.0; m];
        let mut slack_basic = vec![false; m];
        for (i, row) in model.rows.iter().enumerate() {
            let act: f64 = row.coefs.iter().map(|&(v, a)| a * x_struct[v.0]).sum();
            let res = row.rhs - act;
            let ok = match row.sense {
                Sense::Le => res >= -self.settings.feas_tol,
                Sense::Ge => res <= self.settings.feas_tol,
                Sense::Eq => res.abs() <= self.settings.feas_tol,
            };
            if ok {
                slack_basic[i] = true;
                slack_val[i] = match row.sense {
                    Sense::Le => res.max(0.0),
                    Sense::Ge => res.min(0.0),
                    Sense::Eq => 0.0,
                };
            } else {
                art.push((i, if res > 0.0 { 1.0 } else { -1.0 }));
                slack_val[i] = 0.0;
            }
        }
        let data = Rc::new(LpData::build(model, &art));
        let ncols = data.ncols;
        let mut lower = vec![0.0; ncols];
        let mut upper = vec![0.0; ncols];
        for j in 0..n {
            lower[j] = bounds[j].0;
            upper[j] = bounds[j].1;
        }
        for i in 0..m {
            let (l, u) = data.slack_bounds[i];
            lower[n + i] = l;
            upper[n + i] = u;
        }
        for k in 0..art.len() {
            lower[data.art_start + k] = 0.0;
            upper[data.art_start + k] = f64::INFINITY;
        }
        let mut t = vec![0.0; m * ncols];
        for (j, col) in data.cols.iter().enumerate() {
            for &(i, a) in col {
                t[i * ncols + j] = a;
            }
        }
        let mut basis = vec![NONBASIC; m];
        let mut pos = vec![NONBASIC; ncols];
        let mut x = vec![0.0; ncols];
        x[..n].copy_from_slice(&x_struct);
        for i in 0..m {
            x[n + i] = slack_val[i];
            if slack_basic[i] {
                basis[i] = n + i;
                pos[n + i] = i;
            }
        }
        for (k, &(i, sign)) in art.iter().enumerate() {
            let j = data.art_start + k;
            if sign < 0.0 {
                for v in &mut t[i * ncols..(i + 1) * ncols] {
                    *v = -*v;
                }
            }
            basis[i] = j;
            pos[j] = i;
            let act: f64 = model.rows[i].coefs.iter().map(|&(v, a)| a * x_struct[v.0]).sum();
            x[j] = (model.rows[i].rhs - act - x[n + i]).abs();
        }
        let mut tab = Tableau {
            data,
            t,
            lower,
            upper,
            x,
            basis,
            pos,
            d: vec![0.0; ncols],
            pivots_since_refactor: 0,
            phase_one: true,
        };
        self.compute_reduced_costs(&mut tab);
        tab
    }

    fn phase_cost(tab: &Tableau, j: usize) -> f64 {
        if tab.phase_one {
            if j >= tab.data.art_start {
                1.0
            } else {
                0.0
            }
        } else {
            tab.data.cost[j]
        }
    }

    fn compute_reduced_costs(&self, tab: &mut Tableau) {
        let ncols = tab.data.ncols;
        let mut d: Vec<f64> = (0..ncols).map(|j| Self::phase_cost(tab, j)).collect();
        for i in 0..tab.data.m {
            let cb = Self::phase_cost(tab, tab.basis[i]);
            if cb != 0.0 {
                let row = &tab.t[i * ncols..(i + 1) * ncols];
                for (dj, &a) in d.iter_mut().zip(row) {
                    if a != 0.0 {
                        *dj -= cb * a;
                    }
                }
            }
        }
        for i in 0..tab.data.m {
            d[tab.basis[i]] = 0.0;
        }
        tab.d = d;
    }

    fn run_cold(&self, tab: &mut Tableau, iters: &mut usize) -> LpStatus {
        if tab.data.art_start < tab.data.ncols {
            tab.phase_one = true;
            self.compute_reduced_costs(tab);
            match self.primal(tab, iters) {
                LpStatus::Optimal => {}
                LpStatus::IterLimit => return LpStatus::IterLimit,
                // phase 1 objective is bounded below by zero
                LpStatus::Unbounded | LpStatus::Infeasible => return LpStatus::Infeasible,
            }
            let infeas: f64 = (tab.data.art_start..tab.data.ncols).map(|j| tab.x[j]).sum();
            let scale = 1.0 + tab.data.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > 1e-7 * scale {
                return LpStatus::Infeasible;
            }
            self.drive_out_artificials(tab);
        }
        tab.phase_one = false;
        self.compute_reduced_costs(tab);
        self.primal(tab, iters)
    }

    fn drive_out_artificials(&self, tab: &mut Tableau) {
        let start = tab.data.art_start;
        let ncols = tab.data.ncols;
        for r in 0..tab.data.m {
            let b = tab.basis[r];
            if b < start {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-7;
            for j in 0..start {
                if tab.is_basic(j) {
                    continue;
                }
                let a = tab.at(r, j).abs();
                if a > best_abs {
                    best_abs = a;
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                self.pivot(tab, r, j);
            }
        }
        for j in start..ncols {
            tab.lower[j] = 0.0;
            tab.upper[j] = 0.0;
            if !tab.is_basic(j) {
                tab.x[j] = 0.0;
            }
        }
    }

    fn pivot(&self, tab: &mut Tableau, r: usize, q: usize) {
        let ncols = tab.data.ncols;
        let m = tab.data.m;
        let piv = tab.t[r * ncols + q];
        let inv = 1.0 / piv;
        let mut nz: Vec<usize> = Vec::with_capacity(64);
        {
            let row = &mut tab.t[r * ncols..(r + 1) * ncols];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < 1e-13 {
                        *v = 0.0;
                    } else {
                        nz.push(k);
                    }
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = tab.t.split_at_mut(r * ncols);
        let (prow, after) = rest.split_at_mut(ncols);
        for i in 0..m {
            if i == r {
                continue;
            }
            let row: &mut [f64] = if i < r {
                &mut before[i * ncols..(i + 1) * ncols]
            } else {
                let off = (i - r - 1) * ncols;
                &mut after[off..off + ncols]
            };
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for &k in &nz {
                let v = row[k] - f * prow[k];
                row[k] = if v.abs() < 1e-13 { 0.0 } else { v };
            }
            row[q] = 0.0;
        }
        let dq = tab.d[q];
        if dq != 0.0 {
            for &k in &nz {
                tab.d[k] -= dq * prow[k];
            }
            tab.d[q] = 0.0;
        }
        let leaving = tab.basis[r];
        tab.pos[leaving] = NONBASIC;
        tab.basis[r] = q;
        tab.pos[q] = r;
        tab.pivots_since_refactor += 1;
    }

    fn dual_tol(&self, tab: &Tableau) -> f64 {
        self.settings.opt_tol * if tab.phase_one { 1.0 } else { tab.data.dual_tol }
    }

    /// Primal simplex on the current phase objective; requires primal
    /// feasibility of the basic variables.
    fn primal(&self, tab: &mut Tableau, iters: &mut usize) -> LpStatus {
        let ncols = tab.data.ncols;
        let m = tab.data.m;
        let ftol = self.settings.feas_tol;
        let mut degenerate_streak = 0usize;
        let mut bland = false;
        loop {
            if *iters >= self.settings.max_iters {
                return LpStatus::IterLimit;
            }
            if tab.pivots_since_refactor >= self.settings.refactor_every && !self.reinvert(tab) {
                return LpStatus::IterLimit;
            }
            let dtol = self.dual_tol(tab);
            // pricing
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..ncols {
                if tab.is_basic(j) {
                    continue;
                }
                let dj = tab.d[j];
                let dir = if dj < -dtol && tab.x[j] < tab.upper[j] - ftol {
                    1.0
                } else if dj > dtol && tab.x[j] > tab.lower[j] + ftol {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return LpStatus::Optimal;
            };
            *iters += 1;

            // Harris two-pass ratio test
            let flip = tab.upper[q] - tab.lower[q];
            let mut tmax = f64::INFINITY;
            for i in 0..m {
                let alpha = dir * tab.at(i, q);
                if alpha.abs() <= self.settings.pivot_tol {
                    continue;
                }
                let b = tab.basis[i];
                let lim = if alpha > 0.0 {
                    if !tab.lower[b].is_finite() {
                        continue;
                    }
                    ((tab.x[b] - tab.lower[b]).max(0.0) + ftol) / alpha
                } else {
                    if !tab.upper[b].is_finite() {
                        continue;
                    }
                    ((tab.upper[b] - tab.x[b]).max(0.0) + ftol) / -alpha
                };
                if lim < tmax {
                    tmax = lim;
                }
            }
            let mut leave = None;
            let mut step = f64::INFINITY;
            if tmax.is_finite() {
                let mut best_alpha = 0.0;
                let mut best_ratio = f64::INFINITY;
                for i in 0..m {
                    let alpha = dir * tab.at(i, q);
                    if alpha.abs() <= self.settings.pivot_tol {
                        continue;
                    }
                    let b = tab.basis[i];
                    let dist = if alpha > 0.0 {
                        if !tab.lower[b].is_finite() {
                            continue;
                        }
                        (tab.x[b] - tab.lower[b]).max(0.0)
                    } else {
                        if !tab.upper[b].is_finite() {
                            continue;
                        }
                        (tab.upper[b] - tab.x[b]).max(0.0)
                    };
                    let ratio = dist / alpha.abs();
                    if ratio > tmax {
                        continue;
                    }
                    let better = if bland {
                        ratio < best_ratio - 1e-15
                            || (ratio <= best_ratio + 1e-15
                                && leave.is_none_or(|(_, lb): (usize, usize)| b < lb))
                    } else {
                        alpha.abs() > best_alpha
                    };
                    if better {
                        best_alpha = alpha.abs();
                        best_ratio = ratio;
                        leave = Some((i, b));
                        step = ratio;
                    }
                }
            }
            if flip.is_finite() && flip <= step {
                // bound flip, no basis change
                let delta = dir * flip;
                for i in 0..m {
                    let a = tab.at(i, q);
                    if a != 0.0 {
                        let b = tab.basis[i];
                        tab.x[b] -= a * delta;
                    }
                }
                tab.x[q] = if dir > 0.0 { tab.upper[q] } else { tab.lower[q] };
                degenerate_streak = 0;
                bland = false;
                continue;
            }
            let Some((r, lb)) = leave else {
                return LpStatus::Unbounded;
            };
            let delta = dir * step;
            if delta != 0.0 {
                for i in 0..m {
                    let a = tab.at(i, q);
                    if a != 0.0 {
                        let b = tab.basis[i];
                        tab.x[b] -= a * delta;
                    }
                }
                tab.x[q] += delta;
            }
            let alpha = dir * tab.at(r, q);
            tab.x[lb] = if alpha > 0.0 { tab.lower[lb] } else { tab.upper[lb] };
            self.pivot(tab, r, q);
            if step <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak >= self.settings.bland_after {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
                bland = false;
            }
        }
    }

    fn is_dual_feasible(&self, tab: &Tableau) -> bool {
        let dtol = self.dual_tol(tab) * 10.0;
        (0..tab.data.ncols).all(|j| {
            if tab.is_basic(j) || tab.upper[j] - tab.lower[j] <= 0.0 {
                return true;
            }
            let dj = tab.d[j];
            let at_lower = (tab.x[j] - tab.lower[j]).abs() <= self.settings.feas_tol;
            let at_upper = (tab.x[j] - tab.upper[j]).abs() <= self.settings.feas_tol;
            if at_lower {
                dj >= -dtol
            } else if at_upper {
                dj <= dtol
            } else {
                dj.abs() <= dtol
            }
        })
    }

    /// Dual simplex; requires dual feasibility.
    fn dual(&self, tab: &mut Tableau, iters: &mut usize) -> LpStatus {
        let ncols = tab.data.ncols;
        let m = tab.data.m;
        let ftol = self.settings.feas_tol;
        let mut degenerate_streak = 0usize;
        let mut bland = false;
        loop {
            if *iters >= self.settings.max_iters {
                return LpStatus::IterLimit;
            }
            if tab.pivots_since_refactor >= self.settings.refactor_every && !self.reinvert(tab) {
                return LpStatus::IterLimit;
            }
            // leaving row: largest bound violation, or the lowest-index
            // infeasible basic variable while breaking a degenerate cycle
            let mut leave = None;
            let mut worst = ftol;
            let mut lowest = usize::MAX;
            for i in 0..m {
                let b = tab.basis[i];
                let v = (tab.lower[b] - tab.x[b]).max(tab.x[b] - tab.upper[b]);
                if v <= ftol {
                    continue;
                }
                if bland {
                    if b < lowest {
                        lowest = b;
                        leave = Some(i);
                    }
                } else if v > worst {
                    worst = v;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                return LpStatus::Optimal;
            };
            *iters += 1;
            let b = tab.basis[r];
            let below = tab.x[b] < tab.lower[b];
            let target = if below { tab.lower[b] } else { tab.upper[b] };
            // entering column: x_b changes by -alpha_rj * dx_j
            let mut enter = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_alpha = 0.0;
            let dtol = self.dual_tol(tab);
            for j in 0..ncols {
                if tab.is_basic(j) || tab.upper[j] - tab.lower[j] <= 0.0 {
                    continue;
                }
                let a = tab.at(r, j);
                if a.abs() <= self.settings.pivot_tol {
                    continue;
                }
                let can_up = tab.x[j] < tab.upper[j] - ftol;
                let can_down = tab.x[j] > tab.lower[j] + ftol;
                // below: need -a*dx > 0; above: need -a*dx < 0
                let ok = if below {
                    (a < 0.0 && can_up) || (a > 0.0 && can_down)
                } else {
                    (a > 0.0 && can_up) || (a < 0.0 && can_down)
                };
                if !ok {
                    continue;
                }
                let ratio = tab.d[j].abs() / a.abs();
                let better = if bland {
                    ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && enter.is_none())
                } else {
                    ratio < best_ratio - dtol / a.abs()
                        || (ratio <= best_ratio + dtol / a.abs() && a.abs() > best_alpha)
                };
                if better {
                    best_ratio = ratio.min(best_ratio);
                    best_alpha = a.abs();
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return LpStatus::Infeasible;
            };
            let a = tab.at(r, q);
            let dx = (tab.x[b] - target) / a;
            for i in 0..m {
                let ai = tab.at(i, q);
                if ai != 0.0 {
                    let bi = tab.basis[i];
                    tab.x[bi] -= ai * dx;
                }
            }
            tab.x[q] += dx;
            tab.x[b] = target;
            self.pivot(tab, r, q);
            if best_ratio <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak >= self.settings.bland_after {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
                bland = false;
            }
        }
    }

    /// Rebuild `B^{-1}[A | I | Art]` from the original columns for the
    /// current basis and recompute basic values and reduced costs.
    pub fn reinvert(&self, tab: &mut Tableau) -> bool {
        let info = tab.basis_info();
        let nonbasic_values: Vec<f64> = tab.x.clone();
        match self.from_basis(&tab.data, &info, &tab.lower, &tab.upper, Some(&nonbasic_values), tab.phase_one) {
            Some(fresh) => {
                *tab = fresh;
                true
            }
            None => false,
        }
    }

    pub fn rebuild(&self, from: &Tableau, info: &BasisInfo, lower: &[f64], upper: &[f64]) -> Option<Tableau> {
        self.from_basis(&from.data, info, lower, upper, None, false)
    }

    fn from_basis(
        &self,
        data: &Rc<LpData>,
        info: &BasisInfo,
        lower: &[f64],
        upper: &[f64],
        values: Option<&[f64]>,
        phase_one: bool,
    ) -> Option<Tableau> {
        let m = data.m;
        let ncols = data.ncols;
        let mut t = vec![0.0; m * ncols];
        for (j, col) in data.cols.iter().enumerate() {
            for &(i, a) in col {
                t[i * ncols + j] = a;
            }
        }
        let mut rhs = data.b.clone();
        let mut assigned = vec![false; m];
        let mut basis = vec![NONBASIC; m];
        let mut pos = vec![NONBASIC; ncols];
        let mut nz: Vec<usize> = Vec::with_capacity(64);
        for &k in &info.basis {
            let mut r = NONBASIC;
            let mut best = 1e-11;
            for i in 0..m {
                if !assigned[i] {
                    let a = t[i * ncols + k].abs();
                    if a > best {
                        best = a;
                        r = i;
                    }
                }
            }
            if r == NONBASIC {
                return None;
            }
            assigned[r] = true;
            basis[r] = k;
            pos[k] = r;
            let inv = 1.0 / t[r * ncols + k];
            nz.clear();
            for j in 0..ncols {
                let v = &mut t[r * ncols + j];
                if *v != 0.0 {
                    *v *= inv;
                    nz.push(j);
                }
            }
            t[r * ncols + k] = 1.0;
            rhs[r] *= inv;
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = t[i * ncols + k];
                if f == 0.0 {
                    continue;
                }
                for &j in &nz {
                    let v = t[i * ncols + j] - f * t[r * ncols + j];
                    t[i * ncols + j] = if v.abs() < 1e-13 { 0.0 } else { v };
                }
                t[i * ncols + k] = 0.0;
                rhs[i] -= f * rhs[r];
            }
        }
        let mut x = vec![0.0; ncols];
        for j in 0..ncols {
            if pos[j] != NONBASIC {
                continue;
            }
            let (l, u) = (lower[j], upper[j]);
            x[j] = match values {
                Some(v) => v[j].clamp(l, u),
                None if info.nonbasic_at_upper[j] && u.is_finite() => u,
                None => initial_value(l, u),
            };
        }
        for i in 0..m {
            let mut v = rhs[i];
            let row = &t[i * ncols..(i + 1) * ncols];
            for j in 0..ncols {
                if pos[j] == NONBASIC && x[j] != 0.0 && row[j] != 0.0 {
                    v -= row[j] * x[j];
                }
            }
            x[basis[i]] = v;
        }
        let mut tab = Tableau {
            data: Rc::clone(data),
            t,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            x,
            basis,
            pos,
            d: vec![0.0; ncols],
            pivots_since_refactor: 0,
            phase_one,
        };
        self.compute_reduced_costs(&mut tab);
        Some(tab)
    }

    /// Re-optimize after the structural bounds listed in `changes` moved.
    pub fn solve_warm(&self, tab: &mut Tableau, changes: &[(usize, f64, f64)]) -> SolveOutcome {
        let m = tab.data.m;
        for &(j, lo, hi) in changes {
            tab.lower[j] = lo;
            tab.upper[j] = hi;
            if !tab.is_basic(j) {
                let target = if tab.x[j] < lo {
                    lo
                } else if tab.x[j] > hi {
                    hi
                } else {
                    continue;
                };
                let delta = target - tab.x[j];
                for i in 0..m {
                    let a = tab.at(i, j);
                    if a != 0.0 {
                        let b = tab.basis[i];
                        tab.x[b] -= a * delta;
                    }
                }
                tab.x[j] = target;
            }
        }
        self.finish_warm(tab)
    }

    pub fn finish_warm(&self, tab: &mut Tableau) -> SolveOutcome {
        let mut iters = 0usize;
        tab.phase_one = false;
        if tab.pivots_since_refactor >= self.settings.refactor_every && !self.reinvert(tab) {
            return SolveOutcome { status: LpStatus::IterLimit, iters };
        }
        if !self.is_dual_feasible(tab) {
            self.compute_reduced_costs(tab);
        }
        let status = if self.is_dual_feasible(tab) {
            match self.dual(tab, &mut iters) {
                LpStatus::Optimal => self.primal(tab, &mut iters),
                other => other,
            }
        } else if self.is_primal_feasible(tab) {
            self.primal(tab, &mut iters)
        } else {
            LpStatus::IterLimit
        };
        SolveOutcome { status, iters }
    }

    fn is_primal_feasible(&self, tab: &Tableau) -> bool {
        let tol = self.settings.feas_tol;
        tab.basis
            .iter()
            .all(|&b| tab.x[b] >= tab.lower[b] - tol && tab.x[b] <= tab.upper[b] + tol)
    }
}
