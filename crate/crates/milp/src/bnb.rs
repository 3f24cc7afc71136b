//! Best-bound branch-and-bound over the simplex engine.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use crate::lp::{BasisInfo, LpEngine, LpSettings, LpStatus, Tableau};
use crate::model::{MilpModel, Sense};
use crate::{MilpSolution, SolveOptions, SolveStatus};

enum Warm {
    Tableau(Rc<Tableau>),
    Basis(Rc<BasisInfo>),
}

struct Node {
    id: u64,
    depth: usize,
    bound: f64,
    /// Bound changes applied on top of the parent's bounds.
    branch: Vec<(usize, f64, f64)>,
    /// All bound changes relative to the root, in application order.
    changes: Rc<Vec<(usize, f64, f64)>>,
    warm: Warm,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the maximum: smallest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

/// Open nodes: a depth-first stack used until the first incumbent is
/// found, then a best-bound heap.
struct Open {
    heap: BinaryHeap<Node>,
    dive: Vec<Node>,
}

impl Open {
    fn pop(&mut self) -> Option<Node> {
        self.dive.pop().or_else(|| self.heap.pop())
    }

    fn flush(&mut self) {
        self.heap.extend(self.dive.drain(..));
    }

    fn min_bound(&self) -> f64 {
        self.heap.iter().chain(&self.dive).map(|n| n.bound).fold(f64::INFINITY, f64::min)
    }
}

/// Which member of a set-partitioning group a dive sets to one: the one
/// with the largest LP value, or the first or last with a positive value.
#[derive(Debug, Clone, Copy)]
enum Lead {
    Largest,
    First,
    Last,
}

struct Search<'a> {
    model: &'a MilpModel,
    opts: &'a SolveOptions,
    engine: LpEngine,
    root_bounds: Vec<(f64, f64)>,
    incumbent: Option<(f64, Vec<f64>)>,
    /// Set-partitioning rows over binaries (`Σ w = 1`), and the group of
    /// each variable.
    groups: Vec<Vec<usize>>,
    group_of: Vec<Option<usize>>,
    pruned_min: f64,
    incomplete: bool,
    iters: usize,
    nodes: usize,
}

fn lp_settings(opts: &SolveOptions) -> LpSettings {
    LpSettings { max_iters: opts.iter_limit, ..LpSettings::default() }
}

/// Solve one (possibly decomposed) block.
pub(crate) fn solve(
    model: &MilpModel,
    opts: &SolveOptions,
    start: Option<&[f64]>,
    deadline: Option<Instant>,
) -> MilpSolution {
    let n = model.num_vars();
    let root_bounds: Vec<(f64, f64)> = model
        .vars
        .iter()
        .map(|v| {
            if v.kind.is_integral() {
                (v.lower.ceil(), v.upper.floor())
            } else {
                (v.lower, v.upper)
            }
        })
        .collect();
    let offset = model.objective_offset;
    if root_bounds.iter().any(|&(l, u)| l > u) {
        return infeasible(n, 0, 0);
    }
    let mut s = Search {
        model,
        opts,
        engine: LpEngine::new(lp_settings(opts)),
        root_bounds,
        incumbent: None,
        groups: Vec::new(),
        group_of: vec![None; n],
        pruned_min: f64::INFINITY,
        incomplete: false,
        iters: 0,
        nodes: 1,
    };
    s.find_groups();
    if let Some(x) = start.filter(|x| x.len() == n) {
        let integral = model.vars.iter().zip(x).all(|(v, &xj)| !v.kind.is_integral() || xj == xj.round());
        if integral && model.max_violation(x) <= opts.feas_tol {
            s.incumbent = Some((model.objective_value(x) - offset, x.to_vec()));
        }
    }
    let (out, root) = s.engine.solve_cold(model, &s.root_bounds);
    s.iters += out.iters;
    match out.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return infeasible(n, 1, s.iters),
        LpStatus::Unbounded => {
            return MilpSolution {
                status: SolveStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                best_bound: f64::NEG_INFINITY,
                values: root.struct_values().to_vec(),
                node_count: 1,
                simplex_iters: s.iters,
            }
        }
        LpStatus::IterLimit => {
            return MilpSolution {
                status: SolveStatus::IterLimit,
                objective: f64::INFINITY,
                best_bound: f64::NEG_INFINITY,
                values: Vec::new(),
                node_count: 1,
                simplex_iters: s.iters,
            }
        }
    }
    let root_obj = root.objective();
    let root = Rc::new(root);
    let mut heap = Open { heap: BinaryHeap::new(), dive: Vec::new() };
    let mut next_id = 0u64;
    let mut held_bytes = 0usize;
    let empty = Rc::new(Vec::new());
    s.round_and_fix(&root);
    for lead in [Lead::Largest, Lead::First, Lead::Last] {
        s.dive(&root, lead);
    }
    s.process(&root, root_obj, 0, &empty, &mut heap, &mut next_id, &mut held_bytes);

    let mut stopped = false;
    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &s.incumbent {
            if node.bound >= *inc - s.allowance(*inc) {
                if node.bound < *inc {
                    s.pruned_min = s.pruned_min.min(node.bound);
                }
                continue;
            }
        }
        if s.nodes >= opts.node_limit || deadline.is_some_and(|d| Instant::now() >= d) {
            heap.heap.push(node);
            stopped = true;
            break;
        }
        s.nodes += 1;
        if let Warm::Tableau(t) = &node.warm {
            if Rc::strong_count(t) == 1 {
                held_bytes = held_bytes.saturating_sub(t.bytes());
            }
        }
        let Some((tab, obj)) = s.solve_node(&node, &root) else {
            continue;
        };
        let period = if s.incumbent.is_none() { 10 } else { 200 };
        if s.nodes.is_multiple_of(period) {
            s.round_and_fix(&tab);
        }
        if s.nodes.is_multiple_of(100) {
            let lead = [Lead::Largest, Lead::First, Lead::Last][(s.nodes / 100) % 3];
            s.dive(&tab, lead);
        }
        let tab = Rc::new(tab);
        s.process(&tab, obj, node.depth + 1, &node.changes, &mut heap, &mut next_id, &mut held_bytes);
        if s.incumbent.is_some() && !heap.dive.is_empty() {
            heap.flush();
        }
    }

    let open_min = heap.min_bound();
    let values_len = n;
    match s.incumbent {
        Some((obj, values)) => {
            let bound = obj.min(s.pruned_min).min(open_min);
            let status = if stopped || s.incomplete {
                SolveStatus::IterLimit
            } else {
                SolveStatus::Optimal
            };
            MilpSolution {
                status,
                objective: obj + offset,
                best_bound: bound.max(root_obj) + offset,
                values,
                node_count: s.nodes,
                simplex_iters: s.iters,
            }
        }
        None if stopped || s.incomplete => MilpSolution {
            status: SolveStatus::IterLimit,
            objective: f64::INFINITY,
            best_bound: root_obj.max(open_min.min(s.pruned_min)) + offset,
            values: Vec::new(),
            node_count: s.nodes,
            simplex_iters: s.iters,
        },
        None => infeasible(values_len, s.nodes, s.iters),
    }
}

fn infeasible(_n: usize, nodes: usize, iters: usize) -> MilpSolution {
    MilpSolution {
        status: SolveStatus::Infeasible,
        objective: f64::INFINITY,
        best_bound: f64::INFINITY,
        values: Vec::new(),
        node_count: nodes,
        simplex_iters: iters,
    }
}

impl Search<'_> {
    fn allowance(&self, inc: f64) -> f64 {
        self.opts.gap_abs.max(self.opts.gap_tol * inc.abs())
    }

    fn node_bounds(&self, changes: &[(usize, f64, f64)]) -> Vec<(f64, f64)> {
        let mut b = self.root_bounds.clone();
        for &(j, l, u) in changes {
            b[j] = (l, u);
        }
        b
    }

    fn solve_node(&mut self, node: &Node, root: &Rc<Tableau>) -> Option<(Tableau, f64)> {
        let warm = match &node.warm {
            Warm::Tableau(parent) => {
                let mut tab = (**parent).clone();
                let out = self.engine.solve_warm(&mut tab, &node.branch);
                self.iters += out.iters;
                Some((out.status, tab))
            }
            Warm::Basis(info) => {
                let bounds = self.node_bounds(&node.changes);
                let mut lower = root.lower.clone();
                let mut upper = root.upper.clone();
                for (j, &(l, u)) in bounds.iter().enumerate() {
                    lower[j] = l;
                    upper[j] = u;
                }
                self.engine.rebuild(root, info, &lower, &upper).map(|mut tab| {
                    let out = self.engine.finish_warm(&mut tab);
                    self.iters += out.iters;
                    (out.status, tab)
                })
            }
        };
        let (status, tab) = match warm {
            Some((LpStatus::Optimal, tab)) => (LpStatus::Optimal, tab),
            Some((LpStatus::Infeasible, tab)) => (LpStatus::Infeasible, tab),
            _ => {
                let bounds = self.node_bounds(&node.changes);
                let (out, tab) = self.engine.solve_cold(self.model, &bounds);
                self.iters += out.iters;
                (out.status, tab)
            }
        };
        match status {
            LpStatus::Optimal => {
                let obj = tab.objective().max(node.bound);
                Some((tab, obj))
            }
            LpStatus::Infeasible => None,
            LpStatus::Unbounded | LpStatus::IterLimit => {
                self.incomplete = true;
                None
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn process(
        &mut self,
        tab: &Rc<Tableau>,
        obj: f64,
        depth: usize,
        changes: &Rc<Vec<(usize, f64, f64)>>,
        heap: &mut Open,
        next_id: &mut u64,
        held_bytes: &mut usize,
    ) {
        if let Some((inc, _)) = &self.incumbent {
            if obj >= *inc - self.allowance(*inc) {
                if obj < *inc {
                    self.pruned_min = self.pruned_min.min(obj);
                }
                return;
            }
        }
        let x = tab.struct_values();
        let mut branch_var = None;
        let mut best_frac = self.opts.int_tol;
        for (j, v) in self.model.vars.iter().enumerate() {
            if !v.kind.is_integral() {
                continue;
            }
            let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if frac > best_frac {
                best_frac = frac;
                branch_var = Some(j);
            }
        }
        let Some(j) = branch_var else {
            self.try_incumbent(x.to_vec(), changes);
            return;
        };
        let (first, second) = self.branches(tab, j, x);
        let warm = if *held_bytes + tab.bytes() <= self.opts.warm_start_bytes {
            *held_bytes += tab.bytes();
            None
        } else {
            Some(Rc::new(tab.basis_info()))
        };
        // while diving the second branch is pushed last so it is explored first
        let diving = self.incumbent.is_none();
        for branch in [first, second] {
            if branch.iter().any(|b| b.1 > b.2) {
                continue;
            }
            let mut ch = (**changes).clone();
            ch.extend(branch.iter().copied());
            *next_id += 1;
            let node = Node {
                id: *next_id,
                depth,
                bound: obj,
                branch,
                changes: Rc::new(ch),
                warm: match &warm {
                    None => Warm::Tableau(Rc::clone(tab)),
                    Some(info) => Warm::Basis(Rc::clone(info)),
                },
            };
            if diving {
                heap.dive.push(node);
            } else {
                heap.heap.push(node);
            }
        }
    }

    /// Detect rows `Σ w = 1` over binary variables.
    fn find_groups(&mut self) {
        for row in &self.model.rows {
            if row.sense != Sense::Eq || row.rhs != 1.0 || row.coefs.len() < 3 {
                continue;
            }
            let members: Vec<usize> = row.coefs.iter().map(|(v, _)| v.0).collect();
            let ok = row.coefs.iter().all(|&(v, a)| {
                a == 1.0 && self.model.vars[v.0].kind.is_integral() && self.root_bounds[v.0] == (0.0, 1.0)
            }) && members.iter().all(|&j| self.group_of[j].is_none());
            if ok {
                for &j in &members {
                    self.group_of[j] = Some(self.groups.len());
                }
                self.groups.push(members);
            }
        }
    }

    /// Two children for branching on `j`. Members of a set-partitioning
    /// group are split into two halves of roughly equal LP mass, one half
    /// fixed to zero in each child; other variables get the usual floor/ceil
    /// split. The child more likely to hold the LP point comes second.
    fn branches(&self, tab: &Tableau, j: usize, x: &[f64]) -> (Vec<(usize, f64, f64)>, Vec<(usize, f64, f64)>) {
        if let Some(g) = self.group_of[j] {
            let free: Vec<usize> =
                self.groups[g].iter().copied().filter(|&i| tab.upper[i] > tab.lower[i]).collect();
            if free.len() >= 3 {
                let total: f64 = free.iter().map(|&i| x[i]).sum();
                let mut acc = 0.0;
                let mut cut = 0;
                let mut best = f64::INFINITY;
                for (k, &i) in free.iter().enumerate().take(free.len() - 1) {
                    acc += x[i];
                    let d = (acc - 0.5 * total).abs();
                    if d < best {
                        best = d;
                        cut = k;
                    }
                }
                let (left, right) = free.split_at(cut + 1);
                let zero = |set: &[usize]| set.iter().map(|&i| (i, tab.lower[i], 0.0)).collect::<Vec<_>>();
                let left_mass: f64 = left.iter().map(|&i| x[i]).sum();
                // keeping the left half means zeroing the right half
                return if left_mass >= total - left_mass {
                    (zero(left), zero(right))
                } else {
                    (zero(right), zero(left))
                };
            }
        }
        let down = vec![(j, tab.lower[j], x[j].floor())];
        let up = vec![(j, x[j].ceil(), tab.upper[j])];
        (down, up)
    }

    /// Primal heuristic: round the node's LP point (picking the largest
    /// member of every set-partitioning group), fix the integers and
    /// re-optimize the continuous part.
    fn round_and_fix(&mut self, tab: &Tableau) {
        let x = tab.struct_values();
        let mut fixed: Vec<f64> = x.to_vec();
        for group in &self.groups {
            let pick = group
                .iter()
                .copied()
                .filter(|&i| tab.upper[i] >= 1.0)
                .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)));
            for &i in group {
                fixed[i] = if Some(i) == pick { 1.0 } else { 0.0 };
            }
        }
        let mut fixings = Vec::new();
        for (j, v) in self.model.vars.iter().enumerate() {
            if v.kind.is_integral() {
                let r = if self.group_of[j].is_some() { fixed[j] } else { x[j].round() };
                let r = r.clamp(tab.lower[j], tab.upper[j]);
                fixings.push((j, r, r));
            }
        }
        let mut trial = tab.clone();
        let out = self.engine.solve_warm(&mut trial, &fixings);
        self.iters += out.iters;
        if out.status != LpStatus::Optimal {
            return;
        }
        let mut y = trial.struct_values().to_vec();
        for (j, v) in self.model.vars.iter().enumerate() {
            y[j] = if v.kind.is_integral() { y[j].round() } else { y[j].clamp(v.lower, v.upper) };
        }
        if self.model.max_violation(&y) > self.opts.feas_tol {
            return;
        }
        let obj = self.model.objective_value(&y) - self.model.objective_offset;
        if self.incumbent.as_ref().is_none_or(|(inc, _)| obj < *inc) {
            self.incumbent = Some((obj, y));
        }
    }

    /// Primal heuristic: repeatedly fix the fractional integer (or group)
    /// closest to integrality and re-solve, backing off once per step when
    /// the fixing is infeasible.
    fn dive(&mut self, start: &Tableau, lead: Lead) {
        let mut tab = start.clone();
        for _ in 0..self.model.num_vars() {
            let obj = tab.objective();
            if self.incumbent.as_ref().is_some_and(|(inc, _)| obj >= *inc - self.allowance(*inc)) {
                return;
            }
            let x = tab.struct_values().to_vec();
            let mut pick: Option<(f64, usize)> = None;
            for (j, v) in self.model.vars.iter().enumerate() {
                if !v.kind.is_integral() || tab.upper[j] <= tab.lower[j] {
                    continue;
                }
                let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
                if frac <= self.opts.int_tol {
                    continue;
                }
                if pick.is_none_or(|(f, _)| frac < f) {
                    pick = Some((frac, j));
                }
            }
            let Some((_, j)) = pick else {
                self.try_incumbent(x, &[]);
                return;
            };
            let (first, second) = match self.group_of[j] {
                Some(g) => {
                    let mut free = self.groups[g].iter().copied().filter(|&i| tab.upper[i] > tab.lower[i]);
                    let positive = |i: &usize| x[*i] > self.opts.int_tol;
                    let lead = match lead {
                        Lead::Largest => free.max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a))),
                        Lead::First => free.find(positive),
                        Lead::Last => free.rfind(positive),
                    }
                    .unwrap_or(j);
                    (vec![(lead, 1.0, 1.0)], vec![(lead, tab.lower[lead], 0.0)])
                }
                None => {
                    let r = x[j].round().clamp(tab.lower[j], tab.upper[j]);
                    let alt = if r > x[j] { x[j].floor() } else { x[j].ceil() };
                    let alt = alt.clamp(tab.lower[j], tab.upper[j]);
                    (vec![(j, r, r)], vec![(j, alt, alt)])
                }
            };
            let mut next = tab.clone();
            let out = self.engine.solve_warm(&mut next, &first);
            self.iters += out.iters;
            if out.status == LpStatus::Optimal {
                tab = next;
                continue;
            }
            let out = self.engine.solve_warm(&mut tab, &second);
            self.iters += out.iters;
            if out.status != LpStatus::Optimal {
                return;
            }
        }
    }

    /// Round integers, verify against the original rows, and keep the point
    /// if it improves the incumbent. Points that fail verification after
    /// rounding are re-solved with the integers fixed.
    fn try_incumbent(&mut self, mut x: Vec<f64>, changes: &[(usize, f64, f64)]) {
        for (j, v) in self.model.vars.iter().enumerate() {
            if v.kind.is_integral() {
                x[j] = x[j].round();
            } else {
                x[j] = x[j].clamp(v.lower, v.upper);
            }
        }
        if self.model.max_violation(&x) > self.opts.feas_tol {
            let mut bounds = self.node_bounds(changes);
            for (j, v) in self.model.vars.iter().enumerate() {
                if v.kind.is_integral() {
                    bounds[j] = (x[j], x[j]);
                }
            }
            let (out, tab) = self.engine.solve_cold(self.model, &bounds);
            self.iters += out.iters;
            if out.status != LpStatus::Optimal {
                self.incomplete = true;
                return;
            }
            x = tab.struct_values().to_vec();
            for (j, v) in self.model.vars.iter().enumerate() {
                x[j] = if v.kind.is_integral() { x[j].round() } else { x[j].clamp(v.lower, v.upper) };
            }
            if self.model.max_violation(&x) > self.opts.feas_tol {
                self.incomplete = true;
                return;
            }
        }
        let obj = self.model.objective_value(&x) - self.model.objective_offset;
        if self.incumbent.as_ref().is_none_or(|(inc, _)| obj < *inc) {
            self.incumbent = Some((obj, x));
        }
    }
}
