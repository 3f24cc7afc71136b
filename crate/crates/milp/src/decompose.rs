//! Split a model into independent blocks and solve them one by one.
//!
//! Two variables belong to the same block when some row references both.
//! The optimum of a block-separable model is the concatenation of block
//! optima, so this is exact.

use std::time::Instant;

use crate::bnb;
use crate::model::{MilpModel, VarId};
use crate::{MilpSolution, SolveOptions, SolveStatus};

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

pub(crate) struct Block {
    pub vars: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Connected components ordered by smallest variable index. Variables that
/// appear in no row are gathered into one final block.
pub(crate) fn blocks(model: &MilpModel) -> Vec<Block> {
    let n = model.num_vars();
    let mut uf = UnionFind::new(n);
    let mut in_row = vec![false; n];
    for row in &model.rows {
        let mut first = None;
        for &(v, a) in &row.coefs {
            if a == 0.0 {
                continue;
            }
            in_row[v.0] = true;
            match first {
                None => first = Some(v.0),
                Some(f) => uf.union(f, v.0),
            }
        }
    }
    let mut index_of_root = vec![usize::MAX; n];
    let mut out: Vec<Block> = Vec::new();
    let mut loose = Vec::new();
    for j in 0..n {
        if !in_row[j] {
            loose.push(j);
            continue;
        }
        let r = uf.find(j);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = out.len();
            out.push(Block { vars: Vec::new(), rows: Vec::new() });
        }
        out[index_of_root[r]].vars.push(j);
    }
    for (i, row) in model.rows.iter().enumerate() {
        if let Some(&(v, _)) = row.coefs.iter().find(|(_, a)| *a != 0.0) {
            let r = uf.find(v.0);
            out[index_of_root[r]].rows.push(i);
        }
    }
    if !loose.is_empty() {
        out.push(Block { vars: loose, rows: Vec::new() });
    }
    out
}

fn extract(model: &MilpModel, block: &Block) -> MilpModel {
    let mut local = vec![usize::MAX; model.num_vars()];
    let mut sub = MilpModel::new(model.name.clone());
    for (k, &j) in block.vars.iter().enumerate() {
        local[j] = k;
        sub.vars.push(model.vars[j].clone());
    }
    for &i in &block.rows {
        let row = &model.rows[i];
        let coefs = row
            .coefs
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|&(v, a)| (VarId(local[v.0]), a))
            .collect();
        sub.add_row(row.name.clone(), coefs, row.sense, row.rhs);
    }
    sub
}

pub(crate) fn solve_blocks(model: &MilpModel, opts: &SolveOptions, deadline: Option<Instant>) -> MilpSolution {
    let n = model.num_vars();
    // rows without nonzeros are constant checks
    for row in &model.rows {
        if row.coefs.iter().all(|(_, a)| *a == 0.0) && row.violation(&[]) > opts.feas_tol {
            return MilpSolution {
                status: SolveStatus::Infeasible,
                objective: f64::INFINITY,
                best_bound: f64::INFINITY,
                values: Vec::new(),
                node_count: 0,
                simplex_iters: 0,
            };
        }
    }
    let parts = blocks(model);
    if parts.len() == 1 && parts[0].rows.len() == model.num_rows() {
        return bnb::solve(model, opts, opts.start.as_deref(), deadline);
    }
    let mut values = vec![0.0; n];
    let mut objective = model.objective_offset;
    let mut bound = model.objective_offset;
    let mut status = SolveStatus::Optimal;
    let mut node_count = 0;
    let mut simplex_iters = 0;
    let mut have_values = true;
    for (b, block) in parts.iter().enumerate() {
        let sub = extract(model, block);
        let start: Option<Vec<f64>> =
            opts.start.as_ref().filter(|x| x.len() == n).map(|x| block.vars.iter().map(|&j| x[j]).collect());
        // remaining time is shared evenly by the blocks still to solve
        let block_deadline = deadline.map(|d| {
            let now = Instant::now();
            now + d.saturating_duration_since(now) / (parts.len() - b) as u32
        });
        let sol = bnb::solve(&sub, opts, start.as_deref(), block_deadline);
        node_count += sol.node_count;
        simplex_iters += sol.simplex_iters;
        match sol.status {
            SolveStatus::Infeasible => {
                return MilpSolution {
                    status: SolveStatus::Infeasible,
                    objective: f64::INFINITY,
                    best_bound: f64::INFINITY,
                    values: Vec::new(),
                    node_count,
                    simplex_iters,
                };
            }
            SolveStatus::Unbounded => status = SolveStatus::Unbounded,
            SolveStatus::IterLimit if status == SolveStatus::Optimal => status = SolveStatus::IterLimit,
            _ => {}
        }
        objective += sol.objective;
        bound += sol.best_bound;
        if sol.values.len() == block.vars.len() {
            for (k, &j) in block.vars.iter().enumerate() {
                values[j] = sol.values[k];
            }
        } else {
            have_values = false;
        }
    }
    if status == SolveStatus::Unbounded {
        objective = f64::NEG_INFINITY;
        bound = f64::NEG_INFINITY;
    }
    MilpSolution {
        status,
        objective: if have_values || status == SolveStatus::Unbounded { objective } else { f64::INFINITY },
        best_bound: bound,
        values: if have_values { values } else { Vec::new() },
        node_count,
        simplex_iters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    #[test]
    fn splits_disjoint_rows() {
        let mut m = MilpModel::new("t");
        let a = m.continuous("a", 0.0, 1.0);
        let b = m.continuous("b", 0.0, 1.0);
        let c = m.continuous("c", 0.0, 1.0);
        let _d = m.continuous("d", 0.0, 1.0);
        m.add_row("r0", vec![(a, 1.0), (c, 1.0)], Sense::Le, 1.0);
        m.add_row("r1", vec![(b, 1.0)], Sense::Le, 1.0);
        let parts = blocks(&m);
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0].vars, vec![0, 2]);
        assert_eq!(parts[1].vars, vec![1]);
        assert_eq!(parts[2].vars, vec![3]);
    }
}
