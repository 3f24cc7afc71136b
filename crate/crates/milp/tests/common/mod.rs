//! Reference implementations used only by the tests: a dense two-phase
//! tableau simplex with Bland's rule on standard form, exhaustive binary
//! enumeration on top of it, and seeded random model generators.

#![allow(dead_code)]

use gridmesh_milp::{MilpModel, Sense, VarId, VarKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Dense Bland-rule simplex on `min c·y, A y = b, y >= 0`, `b >= 0`,
/// with one artificial per row.
fn standard_form(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Oracle {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> bool {
        loop {
            let mut enter = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..m {
                    d -= cost[basis[i]] * t[i][j];
                }
                if d < -1e-10 {
                    enter = Some(j);
                    break;
                }
            }
            let Some(q) = enter else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if t[i][q] > 1e-10 {
                    let ratio = t[i][width - 1] / t[i][q];
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            let p = t[r][q];
            for v in t[r].iter_mut() {
                *v /= p;
            }
            for i in 0..m {
                if i != r {
                    let f = t[i][q];
                    if f != 0.0 {
                        for k in 0..width {
                            t[i][k] -= f * t[r][k];
                        }
                    }
                }
            }
            basis[r] = q;
        }
    };
    let mut phase1 = vec![0.0; n + m];
    for c in phase1.iter_mut().skip(n) {
        *c = 1.0;
    }
    run(&mut t, &mut basis, &phase1, n + m);
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][width - 1]).sum();
    if infeas > 1e-7 {
        return Oracle::Infeasible;
    }
    // pivot out zero-level artificials where possible
    for i in 0..m {
        if basis[i] >= n {
            if let Some(q) = (0..n).find(|&j| !basis.contains(&j) && t[i][j].abs() > 1e-9) {
                let p = t[i][q];
                for v in t[i].iter_mut() {
                    *v /= p;
                }
                for k in 0..m {
                    if k != i {
                        let f = t[k][q];
                        if f != 0.0 {
                            for col in 0..width {
                                t[k][col] -= f * t[i][col];
                            }
                        }
                    }
                }
                basis[i] = q;
            }
        }
    }
    let mut phase2 = vec![0.0; n + m];
    phase2[..n].copy_from_slice(c);
    if !run(&mut t, &mut basis, &phase2, n) {
        return Oracle::Unbounded;
    }
    let obj = (0..m).map(|i| phase2[basis[i]] * t[i][width - 1]).sum();
    Oracle::Optimal(obj)
}

/// LP relaxation optimum of `model` with the given bound overrides.
/// Every variable must have a finite lower bound.
pub fn dense_lp(model: &MilpModel, bounds: &[(f64, f64)]) -> Oracle {
    let nv = model.num_vars();
    // y_j = x_j - l_j >= 0; upper bounds become rows; slacks become columns
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for r in &model.rows {
        let mut a = vec![0.0; nv];
        let mut rhs = r.rhs;
        for &(v, c) in &r.coefs {
            a[v.0] += c;
            rhs -= c * bounds[v.0].0;
        }
        rows.push((a, r.sense, rhs));
    }
    for j in 0..nv {
        let (l, u) = bounds[j];
        assert!(l.is_finite(), "oracle needs finite lower bounds");
        if u < l {
            return Oracle::Infeasible;
        }
        if u.is_finite() {
            let mut a = vec![0.0; nv];
            a[j] = 1.0;
            rows.push((a, Sense::Le, u - l));
        }
    }
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n = nv + n_slack;
    let mut a_std = Vec::new();
    let mut b_std = Vec::new();
    let mut s = nv;
    for (a, sense, rhs) in rows {
        let mut full = vec![0.0; n];
        full[..nv].copy_from_slice(&a);
        match sense {
            Sense::Le => {
                full[s] = 1.0;
                s += 1;
            }
            Sense::Ge => {
                full[s] = -1.0;
                s += 1;
            }
            Sense::Eq => {}
        }
        if rhs < 0.0 {
            for v in full.iter_mut() {
                *v = -*v;
            }
            b_std.push(-rhs);
        } else {
            b_std.push(rhs);
        }
        a_std.push(full);
    }
    let mut c = vec![0.0; n];
    for j in 0..nv {
        c[j] = model.vars[j].objective;
    }
    let shift: f64 = (0..nv).map(|j| model.vars[j].objective * bounds[j].0).sum();
    match standard_form(&a_std, &b_std, &c) {
        Oracle::Optimal(v) => Oracle::Optimal(v + shift + model.objective_offset),
        other => other,
    }
}

pub fn model_bounds(model: &MilpModel) -> Vec<(f64, f64)> {
    model.vars.iter().map(|v| (v.lower, v.upper)).collect()
}

/// MILP optimum by enumerating every binary assignment and solving the
/// remaining LP with the dense oracle.
pub fn enumerate_binaries(model: &MilpModel) -> Oracle {
    let bins: Vec<usize> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    assert!(bins.len() <= 16);
    let base = model_bounds(model);
    let mut best = Oracle::Infeasible;
    for mask in 0u32..(1 << bins.len()) {
        let mut b = base.clone();
        for (k, &j) in bins.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            b[j] = (v, v);
        }
        match dense_lp(model, &b) {
            Oracle::Optimal(v) => {
                if let Oracle::Optimal(cur) = best {
                    if v < cur {
                        best = Oracle::Optimal(v);
                    }
                } else if best != Oracle::Unbounded {
                    best = Oracle::Optimal(v);
                }
            }
            Oracle::Unbounded => best = Oracle::Unbounded,
            Oracle::Infeasible => {}
        }
    }
    best
}

/// Random LP that is feasible by construction: a reference point inside the
/// bounds satisfies every row, with random slack on inequalities.
pub fn random_lp(seed: u64, max_vars: usize) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_vars);
    let m = rng.gen_range(1..=n + 5);
    let mut model = MilpModel::new(format!("lp{seed}"));
    let mut x0 = Vec::new();
    for j in 0..n {
        let l = rng.gen_range(-5.0..2.0f64).round();
        let u = l + rng.gen_range(1.0..10.0f64).round();
        let c = rng.gen_range(-10.0..10.0f64);
        model.add_var(format!("x{j}"), l, u, VarKind::Continuous, c);
        x0.push(rng.gen_range(l..=u));
    }
    for i in 0..m {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.4) {
                coefs.push((VarId(j), rng.gen_range(-5.0..5.0f64)));
            }
        }
        if coefs.is_empty() {
            coefs.push((VarId(rng.gen_range(0..n)), 1.0));
        }
        let act: f64 = coefs.iter().map(|&(v, a)| a * x0[v.0]).sum();
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (Sense::Eq, act),
            1 | 2 => (Sense::Le, act + rng.gen_range(0.0..3.0)),
            _ => (Sense::Ge, act - rng.gen_range(0.0..3.0)),
        };
        model.add_row(format!("r{i}"), coefs, sense, rhs);
    }
    model
}

/// Random MILP with up to `max_bins` binaries that gate continuous
/// variables through big-M style rows plus random coupling rows.
pub fn random_milp(seed: u64, max_bins: usize) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let nb = rng.gen_range(2..=max_bins);
    let nc = rng.gen_range(2..=8);
    let mut model = MilpModel::new(format!("milp{seed}"));
    let mut bins = Vec::new();
    for k in 0..nb {
        bins.push(model.add_var(format!("u{k}"), 0.0, 1.0, VarKind::Binary, rng.gen_range(-5.0..8.0)));
    }
    let mut conts = Vec::new();
    for k in 0..nc {
        let ub = rng.gen_range(1.0..10.0f64).round();
        conts.push((model.add_var(format!("y{k}"), 0.0, ub, VarKind::Continuous, rng.gen_range(-6.0..4.0)), ub));
    }
    for (k, &(y, ub)) in conts.iter().enumerate() {
        let u = bins[k % nb];
        model.add_row(format!("gate{k}"), vec![(y, 1.0), (u, -ub)], Sense::Le, 0.0);
    }
    let m = rng.gen_range(1..=6);
    for i in 0..m {
        let mut coefs = Vec::new();
        for &(y, _) in &conts {
            if rng.gen_bool(0.5) {
                coefs.push((y, rng.gen_range(0.5..4.0)));
            }
        }
        for &u in &bins {
            if rng.gen_bool(0.3) {
                coefs.push((u, rng.gen_range(-3.0..3.0)));
            }
        }
        if coefs.is_empty() {
            coefs.push((conts[0].0, 1.0));
        }
        let sense = if rng.gen_bool(0.7) { Sense::Le } else { Sense::Ge };
        let rhs = match sense {
            Sense::Le => rng.gen_range(2.0..15.0),
            _ => rng.gen_range(0.0..4.0),
        };
        model.add_row(format!("c{i}"), coefs, sense, rhs);
    }
    if rng.gen_bool(0.5) {
        let coefs: Vec<_> = bins.iter().map(|&u| (u, 1.0)).collect();
        model.add_row("card", coefs, Sense::Le, (nb / 2) as f64);
    }
    model
}
