//! Exact linear reformulations of products between a bounded continuous
//! variable and binary or grid-valued integer decisions.

use gridmesh_milp::{MilpModel, Sense, VarId, VarKind};

use super::BuildError;

/// One-hot expansion of `z = grid[d]·A` for a continuous factor `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedProduct {
    pub selectors: Vec<VarId>,
    /// Index of the selected level, `Σ l·w_l`.
    pub index: VarId,
    pub factor: VarId,
    pub factor_bounds: (f64, f64),
    pub output: VarId,
    /// `aux[l] = w_l·A`.
    pub aux: Vec<VarId>,
    pub grid: Vec<f64>,
}

impl LinearizedProduct {
    /// Level picked in `values`, if exactly one selector is set.
    pub fn selected(&self, values: &[f64]) -> Option<usize> {
        let on: Vec<usize> =
            self.selectors.iter().enumerate().filter(|(_, w)| values[w.0] > 0.5).map(|(l, _)| l).collect();
        match on.as_slice() {
            [l] => Some(*l),
            _ => None,
        }
    }
}

fn factor_bounds(model: &MilpModel, a: VarId) -> Result<(f64, f64), BuildError> {
    let meta = model.var(a);
    if !meta.lower.is_finite() || !meta.upper.is_finite() {
        return Err(BuildError::UnboundedFactor(meta.name.clone()));
    }
    Ok((meta.lower, meta.upper))
}

/// Add `z = A·d` for continuous `A ∈ [lo, hi]` and binary `d`.
///
/// The rows are exact for d ∈ {0, 1}: `lo·d <= z <= hi·d` and
/// `A - hi·(1-d) <= z <= A - lo·(1-d)`, with the box
/// `min(0, lo) <= z <= max(0, hi)` and `z <= A + hi·(1-d)` added when valid.
pub fn linearize_binary_product(
    model: &mut MilpModel,
    a: VarId,
    d: VarId,
    name: &str,
) -> Result<VarId, BuildError> {
    let (lo, hi) = factor_bounds(model, a)?;
    let z = model.continuous(name.to_string(), lo.min(0.0), hi.max(0.0));
    model.add_row(format!("{name}:lo_d"), vec![(z, 1.0), (d, -lo)], Sense::Ge, 0.0);
    model.add_row(format!("{name}:hi_d"), vec![(z, 1.0), (d, -hi)], Sense::Le, 0.0);
    // z - A - hi·d >= -hi  <=>  z >= A - hi·(1-d)
    model.add_row(format!("{name}:lo_a"), vec![(z, 1.0), (a, -1.0), (d, -hi)], Sense::Ge, -hi);
    // z - A - lo·d <= -lo  <=>  z <= A - lo·(1-d)
    model.add_row(format!("{name}:hi_a"), vec![(z, 1.0), (a, -1.0), (d, -lo)], Sense::Le, -lo);
    if lo + hi >= 0.0 {
        // z <= A + hi·(1-d); only valid when A + hi >= 0 over the whole box
        model.add_row(format!("{name}:hi_b"), vec![(z, 1.0), (a, -1.0), (d, hi)], Sense::Le, hi);
    }
    Ok(z)
}

/// Add `z = grid[l]·A` where the level `l` is chosen by one-hot selectors.
pub fn linearize_integer_product(
    model: &mut MilpModel,
    a: VarId,
    grid: &[f64],
    name: &str,
) -> Result<LinearizedProduct, BuildError> {
    linearize_integer_product_bounded(model, a, grid, None, name)
}

/// As [`linearize_integer_product`], with optional per-level bounds on `A`
/// that hold whenever that level is selected. Tighter level bounds give a
/// tighter relaxation; each is intersected with the bounds of `A`.
pub fn linearize_integer_product_bounded(
    model: &mut MilpModel,
    a: VarId,
    grid: &[f64],
    level_bounds: Option<&[(f64, f64)]>,
    name: &str,
) -> Result<LinearizedProduct, BuildError> {
    if grid.is_empty() {
        return Err(BuildError::EmptyGrid(name.to_string()));
    }
    let (lo, hi) = factor_bounds(model, a)?;
    if level_bounds.is_some_and(|b| b.len() != grid.len()) {
        return Err(BuildError::LevelBounds(name.to_string()));
    }
    let level = |l: usize| match level_bounds {
        Some(b) => {
            let (bl, bh) = (b[l].0.max(lo), b[l].1.min(hi));
            if bl <= bh {
                (bl, bh)
            } else {
                (lo, hi)
            }
        }
        None => (lo, hi),
    };
    let selectors: Vec<VarId> = (0..grid.len())
        .map(|l| {
            let w = model.binary(format!("{name}:w{l}"));
            if grid.len() == 1 {
                model.fix(w, 1.0);
            }
            w
        })
        .collect();
    model.add_row(format!("{name}:onehot"), selectors.iter().map(|&w| (w, 1.0)).collect(), Sense::Eq, 1.0);
    let top = (grid.len() - 1) as f64;
    let index = model.add_var(format!("{name}:d"), 0.0, top, VarKind::Continuous, 0.0);
    let mut recon = vec![(index, -1.0)];
    recon.extend(selectors.iter().enumerate().skip(1).map(|(l, &w)| (w, l as f64)));
    model.add_row(format!("{name}:index"), recon, Sense::Eq, 0.0);

    // Per-level products w_l·A. With the selectors one-hot, the bounds
    // `lo·w_l <= aux_l <= hi·w_l` plus `Σ aux_l = A` describe the convex hull
    // of the disjunction, which implies the remaining McCormick rows.
    let mut aux = Vec::with_capacity(grid.len());
    for (l, &w) in selectors.iter().enumerate() {
        let (lo, hi) = level(l);
        let v = model.continuous(format!("{name}:aux{l}"), lo.min(0.0), hi.max(0.0));
        model.add_row(format!("{name}:aux{l}:lo_d"), vec![(v, 1.0), (w, -lo)], Sense::Ge, 0.0);
        model.add_row(format!("{name}:aux{l}:hi_d"), vec![(v, 1.0), (w, -hi)], Sense::Le, 0.0);
        aux.push(v);
    }
    let mut sum: Vec<(VarId, f64)> = aux.iter().map(|&v| (v, 1.0)).collect();
    sum.push((a, -1.0));
    model.add_row(format!("{name}:aux_sum"), sum, Sense::Eq, 0.0);

    let (zlo, zhi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &g| {
        let c = [g * lo, g * hi];
        (l.min(c[0]).min(c[1]), h.max(c[0]).max(c[1]))
    });
    let output = model.continuous(format!("{name}:z"), zlo.min(0.0), zhi.max(0.0));
    let mut def = vec![(output, -1.0)];
    def.extend(aux.iter().zip(grid).map(|(&v, &g)| (v, g)));
    model.add_row(format!("{name}:z_def"), def, Sense::Eq, 0.0);
    Ok(LinearizedProduct {
        selectors,
        index,
        factor: a,
        factor_bounds: (lo, hi),
        output,
        aux,
        grid: grid.to_vec(),
    })
}
