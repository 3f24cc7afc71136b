//! Sparse MILP model representation.
//!
//! Every formulation in the workspace is compiled into a [`MilpModel`]: a
//! list of bounded variables with an objective coefficient each, plus sparse
//! linear rows. The sense is always minimization.

use std::fmt;

use crate::ModelError;

/// Handle to a variable inside one [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a constraint row inside one [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarMeta {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A linear expression `Σ coef·var + constant` used while assembling rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn add(&mut self, v: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add(v, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }

    /// Merge duplicate variables and drop zero coefficients. Order follows
    /// first appearance so the result is deterministic.
    pub fn compact(&self) -> Vec<(VarId, f64)> {
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            if let Some(slot) = out.iter_mut().find(|(w, _)| *w == v) {
                slot.1 += c;
            } else {
                out.push((v, c));
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<VarMeta>,
    pub rows: Vec<Row>,
    /// Constant added to the objective (does not affect the optimizer).
    pub objective_offset: f64,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        objective: f64,
    ) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(VarMeta { name: name.into(), lower, upper, kind, objective });
        VarId(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, VarKind::Continuous, 0.0)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary, 0.0)
    }

    pub fn var(&self, v: VarId) -> &VarMeta {
        &self.vars[v.0]
    }

    pub fn set_objective(&mut self, v: VarId, coef: f64) {
        self.vars[v.0].objective = coef;
    }

    pub fn add_objective(&mut self, v: VarId, coef: f64) {
        self.vars[v.0].objective += coef;
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        let meta = &mut self.vars[v.0];
        meta.lower = lower;
        meta.upper = upper;
    }

    /// Fix a variable to a value by collapsing its bounds.
    pub fn fix(&mut self, v: VarId, value: f64) {
        self.set_bounds(v, value, value);
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        self.rows.push(Row { name: name.into(), coefs, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    /// Add `lhs sense rhs` where both sides are expressions; constants move
    /// to the right-hand side.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        lhs: &LinExpr,
        sense: Sense,
        rhs: &LinExpr,
    ) -> RowId {
        let mut e = lhs.clone();
        e.add_expr(rhs, -1.0);
        let constant = e.constant;
        self.add_row(name, e.compact(), sense, -constant)
    }

    /// Copy of the model with every integrality requirement dropped.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.kind = VarKind::Continuous;
        }
        m
    }

    pub fn integer_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind.is_integral())
            .map(|(i, _)| VarId(i))
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind.is_integral())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self.vars.iter().zip(values).map(|(v, x)| v.objective * x).sum::<f64>()
    }

    /// Largest row or bound violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(values)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn max_integrality_violation(&self, values: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(values)
            .filter(|(v, _)| v.kind.is_integral())
            .map(|(_, &x)| (x - x.round()).abs())
            .fold(0.0, f64::max)
    }

    /// Structural checks: finite coefficients, declared variables, sane bounds.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.objective.is_finite() {
                return Err(ModelError::NonFinite(format!("variable {} ({})", i, v.name)));
            }
            if v.lower > v.upper {
                return Err(ModelError::InvertedBounds(v.name.clone(), v.lower, v.upper));
            }
            match v.kind {
                VarKind::Binary if v.lower < 0.0 || v.upper > 1.0 => {
                    return Err(ModelError::BinaryBounds(v.name.clone()));
                }
                VarKind::Integer if !v.lower.is_finite() || !v.upper.is_finite() => {
                    return Err(ModelError::UnboundedInteger(v.name.clone()));
                }
                _ => {}
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(ModelError::NonFinite(format!("rhs of row {}", r.name)));
            }
            for &(v, a) in &r.coefs {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVariable(r.name.clone(), v.0));
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite(format!("coefficient in row {}", r.name)));
                }
            }
        }
        Ok(())
    }
}
