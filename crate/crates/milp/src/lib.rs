//! Self-contained LP/MILP kernel.
//!
//! [`solve_lp`] runs a bounded-variable two-phase simplex on the continuous
//! relaxation; [`solve_milp`] wraps it in best-bound branch-and-bound. Both
//! first split the model into independent blocks (connected components of
//! the variable/row incidence graph) and solve each block separately.
//!
//! Callers that want a different engine implement [`MilpSolver`].

mod bnb;
mod decompose;
mod lp;
pub mod model;
pub mod mps;

use std::time::Duration;

use thiserror::Error;

pub use lp::LpSettings;
pub use model::{LinExpr, MilpModel, Row, RowId, Sense, VarId, VarKind, VarMeta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("variable {0} has lower bound {1} above upper bound {2}")]
    InvertedBounds(String, f64, f64),
    #[error("binary variable {0} has bounds outside [0, 1]")]
    BinaryBounds(String),
    #[error("integer variable {0} must have finite bounds")]
    UnboundedInteger(String),
    #[error("row {0} references undeclared variable index {1}")]
    UnknownVariable(String, usize),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("solver backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Simplex iteration cap, node limit or time limit reached. The best
    /// incumbent (if any) is returned.
    IterLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterLimit => "iteration limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Objective of the returned point including the model offset.
    /// `+inf` when no feasible point is known, `-inf` when unbounded.
    pub objective: f64,
    /// Proven lower bound on the optimum including the model offset.
    pub best_bound: f64,
    pub values: Vec<f64>,
    pub node_count: usize,
    pub simplex_iters: usize,
}

impl MilpSolution {
    pub fn has_incumbent(&self) -> bool {
        self.objective.is_finite() && !self.values.is_empty()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    /// Relative gap between the incumbent and the proven bound.
    pub fn gap(&self) -> f64 {
        if !self.has_incumbent() {
            return f64::INFINITY;
        }
        (self.objective - self.best_bound).max(0.0) / self.objective.abs().max(1e-9)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative optimality gap at which branch-and-bound stops.
    pub gap_tol: f64,
    /// Absolute optimality gap at which branch-and-bound stops.
    pub gap_abs: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Row/bound feasibility tolerance used to accept incumbents.
    pub feas_tol: f64,
    pub int_tol: f64,
    /// Simplex iteration cap per LP solve.
    pub iter_limit: usize,
    /// Memory budget for tableaux kept alive for warm starts.
    pub warm_start_bytes: usize,
    /// Split the model into independent blocks before solving.
    pub decompose: bool,
    /// Known feasible point used as the first incumbent; ignored if it
    /// violates the model.
    pub start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            gap_abs: 1e-9,
            node_limit: 1_000_000,
            time_limit: None,
            feas_tol: 1e-7,
            int_tol: 1e-6,
            iter_limit: 200_000,
            warm_start_bytes: 256 << 20,
            decompose: true,
            start: None,
        }
    }
}

/// Pluggable MILP backend.
pub trait MilpSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, model: &MilpModel) -> Result<MilpSolution, SolveError>;
}

/// The built-in simplex + branch-and-bound engine.
#[derive(Debug, Clone, Default)]
pub struct BranchAndBound {
    pub options: SolveOptions,
}

impl BranchAndBound {
    pub fn new(options: SolveOptions) -> Self {
        Self { options }
    }
}

impl MilpSolver for BranchAndBound {
    fn name(&self) -> &str {
        "branch-and-bound"
    }

    fn solve(&self, model: &MilpModel) -> Result<MilpSolution, SolveError> {
        solve_milp(model, &self.options)
    }
}

/// Solve the continuous relaxation of `model`.
pub fn solve_lp(model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, SolveError> {
    solve_milp(&model.relaxed(), opts)
}

/// Solve `model` to the requested optimality gap.
pub fn solve_milp(model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, SolveError> {
    model.validate()?;
    let deadline = opts.time_limit.map(|d| std::time::Instant::now() + d);
    if !opts.decompose {
        return Ok(bnb::solve(model, opts, opts.start.as_deref(), deadline));
    }
    Ok(decompose::solve_blocks(model, opts, deadline))
}
