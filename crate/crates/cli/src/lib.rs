//! Command-line front end: run a coordination method on a case and write
//! the schedule, run log and summary under an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::builder::PossibleValuesParser;
use clap::{Args, CommandFactory, Parser, Subcommand};
use gridmesh_core::builder::{build_centralized, build_subproblem, flow_conservation_residual, Multipliers, Schedule};
use gridmesh_core::case::CaseError;
use gridmesh_core::daslr::CoordError;
use gridmesh_core::harness::{self, DelayModel, HarnessError, RunLog, RunOptions, RunOutcome, Runner};
use gridmesh_core::{resolve_case, NetworkCase};
use gridmesh_milp::{BranchAndBound, MilpSolver, SolveOptions, SolveStatus};
use serde::Serialize;
use thiserror::Error;

/// Environment variable selecting the threaded runner when set to a
/// positive integer.
pub const THREADS_ENV: &str = "GRIDMESH_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Build(#[from] gridmesh_core::builder::BuildError),
    #[error(transparent)]
    Solve(#[from] gridmesh_milp::SolveError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
    #[error("replay failed: {0}")]
    Replay(String),
}

impl CliError {
    /// 2 when no feasible schedule was found (an infeasible subproblem
    /// proves there is none), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Harness(HarnessError::NoFeasibleFound)
            | CliError::Harness(HarnessError::Coord(CoordError::Subproblem {
                status: SolveStatus::Infeasible,
                ..
            })) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "gridmesh", version, about = "Coordinated scheduling of networked microgrids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method and write schedule.csv, runlog.csv and summary.json.
    Solve(SolveArgs),
    /// Run several methods under the same budget and tabulate their costs.
    Compare(CompareArgs),
    /// Solve the centralized problem for each droop contribution fraction.
    SweepDroop(SweepArgs),
    /// Re-derive every multiplier update of a DA-SLR run log.
    Replay {
        /// Directory written by `solve`.
        #[arg(long)]
        log: PathBuf,
    },
    /// Write the (shaped) case as per-unit JSON.
    ExportCase {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the centralized model, or one microgrid's subproblem at zero
    /// prices, in MPS format.
    ExportMps {
        #[command(flatten)]
        case: CaseArgs,
        /// Microgrid id; omit for the centralized model.
        #[arg(long)]
        mg: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    /// Bundled case name or path to a case JSON file.
    #[arg(long)]
    pub case: String,
    /// Keep only the first N periods.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Coarsen every droop grid to at most N levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Override the droop contribution fraction of every microgrid.
    #[arg(long)]
    pub contribution_frac: Option<f64>,
}

impl CaseArgs {
    pub fn load(&self) -> Result<NetworkCase, CliError> {
        let mut case = resolve_case(&self.case)?;
        if let Some(t) = self.horizon {
            if t == 0 || t > case.horizon() {
                return Err(CliError::Input(format!("--horizon {t} outside 1..={}", case.horizon())));
            }
            case = case.with_horizon(t);
        }
        if let Some(l) = self.levels {
            if l == 0 {
                return Err(CliError::Input("--levels must be at least 1".into()));
            }
            case = case.with_droop_levels(l);
        }
        if let Some(f) = self.contribution_frac {
            case = shape_frac(&case, f)?;
        }
        Ok(case)
    }
}

fn shape_frac(case: &NetworkCase, frac: f64) -> Result<NetworkCase, CliError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(CliError::Input(format!("contribution fraction {frac} outside (0, 1]")));
    }
    Ok(case.with_contribution_frac(frac))
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Relative gap at which each branch-and-bound solve stops.
    #[arg(long, default_value_t = 1e-6)]
    pub mip_gap: f64,
    /// Node budget of each branch-and-bound solve.
    #[arg(long, default_value_t = 50_000)]
    pub node_limit: usize,
}

impl SolverArgs {
    pub fn options(&self) -> SolveOptions {
        SolveOptions { gap_tol: self.mip_gap, node_limit: self.node_limit, ..Default::default() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Coordinator iteration budget (updates for DA-SLR, ADMM counts a
    /// round as one update per microgrid).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop once the optimality gap is at or below this value.
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `fixed:S`, `uniform:LO:HI` or `table:MG1=S,*=S` (simulated seconds).
    #[arg(long)]
    pub delay_model: Option<String>,
    /// Coordinator-to-microgrid latency in simulated seconds.
    #[arg(long, default_value_t = 0.0)]
    pub latency: f64,
    /// DA-SLR starting price on real-power exchanges, in cost-scale units.
    #[arg(long)]
    pub init_price: Option<f64>,
    /// DA-SLR initial stepsize constant.
    #[arg(long)]
    pub init_c: Option<f64>,
    /// DA-SLR stepsize-schedule constant M.
    #[arg(long)]
    pub gamma_m: Option<f64>,
    /// ADMM penalty.
    #[arg(long)]
    pub rho: Option<f64>,
    /// ADMM piecewise-linear segments per penalty.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Run ADMM on the continuous relaxation.
    #[arg(long)]
    pub relax: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

impl RunArgs {
    pub fn options(&self, case: &NetworkCase) -> Result<RunOptions, CliError> {
        let solver: Arc<dyn MilpSolver> = Arc::new(BranchAndBound::new(self.solver.options()));
        let mut o = RunOptions::new(solver);
        o.seed = self.seed;
        if let Some(n) = self.max_iters {
            o.max_iters = n;
        }
        if let Some(g) = self.gap_tol {
            o.gap_tol = g;
        }
        if let Some(spec) = &self.delay_model {
            o.delay = DelayModel::parse(spec, case)?;
        }
        if !(self.latency >= 0.0) {
            return Err(CliError::Input(format!("--latency {} must be non-negative", self.latency)));
        }
        o.broadcast_latency = self.latency;
        if let Some(v) = self.init_price {
            o.daslr.init_price = v;
        }
        if let Some(v) = self.init_c {
            o.daslr.init_c = v;
        }
        if let Some(v) = self.gamma_m {
            o.daslr.gamma_m = v;
        }
        if let Some(v) = self.rho {
            o.admm.rho = v;
        }
        if let Some(v) = self.segments {
            o.admm.segments = v;
        }
        o.admm.relax = self.relax;
        o.runner = runner_from_env();
        Ok(o)
    }
}

/// Threaded when `GRIDMESH_THREADS` holds a positive integer.
pub fn runner_from_env() -> Runner {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => Runner::Threaded,
        _ => Runner::Simulated,
    }
}

fn method_parser() -> PossibleValuesParser {
    PossibleValuesParser::new(harness::methods().iter().map(|m| m.name()).collect::<Vec<_>>())
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[arg(long, value_parser = method_parser())]
    pub method: String,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[arg(long, value_delimiter = ',', default_value = "daslr,admm", value_parser = method_parser())]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    /// Contribution fractions; reductions are relative to the first.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3")]
    pub fracs: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgCost {
    pub mg: String,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub method: String,
    pub case: String,
    pub seed: u64,
    pub iterations: usize,
    pub feasible_cost: f64,
    pub dual_bound: Option<f64>,
    pub gap: Option<f64>,
    pub per_mg_costs: Vec<MgCost>,
    pub coupling_residual: f64,
    pub balance_residual: f64,
    pub sim_time: f64,
    pub compute_time: f64,
    pub wall_seconds: f64,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn new(
        case_name: &str,
        case: &NetworkCase,
        seed: u64,
        out: &RunOutcome,
        wall: f64,
    ) -> Result<Self, CliError> {
        Ok(Summary {
            method: out.method.clone(),
            case: case_name.to_string(),
            seed,
            iterations: out.iterations,
            feasible_cost: out.feasible_cost,
            dual_bound: out.dual_bound,
            gap: out.gap,
            per_mg_costs: mg_costs(case, &out.per_mg_costs),
            coupling_residual: out.schedule.coupling_residual(case),
            balance_residual: balance_residual(case, &out.schedule)?,
            sim_time: out.sim_time,
            compute_time: out.compute_time,
            wall_seconds: wall,
            notes: out.notes.clone(),
        })
    }
}

fn mg_costs(case: &NetworkCase, costs: &[f64]) -> Vec<MgCost> {
    case.microgrids.iter().zip(costs).map(|(m, c)| MgCost { mg: m.id.clone(), cost: *c }).collect()
}

/// Largest nodal balance residual of `schedule`, real or reactive.
pub fn balance_residual(case: &NetworkCase, schedule: &Schedule) -> Result<f64, CliError> {
    let res = flow_conservation_residual(case, schedule)?;
    Ok(res.iter().flatten().flatten().map(|(p, q)| p.abs().max(q.abs())).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub sim_time: f64,
    pub feasible_cost: Option<f64>,
    pub dual_bound: Option<f64>,
    pub gap: Option<f64>,
}

/// One row per feasibility search of the log.
pub fn trace(log: &RunLog) -> Vec<TraceRow> {
    log.searches()
        .map(|r| TraceRow {
            iteration: r.r.unwrap_or(0),
            sim_time: r.sim_time,
            feasible_cost: r.feasible_cost,
            dual_bound: r.dual_bound,
            gap: r.gap,
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Write every artifact of one run into `dir`.
pub fn write_run(dir: &Path, case: &NetworkCase, summary: &Summary, out: &RunOutcome) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_csv(&dir.join("schedule.csv"), &out.schedule.rows(case))?;
    out.log.write_dir(dir)?;
    write_trace(&dir.join("trace.csv"), &trace(&out.log))?;
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(summary)?)
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), CliError> {
    if rows.is_empty() {
        return write_text(path, "iteration,sim_time,feasible_cost,dual_bound,gap\n");
    }
    write_csv(path, rows)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<Summary, CliError> {
    let case = args.case.load()?;
    let opts = args.run.options(&case)?;
    let start = Instant::now();
    let out = harness::run(&case, &args.method, &opts)?;
    let summary = Summary::new(&args.case.case, &case, opts.seed, &out, start.elapsed().as_secs_f64())?;
    write_run(&args.out, &case, &summary, &out)?;
    Ok(summary)
}

/// One method row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub per_mg: Vec<f64>,
    pub total: f64,
    pub dual_bound: Option<f64>,
    pub gap: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub mgs: Vec<String>,
    pub rows: Vec<CompareRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

impl CompareTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["method".to_string()];
        h.extend(self.mgs.iter().cloned());
        h.extend(["total", "dual_bound", "gap", "iterations"].map(String::from));
        h
    }

    fn cells(&self, row: &CompareRow, fmt: impl Fn(f64) -> String) -> Vec<String> {
        let mut c = vec![row.method.clone()];
        c.extend(row.per_mg.iter().map(|v| fmt(*v)));
        c.push(fmt(row.total));
        c.push(row.dual_bound.map_or_else(|| "-".into(), &fmt));
        c.push(row.gap.map_or_else(|| "-".into(), |g| format!("{g:.4}")));
        c.push(row.iterations.to_string());
        c
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut c = vec![r.method.clone()];
            c.extend(r.per_mg.iter().map(|v| v.to_string()));
            c.extend([r.total.to_string(), opt(r.dual_bound), opt(r.gap), r.iterations.to_string()]);
            w.write_record(c)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Right-aligned text rendering, costs to four decimals.
    pub fn to_text(&self) -> String {
        let mut grid = vec![self.header()];
        grid.extend(self.rows.iter().map(|r| self.cells(r, |v| format!("{v:.4}"))));
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|j| grid.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        for row in &grid {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareTable, CliError> {
    let case = args.case.load()?;
    let opts = args.run.options(&case)?;
    ensure_dir(&args.out)?;
    let mut table = CompareTable { mgs: case.microgrids.iter().map(|m| m.id.clone()).collect(), rows: Vec::new() };
    for name in &args.methods {
        let start = Instant::now();
        let out = harness::run(&case, name, &opts)?;
        let summary = Summary::new(&args.case.case, &case, opts.seed, &out, start.elapsed().as_secs_f64())?;
        write_run(&args.out.join(name), &case, &summary, &out)?;
        write_trace(&args.out.join(format!("trace_{name}.csv")), &trace(&out.log))?;
        table.rows.push(CompareRow {
            method: name.clone(),
            total: out.per_mg_costs.iter().sum(),
            per_mg: out.per_mg_costs,
            dual_bound: out.dual_bound,
            gap: out.gap,
            iterations: out.iterations,
        });
    }
    write_text(&args.out.join("compare.csv"), &table.to_csv()?)?;
    write_text(&args.out.join("compare.txt"), &table.to_text())?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub frac: f64,
    pub per_mg: Vec<MgCost>,
    pub total: f64,
    /// Percent reduction of `total` relative to the first fraction.
    pub reduction_pct: f64,
    pub status: String,
}

/// Centralized solve per fraction. Each solve starts from the previous
/// fraction's schedule, which stays feasible when the fraction grows;
/// repeated fractions reuse their first result.
pub fn sweep_droop(case: &NetworkCase, fracs: &[f64], solver: &SolveOptions) -> Result<Vec<SweepRow>, CliError> {
    if fracs.is_empty() {
        return Err(CliError::Input("--fracs needs at least one value".into()));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for &frac in fracs {
        if let Some(seen) = rows.iter().find(|r| r.frac == frac) {
            let mut again = seen.clone();
            again.reduction_pct = reduction(rows[0].total, again.total);
            rows.push(again);
            continue;
        }
        let shaped = shape_frac(case, frac)?;
        let (model, map) = build_centralized(&shaped)?;
        let mut o = solver.clone();
        o.start = prev.take().filter(|v| v.len() == model.num_vars());
        let sol = BranchAndBound::new(o).solve(&model)?;
        if !sol.has_incumbent() {
            return Err(HarnessError::NoFeasibleFound.into());
        }
        let schedule = Schedule::from_solution(&shaped, &map, &sol.values);
        let costs = harness::attribute_costs(&shaped, &schedule, &Multipliers::for_case(&shaped));
        let total = sol.objective;
        rows.push(SweepRow {
            frac,
            per_mg: mg_costs(&shaped, &costs),
            total,
            reduction_pct: rows.first().map_or(0.0, |r| reduction(r.total, total)),
            status: sol.status.to_string(),
        });
        prev = Some(sol.values);
    }
    Ok(rows)
}

fn reduction(base: f64, cost: f64) -> f64 {
    if base == cost {
        0.0
    } else {
        100.0 * (base - cost) / base.abs()
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    let case = args.case.load()?;
    let rows = sweep_droop(&case, &args.fracs, &args.solver.options())?;
    ensure_dir(&args.out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["frac".to_string()];
    header.extend(case.microgrids.iter().map(|m| m.id.clone()));
    header.extend(["total", "reduction_pct", "status"].map(String::from));
    w.write_record(&header)?;
    let mut text = format!("{:>6} {:>12} {:>10}\n", "frac", "total", "reduction");
    for r in &rows {
        let mut rec = vec![r.frac.to_string()];
        rec.extend(r.per_mg.iter().map(|c| c.cost.to_string()));
        rec.extend([r.total.to_string(), r.reduction_pct.to_string(), r.status.clone()]);
        w.write_record(rec)?;
        let _ = writeln!(text, "{:>6.2} {:>12.4} {:>9.2}%", r.frac, r.total, r.reduction_pct);
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    write_text(&args.out.join("sweep.csv"), &String::from_utf8_lossy(&bytes))?;
    write_text(&args.out.join("sweep.txt"), &text)?;
    Ok(rows)
}

pub fn cmd_replay(dir: &Path) -> Result<harness::ReplayReport, CliError> {
    let log = RunLog::read_dir(dir)?;
    let report = harness::replay(&log)?;
    if report.verified() {
        Ok(report)
    } else {
        Err(CliError::Replay(format!(
            "{} mismatches in {} updates, first: {}",
            report.mismatches,
            report.updates_checked,
            report.first_mismatch.as_deref().unwrap_or("?")
        )))
    }
}

pub fn cmd_export_mps(case: &NetworkCase, mg: Option<&str>) -> Result<String, CliError> {
    let model = match mg {
        None => build_centralized(case)?.0,
        Some(id) => build_subproblem(case, id, &Multipliers::for_case(case))?.0,
    };
    Ok(gridmesh_milp::mps::to_mps(&model))
}

/// Execute a parsed command, printing human-readable results to stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => {
            let s = cmd_solve(&a)?;
            println!(
                "{} on {}: cost {:.6}, gap {}, {} iterations",
                s.method,
                s.case,
                s.feasible_cost,
                s.gap.map_or_else(|| "n/a".into(), |g| format!("{g:.4}")),
                s.iterations
            );
            for n in &s.notes {
                println!("note: {n}");
            }
        }
        Command::Compare(a) => print!("{}", cmd_compare(&a)?.to_text()),
        Command::SweepDroop(a) => {
            for r in cmd_sweep(&a)? {
                println!("frac {:.2}: cost {:.6}, reduction {:.2}%", r.frac, r.total, r.reduction_pct);
            }
        }
        Command::Replay { log } => println!("{}", cmd_replay(&log)?),
        Command::ExportCase { case, out } => write_text(&out, &case.load()?.to_json())?,
        Command::ExportMps { case, mg, out } => write_text(&out, &cmd_export_mps(&case.load()?, mg.as_deref())?)?,
    }
    Ok(())
}

/// Parse `args` and run; returns the process exit code. Usage errors exit
/// with 1 like any other input error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            eprintln!("\n{}", Cli::command().render_usage());
            return 1;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
