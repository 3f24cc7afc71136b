//! Run the coordination methods on a case and record what happened.
//!
//! DA-SLR runs as a seeded discrete-event simulation by default: each
//! microgrid solve takes a simulated compute time drawn from a
//! [`DelayModel`], and the coordinator reacts to arrivals in timestamp
//! order. A thread-per-microgrid runner with the same message contract is
//! available for throughput but gives no determinism guarantee.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use gridmesh_milp::{MilpSolver, SolveError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{self, AdmmParams};
use crate::builder::{build_centralized, buy_direction, sell_direction, BuildError, Multipliers, Schedule};
use crate::case::NetworkCase;
use crate::daslr::{self, Arrival, CoordError, Coordinator, DaslrParams, SubproblemReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown method {0:?} (expected one of: daslr, admm, centralized)")]
    UnknownMethod(String),
    #[error("no feasible schedule found")]
    NoFeasibleFound,
    #[error("invalid delay model {0:?}")]
    InvalidDelay(String),
    #[error("corrupt run log: {0}")]
    CorruptLog(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Coord(CoordError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl From<CoordError> for HarnessError {
    fn from(e: CoordError) -> Self {
        match e {
            CoordError::NoFeasibleFound => HarnessError::NoFeasibleFound,
            other => HarnessError::Coord(other),
        }
    }
}

/// Simulated compute time of one subproblem solve, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    Fixed { seconds: f64 },
    Uniform { low: f64, high: f64 },
    /// Per-microgrid delays, indexed like `NetworkCase::microgrids`.
    Table { seconds: Vec<f64> },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Fixed { seconds: 1.0 }
    }
}

impl DelayModel {
    /// Parse `fixed:S`, `uniform:LO:HI` or `table:MG1=S,MG2=S,*=S`.
    pub fn parse(spec: &str, case: &NetworkCase) -> Result<Self, HarnessError> {
        let bad = || HarnessError::InvalidDelay(spec.to_string());
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        let model = match kind {
            "fixed" => DelayModel::Fixed { seconds: num(rest)? },
            "uniform" => {
                let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
                DelayModel::Uniform { low: num(lo)?, high: num(hi)? }
            }
            "table" => {
                let mut named = BTreeMap::new();
                let mut default = None;
                for item in rest.split(',') {
                    let (k, v) = item.split_once('=').ok_or_else(bad)?;
                    let (k, v) = (k.trim(), num(v)?);
                    if k == "*" {
                        default = Some(v);
                    } else if case.mg_index(k).is_some() {
                        named.insert(k.to_string(), v);
                    } else {
                        return Err(bad());
                    }
                }
                let seconds = case
                    .microgrids
                    .iter()
                    .map(|m| named.get(&m.id).copied().or(default).ok_or_else(bad))
                    .collect::<Result<Vec<_>, _>>()?;
                DelayModel::Table { seconds }
            }
            _ => return Err(bad()),
        };
        model.validate(case.microgrids.len()).map_err(|_| bad())?;
        Ok(model)
    }

    pub fn validate(&self, mgs: usize) -> Result<(), HarnessError> {
        let ok = match self {
            DelayModel::Fixed { seconds } => *seconds > 0.0,
            DelayModel::Uniform { low, high } => *low > 0.0 && high >= low,
            DelayModel::Table { seconds } => seconds.len() == mgs && seconds.iter().all(|s| *s > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(HarnessError::InvalidDelay(format!("{self:?}")))
        }
    }

    pub fn draw(&self, mg: usize, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            DelayModel::Fixed { seconds } => *seconds,
            DelayModel::Uniform { low, high } if high > low => rng.gen_range(*low..*high),
            DelayModel::Uniform { low, .. } => *low,
            DelayModel::Table { seconds } => seconds[mg],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Runner {
    #[default]
    Simulated,
    Threaded,
}

#[derive(Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub max_iters: usize,
    pub gap_tol: f64,
    pub delay: DelayModel,
    /// Coordinator-to-microgrid latency in simulated seconds.
    pub broadcast_latency: f64,
    pub daslr: DaslrParams,
    pub admm: AdmmParams,
    pub solver: Arc<dyn MilpSolver>,
    pub runner: Runner,
}

impl RunOptions {
    pub fn new(solver: Arc<dyn MilpSolver>) -> Self {
        let daslr = DaslrParams::default();
        Self {
            seed: 0,
            max_iters: daslr.max_iters,
            gap_tol: daslr.gap_tol,
            delay: DelayModel::default(),
            broadcast_latency: 0.0,
            daslr,
            admm: AdmmParams::default(),
            solver,
            runner: Runner::Simulated,
        }
    }

    fn daslr_params(&self) -> DaslrParams {
        DaslrParams { gap_tol: self.gap_tol, max_iters: self.max_iters, ..self.daslr.clone() }
    }
}

/// One `runlog.csv` record. Cost columns carry the best values known at
/// that point of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub event_seq: u64,
    pub sim_time: f64,
    pub actor: String,
    pub event: String,
    pub r: Option<usize>,
    pub stepsize: Option<f64>,
    pub violation_norm: Option<f64>,
    pub feasible_cost: Option<f64>,
    pub dual_bound: Option<f64>,
    pub gap: Option<f64>,
}

/// Exchange values carried by one arrival (`arrivals.csv`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    pub event_seq: u64,
    pub mg: String,
    pub stamp: usize,
    pub t: usize,
    pub link: usize,
    pub side_a: bool,
    pub buy_p: f64,
    pub sell_p: f64,
    pub buy_q: f64,
    pub sell_q: f64,
}

/// Multipliers after an update (`multipliers.csv`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRecord {
    pub event_seq: u64,
    pub t: usize,
    pub direction: usize,
    pub lambda_p: f64,
    pub lambda_q: f64,
}

/// Everything needed to re-derive a run (`run_params.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub method: String,
    pub case: String,
    pub seed: u64,
    pub runner: Runner,
    pub microgrids: Vec<String>,
    pub horizon: usize,
    pub directions: usize,
    pub cost_scale: f64,
    pub delay: DelayModel,
    pub broadcast_latency: f64,
    pub daslr: DaslrParams,
    pub admm: AdmmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub params: RunParams,
    pub rows: Vec<LogRow>,
    pub arrivals: Vec<ArrivalRecord>,
    pub multipliers: Vec<MultiplierRecord>,
}

pub const RUNLOG_FILE: &str = "runlog.csv";
pub const ARRIVALS_FILE: &str = "arrivals.csv";
pub const MULTIPLIERS_FILE: &str = "multipliers.csv";
pub const PARAMS_FILE: &str = "run_params.json";

fn to_csv<T: Serialize>(items: &[T], header: &[&str]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(!items.is_empty()).from_writer(Vec::new());
    if items.is_empty() {
        w.write_record(header)?;
    }
    for item in items {
        w.serialize(item)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::CorruptLog(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::CorruptLog(e.to_string()))
}

fn from_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::CorruptLog(format!("{}: {e}", path.display())))
}

impl RunLog {
    pub(crate) fn new(params: RunParams) -> Self {
        Self { params, rows: Vec::new(), arrivals: Vec::new(), multipliers: Vec::new() }
    }

    pub fn runlog_csv(&self) -> Result<String, HarnessError> {
        to_csv(
            &self.rows,
            &[
                "event_seq",
                "sim_time",
                "actor",
                "event",
                "r",
                "stepsize",
                "violation_norm",
                "feasible_cost",
                "dual_bound",
                "gap",
            ],
        )
    }

    pub fn arrivals_csv(&self) -> Result<String, HarnessError> {
        to_csv(
            &self.arrivals,
            &["event_seq", "mg", "stamp", "t", "link", "side_a", "buy_p", "sell_p", "buy_q", "sell_q"],
        )
    }

    pub fn multipliers_csv(&self) -> Result<String, HarnessError> {
        to_csv(&self.multipliers, &["event_seq", "t", "direction", "lambda_p", "lambda_q"])
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |path: PathBuf| move |source| HarnessError::Io { path, source };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let files = [
            (RUNLOG_FILE, self.runlog_csv()?),
            (ARRIVALS_FILE, self.arrivals_csv()?),
            (MULTIPLIERS_FILE, self.multipliers_csv()?),
            (PARAMS_FILE, serde_json::to_string_pretty(&self.params)?),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(io(path.clone()))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(PARAMS_FILE);
        let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        let params: RunParams = serde_json::from_str(&text)
            .map_err(|e| HarnessError::CorruptLog(format!("{}: {e}", path.display())))?;
        Ok(Self {
            params,
            rows: from_csv(&dir.join(RUNLOG_FILE))?,
            arrivals: from_csv(&dir.join(ARRIVALS_FILE))?,
            multipliers: from_csv(&dir.join(MULTIPLIERS_FILE))?,
        })
    }

    /// Rows of feasibility searches, in order.
    pub fn searches(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.event == "search")
    }
}

/// Final result of a method run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: String,
    pub schedule: Schedule,
    pub feasible_cost: f64,
    pub dual_bound: Option<f64>,
    pub gap: Option<f64>,
    pub iterations: usize,
    pub lambda: Multipliers,
    /// Own cost of each microgrid plus its exchange settlement at `lambda`.
    pub per_mg_costs: Vec<f64>,
    /// Simulated seconds from start to the last event.
    pub sim_time: f64,
    /// Sum of all drawn compute delays.
    pub compute_time: f64,
    pub notes: Vec<String>,
    pub log: RunLog,
}

/// Each microgrid's own cost plus what it pays for purchases minus what it
/// earns from sales, priced at `lambda`. Settlements cancel in the total
/// when the schedule is coupling-consistent.
pub fn attribute_costs(case: &NetworkCase, schedule: &Schedule, lambda: &Multipliers) -> Vec<f64> {
    (0..schedule.mgs.len())
        .map(|m| {
            let mut settle = 0.0;
            for (t, p) in schedule.mgs[m].periods.iter().enumerate() {
                for x in &p.exchange {
                    let side_a = case.interfaces[x.link].mg_a == case.microgrids[m].id;
                    let b = buy_direction(x.link, side_a);
                    let s = sell_direction(x.link, side_a);
                    settle += lambda.p[t][b] * x.buy_p + lambda.q[t][b] * x.buy_q;
                    settle -= lambda.p[t][s] * x.sell_p + lambda.q[t][s] * x.sell_q;
                }
            }
            schedule.mg_cost(case, m) + settle
        })
        .collect()
}

/// A coordination strategy selectable by name.
pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError>;
}

pub struct DaslrMethod;
pub struct AdmmMethod;
pub struct CentralizedMethod;

impl Method for DaslrMethod {
    fn name(&self) -> &'static str {
        "daslr"
    }
    fn run(&self, case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
        if case.interfaces.is_empty() {
            return run_centralized(case, opts, self.name());
        }
        match opts.runner {
            Runner::Simulated => run_daslr_simulated(case, opts),
            Runner::Threaded => run_daslr_threaded(case, opts),
        }
    }
}

impl Method for AdmmMethod {
    fn name(&self) -> &'static str {
        "admm"
    }
    fn run(&self, case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
        if case.interfaces.is_empty() {
            return run_centralized(case, opts, self.name());
        }
        admm::run(case, opts)
    }
}

impl Method for CentralizedMethod {
    fn name(&self) -> &'static str {
        "centralized"
    }
    fn run(&self, case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
        run_centralized(case, opts, self.name())
    }
}

/// All registered methods.
pub fn methods() -> Vec<Box<dyn Method>> {
    vec![Box::new(DaslrMethod), Box::new(AdmmMethod), Box::new(CentralizedMethod)]
}

pub fn method(name: &str) -> Result<Box<dyn Method>, HarnessError> {
    methods()
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| HarnessError::UnknownMethod(name.to_string()))
}

pub fn run(case: &NetworkCase, name: &str, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    method(name)?.run(case, opts)
}

pub(crate) fn run_params(case: &NetworkCase, method: &str, opts: &RunOptions) -> RunParams {
    RunParams {
        method: method.to_string(),
        case: case.system.name.clone(),
        seed: opts.seed,
        runner: opts.runner,
        microgrids: case.microgrids.iter().map(|m| m.id.clone()).collect(),
        horizon: case.horizon(),
        directions: case.directed_count(),
        cost_scale: case.cost_scale(),
        delay: opts.delay.clone(),
        broadcast_latency: opts.broadcast_latency,
        daslr: opts.daslr_params(),
        admm: opts.admm.clone(),
    }
}

/// One solve of the coupled model. Cases without interfaces have nothing to
/// coordinate, so every method ends up here.
fn run_centralized(case: &NetworkCase, opts: &RunOptions, method: &str) -> Result<RunOutcome, HarnessError> {
    let (model, map) = build_centralized(case)?;
    let sol = opts.solver.solve(&model)?;
    if !sol.has_incumbent() {
        return Err(HarnessError::NoFeasibleFound);
    }
    let schedule = Schedule::from_solution(case, &map, &sol.values);
    let gap = daslr::relative_gap(sol.objective, sol.best_bound).max(0.0);
    let mut log = RunLog::new(run_params(case, method, opts));
    log.rows.push(LogRow {
        event_seq: 0,
        sim_time: 0.0,
        actor: "coordinator".into(),
        event: "solve".into(),
        r: Some(0),
        stepsize: None,
        violation_norm: Some(0.0),
        feasible_cost: Some(sol.objective),
        dual_bound: Some(sol.best_bound),
        gap: Some(gap),
    });
    let lambda = Multipliers::for_case(case);
    let mut notes = Vec::new();
    if sol.status != gridmesh_milp::SolveStatus::Optimal {
        notes.push(format!("centralized solve stopped with status {} (gap {gap:.4})", sol.status));
    }
    Ok(RunOutcome {
        method: method.into(),
        per_mg_costs: attribute_costs(case, &schedule, &lambda),
        schedule,
        feasible_cost: sol.objective,
        dual_bound: Some(sol.best_bound),
        gap: Some(gap),
        iterations: 1,
        lambda,
        sim_time: 0.0,
        compute_time: 0.0,
        notes,
        log,
    })
}

/// What the coordinator wants done after handling an arrival.
struct Step {
    /// Microgrids that should start a new solve with the current multipliers.
    broadcast: Vec<usize>,
    stop: bool,
}

/// Coordinator plus log bookkeeping, shared by both runners.
struct Session<'a> {
    coord: Coordinator<'a>,
    solver: Arc<dyn MilpSolver>,
    log: RunLog,
    seq: u64,
}

impl<'a> Session<'a> {
    fn new(case: &'a NetworkCase, opts: &RunOptions) -> Self {
        Self {
            coord: Coordinator::new(case, opts.daslr_params()),
            solver: Arc::clone(&opts.solver),
            log: RunLog::new(run_params(case, "daslr", opts)),
            seq: 0,
        }
    }

    fn push_row(&mut self, now: f64, actor: &str, event: &str, r: Option<usize>, step: Option<f64>, norm: Option<f64>) -> u64 {
        let seq = self.seq;
        self.seq += 1;
        self.log.rows.push(LogRow {
            event_seq: seq,
            sim_time: now,
            actor: actor.to_string(),
            event: event.to_string(),
            r,
            stepsize: step,
            violation_norm: norm,
            feasible_cost: self.coord.feasible_cost(),
            dual_bound: self.coord.dual_bound,
            gap: self.coord.gap().ok(),
        });
        seq
    }

    fn arrive(&mut self, now: f64, rep: SubproblemReport) -> Result<Step, HarnessError> {
        let mg = rep.mg;
        let case = self.coord.case();
        let actor = case.microgrids.get(mg).map(|m| m.id.clone()).ok_or(CoordError::StaleActor(mg))?;
        let records: Vec<ArrivalRecord> = rep
            .exchanges
            .iter()
            .enumerate()
            .flat_map(|(t, row)| {
                let actor = actor.clone();
                row.iter().map(move |x| ArrivalRecord {
                    event_seq: 0,
                    mg: actor.clone(),
                    stamp: rep.stamp,
                    t,
                    link: x.link,
                    side_a: x.side_a,
                    buy_p: x.buy_p,
                    sell_p: x.sell_p,
                    buy_q: x.buy_q,
                    sell_q: x.sell_q,
                })
            })
            .collect();
        let was_started = self.coord.started();
        let outcome = self.coord.on_arrival(rep)?;
        let seq = match &outcome {
            Arrival::Init => self.push_row(now, &actor, "init", None, None, None),
            Arrival::Rejected => self.push_row(now, &actor, "reject", Some(self.coord.r), self.coord.stepsize, None),
            Arrival::Update { r, stepsize, violation_norm, .. } => {
                self.push_row(now, &actor, "update", Some(*r), *stepsize, Some(*violation_norm))
            }
        };
        self.log.arrivals.extend(records.into_iter().map(|a| ArrivalRecord { event_seq: seq, ..a }));
        let mut step = Step { broadcast: Vec::new(), stop: false };
        match outcome {
            Arrival::Init => {}
            Arrival::Rejected => step.broadcast.push(mg),
            Arrival::Update { .. } => {
                for (t, (lp, lq)) in self.coord.lambda.p.iter().zip(&self.coord.lambda.q).enumerate() {
                    for (d, (&p, &q)) in lp.iter().zip(lq).enumerate() {
                        self.log.multipliers.push(MultiplierRecord {
                            event_seq: seq,
                            t,
                            direction: d,
                            lambda_p: p,
                            lambda_q: q,
                        });
                    }
                }
                if was_started {
                    step.broadcast.push(mg);
                } else {
                    step.broadcast.extend(0..self.coord.case().microgrids.len());
                }
                if self.coord.search_due() {
                    self.search(now)?;
                }
                step.stop = self.coord.converged() || self.coord.budget_spent();
            }
        }
        Ok(step)
    }

    fn search(&mut self, now: f64) -> Result<(), HarnessError> {
        let solver = Arc::clone(&self.solver);
        self.coord.search(solver.as_ref())?;
        self.push_row(now, "coordinator", "search", Some(self.coord.r), self.coord.stepsize, None);
        Ok(())
    }

    fn finish(mut self, now: f64, compute_time: f64) -> Result<RunOutcome, HarnessError> {
        let searched_last = self.log.rows.last().is_some_and(|r| r.event == "search");
        if !searched_last && self.coord.started() {
            self.search(now)?;
        }
        let case = self.coord.case();
        let best = self.coord.best_feasible.clone().ok_or(HarnessError::NoFeasibleFound)?;
        let lambda = self.coord.lambda.clone();
        let mut notes = Vec::new();
        if !self.coord.converged() {
            notes.push(format!("stopped after {} updates without reaching gap {}", self.coord.r, self.coord.params.gap_tol));
        }
        Ok(RunOutcome {
            method: "daslr".into(),
            per_mg_costs: attribute_costs(case, &best.schedule, &lambda),
            schedule: best.schedule,
            feasible_cost: best.cost,
            dual_bound: self.coord.dual_bound,
            gap: self.coord.gap().ok(),
            iterations: self.coord.r,
            lambda,
            sim_time: now,
            compute_time,
            notes,
            log: self.log,
        })
    }

    fn snapshot(&self) -> (Multipliers, usize) {
        (self.coord.lambda.clone(), self.coord.r)
    }
}

enum EventKind {
    SolveFinished(SubproblemReport),
    BroadcastReceived { lambda: Arc<Multipliers>, stamp: usize },
}

struct Event {
    time: f64,
    mg: usize,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed so the max-heap pops the earliest (time, mg, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.mg.cmp(&self.mg)).then(other.seq.cmp(&self.seq))
    }
}

/// Deterministic time-ordered event queue.
struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, mg: usize, kind: EventKind) {
        self.heap.push(Event { time, mg, seq: self.next_seq, kind });
        self.next_seq += 1;
    }
}

fn run_daslr_simulated(case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    opts.delay.validate(case.microgrids.len())?;
    let mut session = Session::new(case, opts);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut queue = EventQueue { heap: BinaryHeap::new(), next_seq: 0 };
    let mut compute_time = 0.0;
    let mut now = 0.0;
    let lambda0 = Arc::new(session.snapshot().0);
    for mg in 0..case.microgrids.len() {
        queue.push(opts.broadcast_latency, mg, EventKind::BroadcastReceived { lambda: Arc::clone(&lambda0), stamp: 0 });
    }
    while let Some(ev) = queue.heap.pop() {
        now = ev.time;
        match ev.kind {
            EventKind::BroadcastReceived { lambda, stamp } => {
                let rep = daslr::solve_subproblem(case, ev.mg, &lambda, stamp, opts.solver.as_ref())?;
                let d = opts.delay.draw(ev.mg, &mut rng);
                compute_time += d;
                queue.push(now + d, ev.mg, EventKind::SolveFinished(rep));
            }
            EventKind::SolveFinished(rep) => {
                let step = session.arrive(now, rep)?;
                if step.stop {
                    break;
                }
                if !step.broadcast.is_empty() {
                    let (lambda, stamp) = session.snapshot();
                    let lambda = Arc::new(lambda);
                    for mg in step.broadcast {
                        let kind = EventKind::BroadcastReceived { lambda: Arc::clone(&lambda), stamp };
                        queue.push(now + opts.broadcast_latency, mg, kind);
                    }
                }
            }
        }
    }
    session.finish(now, compute_time)
}

enum ToWorker {
    Solve { lambda: Arc<Multipliers>, stamp: usize },
    Stop,
}

fn run_daslr_threaded(case: &NetworkCase, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    let n = case.microgrids.len();
    let start = Instant::now();
    let (tx_done, rx_done) = mpsc::channel::<Result<SubproblemReport, CoordError>>();
    std::thread::scope(|scope| {
        let mut workers = Vec::with_capacity(n);
        for mg in 0..n {
            let (tx, rx) = mpsc::channel::<ToWorker>();
            let done = tx_done.clone();
            let solver = Arc::clone(&opts.solver);
            scope.spawn(move || {
                while let Ok(ToWorker::Solve { lambda, stamp }) = rx.recv() {
                    let rep = daslr::solve_subproblem(case, mg, &lambda, stamp, solver.as_ref());
                    if done.send(rep).is_err() {
                        break;
                    }
                }
            });
            workers.push(tx);
        }
        drop(tx_done);
        let stop_all = |workers: &[mpsc::Sender<ToWorker>]| {
            for w in workers {
                let _ = w.send(ToWorker::Stop);
            }
        };
        let mut session = Session::new(case, opts);
        let lambda0 = Arc::new(session.snapshot().0);
        for w in &workers {
            let _ = w.send(ToWorker::Solve { lambda: Arc::clone(&lambda0), stamp: 0 });
        }
        let result = (|| {
            while let Ok(rep) = rx_done.recv() {
                let now = start.elapsed().as_secs_f64();
                let step = session.arrive(now, rep?)?;
                if step.stop {
                    break;
                }
                let (lambda, stamp) = session.snapshot();
                let lambda = Arc::new(lambda);
                for mg in step.broadcast {
                    let _ = workers[mg].send(ToWorker::Solve { lambda: Arc::clone(&lambda), stamp });
                }
            }
            Ok::<(), HarnessError>(())
        })();
        stop_all(&workers);
        result?;
        let now = start.elapsed().as_secs_f64();
        session.finish(now, now)
    })
}

/// Outcome of re-deriving a DA-SLR log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub updates_checked: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<String>,
    /// Largest relative error of `e^r‖g^r‖ = γ^r·e^{r−1}‖g^{r−1}‖`.
    pub max_recursion_error: f64,
}

impl ReplayReport {
    pub fn verified(&self) -> bool {
        self.mismatches == 0
    }
}

impl std::fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.verified() {
            write!(f, "verified, 0 mismatches ({} updates)", self.updates_checked)
        } else {
            write!(
                f,
                "{} mismatches in {} updates; first: {}",
                self.mismatches,
                self.updates_checked,
                self.first_mismatch.as_deref().unwrap_or("?")
            )
        }
    }
}

/// Recompute every multiplier update of a DA-SLR log from its arrival
/// records and compare with the logged stepsizes, violation norms and
/// multipliers bit for bit.
pub fn replay(log: &RunLog) -> Result<ReplayReport, HarnessError> {
    let p = &log.params;
    if p.method != "daslr" {
        return Err(HarnessError::CorruptLog(format!("replay needs a daslr log, found {:?}", p.method)));
    }
    let (t_len, d_len) = (p.horizon, p.directions);
    let half = t_len * d_len;
    let mg_index: BTreeMap<&str, usize> = p.microgrids.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let mut arrivals: BTreeMap<u64, Vec<&ArrivalRecord>> = BTreeMap::new();
    for a in &log.arrivals {
        arrivals.entry(a.event_seq).or_default().push(a);
    }
    let mut lambdas: BTreeMap<u64, Vec<&MultiplierRecord>> = BTreeMap::new();
    for m in &log.multipliers {
        lambdas.entry(m.event_seq).or_default().push(m);
    }
    let mut latest: Vec<Vec<&ArrivalRecord>> = vec![Vec::new(); p.microgrids.len()];
    let mut lambda = vec![0.0f64; 2 * half];
    for l in &mut lambda[..half] {
        *l = p.daslr.init_price * p.cost_scale;
    }
    let mut e: Option<f64> = None;
    let mut last_norm: Option<f64> = None;
    let mut report = ReplayReport { updates_checked: 0, mismatches: 0, first_mismatch: None, max_recursion_error: 0.0 };
    let fail = |report: &mut ReplayReport, msg: String| {
        report.mismatches += 1;
        if report.first_mismatch.is_none() {
            report.first_mismatch = Some(msg);
        }
    };
    for row in &log.rows {
        if row.event != "init" && row.event != "update" {
            continue;
        }
        let mg = *mg_index
            .get(row.actor.as_str())
            .ok_or_else(|| HarnessError::CorruptLog(format!("event {}: unknown actor {}", row.event_seq, row.actor)))?;
        latest[mg] = arrivals.get(&row.event_seq).cloned().unwrap_or_default();
        if row.event == "init" {
            continue;
        }
        let r = row.r.ok_or_else(|| HarnessError::CorruptLog(format!("event {}: update without r", row.event_seq)))?;
        report.updates_checked += 1;
        let mut g = vec![0.0f64; 2 * half];
        for rec in latest.iter().flatten() {
            if rec.t >= t_len || 2 * rec.link + 1 >= d_len {
                return Err(HarnessError::CorruptLog(format!("event {}: index out of range", rec.event_seq)));
            }
            let b = rec.t * d_len + buy_direction(rec.link, rec.side_a);
            let s = rec.t * d_len + sell_direction(rec.link, rec.side_a);
            g[b] += rec.buy_p;
            g[half + b] += rec.buy_q;
            g[s] -= rec.sell_p;
            g[half + s] -= rec.sell_q;
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn > 0.0 {
            let next = match (e, last_norm) {
                (Some(prev_e), Some(prev_n)) => {
                    let gm = daslr::gamma(&p.daslr, r);
                    let next = gm * prev_e * prev_n / gn;
                    let lhs = next * gn;
                    let rhs = gm * prev_e * prev_n;
                    let rel = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
                    report.max_recursion_error = report.max_recursion_error.max(rel);
                    next
                }
                _ => p.daslr.init_c * p.cost_scale / gn,
            };
            for (l, gi) in lambda.iter_mut().zip(&g) {
                *l += next * gi;
            }
            e = Some(next);
            last_norm = Some(gn);
        }
        if row.violation_norm.map(f64::to_bits) != Some(gn.to_bits()) {
            fail(&mut report, format!("event {} (r={r}): violation norm {:?} vs {gn}", row.event_seq, row.violation_norm));
        }
        if row.stepsize.map(f64::to_bits) != e.map(f64::to_bits) {
            fail(&mut report, format!("event {} (r={r}): stepsize {:?} vs {:?}", row.event_seq, row.stepsize, e));
        }
        let logged = lambdas.get(&row.event_seq).map(Vec::as_slice).unwrap_or(&[]);
        if logged.len() != half {
            fail(&mut report, format!("event {} (r={r}): {} multiplier records, expected {half}", row.event_seq, logged.len()));
            continue;
        }
        for m in logged {
            let i = m.t * d_len + m.direction;
            if m.t >= t_len || m.direction >= d_len {
                return Err(HarnessError::CorruptLog(format!("event {}: multiplier index out of range", m.event_seq)));
            }
            if m.lambda_p.to_bits() != lambda[i].to_bits() || m.lambda_q.to_bits() != lambda[half + i].to_bits() {
                fail(
                    &mut report,
                    format!(
                        "event {} (r={r}): multiplier t={} d={} logged ({}, {}) vs derived ({}, {})",
                        row.event_seq,
                        m.t,
                        m.direction,
                        m.lambda_p,
                        m.lambda_q,
                        lambda[i],
                        lambda[half + i]
                    ),
                );
                break;
            }
        }
    }
    Ok(report)
}
