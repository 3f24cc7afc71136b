//! Compiles a [`NetworkCase`] into MILP models: the centralized coupled
//! problem and one Lagrangian subproblem per microgrid.
//!
//! Every microgrid contributes the same block of variables and rows to
//! either model, built by [`add_microgrid`], so a subproblem at zero
//! multipliers is exactly that microgrid's slice of the centralized model.

mod linearize;
mod schedule;

use std::ops::Range;

use gridmesh_milp::{LinExpr, MilpModel, Sense, VarId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{DerKind, NetworkCase};

pub use linearize::{
    linearize_binary_product, linearize_integer_product, linearize_integer_product_bounded, LinearizedProduct,
};
pub use schedule::{
    flow_conservation_residual, ExchangeSchedule, MgSchedule, PeriodSchedule, Schedule, ScheduleRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("product factor {0} needs finite bounds")]
    UnboundedFactor(String),
    #[error("empty droop grid for {0}")]
    EmptyGrid(String),
    #[error("level bounds for {0} do not match its grid")]
    LevelBounds(String),
    #[error("no multiplier for period {t}, directed interface {direction}")]
    MissingMultiplier { t: usize, direction: usize },
    #[error("unknown microgrid {0}")]
    UnknownMicrogrid(String),
    #[error("{family} for {entity}: {message}")]
    Model { family: &'static str, entity: String, message: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Multipliers per period and directed interface. Direction `2k` is
/// "`mg_a` buys from `mg_b` over link k", `2k + 1` the reverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl Multipliers {
    pub fn zeros(horizon: usize, directions: usize) -> Self {
        Self { p: vec![vec![0.0; directions]; horizon], q: vec![vec![0.0; directions]; horizon] }
    }

    pub fn for_case(case: &NetworkCase) -> Self {
        Self::zeros(case.horizon(), case.directed_count())
    }

    /// Flatten as `[p(t=0, d=0..), …, q(t=0, d=0..), …]`.
    pub fn flat(&self) -> Vec<f64> {
        self.p.iter().flatten().chain(self.q.iter().flatten()).copied().collect()
    }

    fn get(&self, t: usize, d: usize) -> Result<(f64, f64), BuildError> {
        let p = self.p.get(t).and_then(|r| r.get(d));
        let q = self.q.get(t).and_then(|r| r.get(d));
        match (p, q) {
            (Some(&p), Some(&q)) => Ok((p, q)),
            _ => Err(BuildError::MissingMultiplier { t, direction: d }),
        }
    }
}

/// Directed interface in which the given side of link `k` is the buyer.
pub fn buy_direction(link: usize, side_a: bool) -> usize {
    2 * link + usize::from(!side_a)
}

/// Directed interface in which the given side of link `k` is the seller.
pub fn sell_direction(link: usize, side_a: bool) -> usize {
    2 * link + usize::from(side_a)
}

/// A droop injection `(1/m)·(ref − factor)` built over a one-hot grid of
/// reciprocal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DroopTerm {
    pub product: LinearizedProduct,
    /// `f_ref` in Hz, or `|V_ref|` in p.u.
    pub reference: f64,
    /// `Σ_l k_l·ref·w_l − z`, in the factor's units times `1/m`.
    pub term: LinExpr,
    /// Injected power in p.u.: `scale · term`.
    pub injection: VarId,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerVars {
    pub p: VarId,
    pub q: VarId,
    pub u: VarId,
    pub droop_p: DroopTerm,
    pub droop_q: Option<DroopTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryVars {
    pub ch: VarId,
    pub dch: VarId,
    pub u_ch: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusVars {
    pub v: VarId,
    pub shed_p: VarId,
    pub shed_q: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineVars {
    pub p: VarId,
    pub q: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeVars {
    pub link: usize,
    pub side_a: bool,
    pub buy_p: VarId,
    pub sell_p: VarId,
    pub buy_q: VarId,
    pub sell_q: VarId,
    pub u_buy: VarId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodVars {
    /// Indexed like `Microgrid::ders`; renewables have no variables.
    pub ders: Vec<Option<DerVars>>,
    pub batteries: Vec<BatteryVars>,
    pub buses: Vec<BusVars>,
    pub lines: Vec<LineVars>,
    pub freq: VarId,
    pub exchange: Vec<ExchangeVars>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgVars {
    pub mg: usize,
    /// Contiguous variable indices owned by this microgrid.
    pub var_range: Range<usize>,
    pub periods: Vec<PeriodVars>,
}

impl MgVars {
    pub fn exchange(&self, t: usize, link: usize) -> Option<&ExchangeVars> {
        self.periods[t].exchange.iter().find(|e| e.link == link)
    }
}

/// Handles of every decision variable in a built model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VariableMap {
    pub mgs: Vec<MgVars>,
}

/// A decision symbol with its indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    GenP { mg: usize, t: usize, der: usize },
    GenQ { mg: usize, t: usize, der: usize },
    GenOn { mg: usize, t: usize, der: usize },
    Charge { mg: usize, t: usize, battery: usize },
    Discharge { mg: usize, t: usize, battery: usize },
    Charging { mg: usize, t: usize, battery: usize },
    ShedP { mg: usize, t: usize, bus: usize },
    ShedQ { mg: usize, t: usize, bus: usize },
    FlowP { mg: usize, t: usize, line: usize },
    FlowQ { mg: usize, t: usize, line: usize },
    Voltage { mg: usize, t: usize, bus: usize },
    Frequency { mg: usize, t: usize },
    DroopSelectorP { mg: usize, t: usize, der: usize, level: usize },
    DroopSelectorQ { mg: usize, t: usize, der: usize, level: usize },
    DroopProductP { mg: usize, t: usize, der: usize },
    DroopProductQ { mg: usize, t: usize, der: usize },
    BuyP { mg: usize, t: usize, link: usize },
    SellP { mg: usize, t: usize, link: usize },
    BuyQ { mg: usize, t: usize, link: usize },
    SellQ { mg: usize, t: usize, link: usize },
    Buying { mg: usize, t: usize, link: usize },
}

impl VariableMap {
    pub fn mg(&self, mg: usize) -> Option<&MgVars> {
        self.mgs.iter().find(|m| m.mg == mg)
    }

    pub fn lookup(&self, sym: Symbol) -> Option<VarId> {
        use Symbol::*;
        let (mg, t) = match sym {
            GenP { mg, t, .. }
            | GenQ { mg, t, .. }
            | GenOn { mg, t, .. }
            | Charge { mg, t, .. }
            | Discharge { mg, t, .. }
            | Charging { mg, t, .. }
            | ShedP { mg, t, .. }
            | ShedQ { mg, t, .. }
            | FlowP { mg, t, .. }
            | FlowQ { mg, t, .. }
            | Voltage { mg, t, .. }
            | Frequency { mg, t }
            | DroopSelectorP { mg, t, .. }
            | DroopSelectorQ { mg, t, .. }
            | DroopProductP { mg, t, .. }
            | DroopProductQ { mg, t, .. }
            | BuyP { mg, t, .. }
            | SellP { mg, t, .. }
            | BuyQ { mg, t, .. }
            | SellQ { mg, t, .. }
            | Buying { mg, t, .. } => (mg, t),
        };
        let pv = self.mg(mg)?.periods.get(t)?;
        let der = |d: usize| pv.ders.get(d).and_then(|x| x.as_ref());
        let exch = |k: usize| pv.exchange.iter().find(|e| e.link == k);
        match sym {
            GenP { der: d, .. } => der(d).map(|v| v.p),
            GenQ { der: d, .. } => der(d).map(|v| v.q),
            GenOn { der: d, .. } => der(d).map(|v| v.u),
            Charge { battery, .. } => pv.batteries.get(battery).map(|b| b.ch),
            Discharge { battery, .. } => pv.batteries.get(battery).map(|b| b.dch),
            Charging { battery, .. } => pv.batteries.get(battery).map(|b| b.u_ch),
            ShedP { bus, .. } => pv.buses.get(bus).map(|b| b.shed_p),
            ShedQ { bus, .. } => pv.buses.get(bus).map(|b| b.shed_q),
            Voltage { bus, .. } => pv.buses.get(bus).map(|b| b.v),
            FlowP { line, .. } => pv.lines.get(line).map(|l| l.p),
            FlowQ { line, .. } => pv.lines.get(line).map(|l| l.q),
            Frequency { .. } => Some(pv.freq),
            DroopSelectorP { der: d, level, .. } => {
                der(d).and_then(|v| v.droop_p.product.selectors.get(level).copied())
            }
            DroopSelectorQ { der: d, level, .. } => der(d)
                .and_then(|v| v.droop_q.as_ref())
                .and_then(|q| q.product.selectors.get(level).copied()),
            DroopProductP { der: d, .. } => der(d).map(|v| v.droop_p.product.output),
            DroopProductQ { der: d, .. } => {
                der(d).and_then(|v| v.droop_q.as_ref()).map(|q| q.product.output)
            }
            BuyP { link, .. } => exch(link).map(|e| e.buy_p),
            SellP { link, .. } => exch(link).map(|e| e.sell_p),
            BuyQ { link, .. } => exch(link).map(|e| e.buy_q),
            SellQ { link, .. } => exch(link).map(|e| e.sell_q),
            Buying { link, .. } => exch(link).map(|e| e.u_buy),
        }
    }
}

fn model_err(family: &'static str, entity: String, message: impl Into<String>) -> BuildError {
    BuildError::Model { family, entity, message: message.into() }
}

/// Create the f–P (and, where the unit has reactive range, V–Q) droop terms
/// of dispatchable unit `der` in period `t`.
pub fn build_droop_terms(
    model: &mut MilpModel,
    case: &NetworkCase,
    mg: usize,
    der: usize,
    t: usize,
    freq: VarId,
    voltage: VarId,
) -> Result<(DroopTerm, Option<DroopTerm>), BuildError> {
    let grid = &case.microgrids[mg];
    let d = &grid.ders[der];
    let prefix = format!("{}:t{}:{}", grid.id, t, d.id);
    let spec = d
        .droop
        .as_ref()
        .ok_or_else(|| model_err("droop", prefix.clone(), "dispatchable unit has no droop specification"))?;
    let base = case.base_kw();
    let kp: Vec<f64> = spec.mp_grid().iter().map(|m| 1.0 / m).collect();
    let p_scale = case.system.droop_p_kw_per_unit / base;
    let p_cap = spec.contribution_frac * d.p_max.abs();
    let droop_p = droop_term(model, freq, &kp, grid.f_ref_hz, p_scale, p_cap, &format!("{prefix}:dp"))?;
    let droop_q = if d.has_reactive_range() && (d.kind != DerKind::FC || case.system.fc_reactive) {
        let bus = grid.bus_index(&d.bus).expect("validated bus");
        let kq: Vec<f64> = spec.mq_grid().iter().map(|m| 1.0 / m).collect();
        let q_scale = case.system.droop_q_kvar_per_unit / base;
        let q_cap = spec.contribution_frac * d.q_max.abs().max(d.q_min.abs());
        let v_ref = grid.buses[bus].v_ref_pu;
        Some(droop_term(model, voltage, &kq, v_ref, q_scale, q_cap, &format!("{prefix}:dq"))?)
    } else {
        None
    };
    Ok((droop_p, droop_q))
}

fn droop_term(
    model: &mut MilpModel,
    factor: VarId,
    k: &[f64],
    reference: f64,
    scale: f64,
    cap: f64,
    name: &str,
) -> Result<DroopTerm, BuildError> {
    // the cap |scale·k·(reference − factor)| <= cap bounds the factor per level
    let level_bounds: Vec<(f64, f64)> = k
        .iter()
        .map(|&kl| {
            let gain = (scale * kl).abs();
            if gain > 0.0 {
                (reference - cap / gain, reference + cap / gain)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
        })
        .collect();
    let product = linearize_integer_product_bounded(model, factor, k, Some(&level_bounds), name)?;
    let mut term = LinExpr::new();
    for (&w, &kl) in product.selectors.iter().zip(k) {
        term.add(w, kl * reference);
    }
    term.add(product.output, -1.0);
    let injection = model.continuous(format!("{name}:inj"), -cap, cap);
    let mut row = vec![(injection, 1.0)];
    row.extend(term.terms.iter().map(|&(v, a)| (v, -scale * a)));
    model.add_row(format!("{name}:law"), row, Sense::Eq, 0.0);
    Ok(DroopTerm { product, reference, term, injection, scale })
}

/// Add microgrid `mg`'s local variables, rows and cost terms to `model`.
pub fn add_microgrid(model: &mut MilpModel, case: &NetworkCase, mg: usize) -> Result<MgVars, BuildError> {
    let grid = &case.microgrids[mg];
    let topo = grid
        .topology()
        .map_err(|e| model_err("network", format!("microgrid {}", grid.id), e.to_string()))?;
    let sys = &case.system;
    let shed_cost = case.energy_cost(case.prices.shed_price);
    let incident = case.incident_links(mg);
    let start = model.num_vars();
    let mut periods = Vec::with_capacity(case.horizon());
    for t in 0..case.horizon() {
        let pre = format!("{}:t{}", grid.id, t);
        let freq = model.continuous(format!("{pre}:f"), sys.f_min_hz, sys.f_max_hz);
        let buses: Vec<BusVars> = grid
            .buses
            .iter()
            .map(|b| {
                let v = model.continuous(format!("{pre}:{}:v", b.id), b.v_min_pu, b.v_max_pu);
                let shed_p = model.continuous(format!("{pre}:{}:shed_p", b.id), 0.0, b.shed_p_max);
                let shed_q = model.continuous(format!("{pre}:{}:shed_q", b.id), 0.0, b.shed_q_max);
                model.set_objective(shed_p, shed_cost);
                model.set_objective(shed_q, shed_cost);
                BusVars { v, shed_p, shed_q }
            })
            .collect();
        let lines: Vec<LineVars> = grid
            .lines
            .iter()
            .enumerate()
            .map(|(li, l)| {
                let (a, b) = topo.oriented[li];
                let name = format!("{pre}:{}-{}", grid.buses[a].id, grid.buses[b].id);
                let (pl, ql) = if sys.bidirectional_flows { (-l.p_flow_max, -l.q_flow_max) } else { (0.0, 0.0) };
                let p = model.continuous(format!("{name}:pf"), pl, l.p_flow_max);
                let q = model.continuous(format!("{name}:qf"), ql, l.q_flow_max);
                LineVars { p, q }
            })
            .collect();

        let mut ders = Vec::with_capacity(grid.ders.len());
        for (di, d) in grid.ders.iter().enumerate() {
            if !d.dispatchable() {
                ders.push(None);
                continue;
            }
            let name = format!("{pre}:{}", d.id);
            let u = model.binary(format!("{name}:u"));
            let p = model.continuous(format!("{name}:p"), d.p_min.min(0.0), d.p_max.max(0.0));
            model.set_objective(p, case.energy_cost(d.price(&case.prices)));
            model.add_row(format!("{name}:p_hi"), vec![(p, 1.0), (u, -d.p_max)], Sense::Le, 0.0);
            model.add_row(format!("{name}:p_lo"), vec![(p, 1.0), (u, -d.p_min)], Sense::Ge, 0.0);
            let q = model.continuous(format!("{name}:q"), d.q_min.min(0.0), d.q_max.max(0.0));
            model.add_row(format!("{name}:q_hi"), vec![(q, 1.0), (u, -d.q_max)], Sense::Le, 0.0);
            model.add_row(format!("{name}:q_lo"), vec![(q, 1.0), (u, -d.q_min)], Sense::Ge, 0.0);
            let bus = grid.bus_index(&d.bus).expect("validated bus");
            let (droop_p, droop_q) = build_droop_terms(model, case, mg, di, t, freq, buses[bus].v)?;
            ders.push(Some(DerVars { p, q, u, droop_p, droop_q }));
        }

        let batteries: Vec<BatteryVars> = grid
            .batteries
            .iter()
            .map(|b| {
                let name = format!("{pre}:{}", b.id);
                let ch = model.continuous(format!("{name}:ch"), 0.0, b.ch_max);
                let dch = model.continuous(format!("{name}:dch"), 0.0, b.dch_max);
                let u_ch = model.binary(format!("{name}:u_ch"));
                // charging earns its price, discharging costs its price
                model.set_objective(ch, -case.energy_cost(b.ch_price));
                model.set_objective(dch, case.energy_cost(b.dch_price));
                model.add_row(format!("{name}:ch_hi"), vec![(ch, 1.0), (u_ch, -b.ch_max)], Sense::Le, 0.0);
                model.add_row(format!("{name}:dch_hi"), vec![(dch, 1.0), (u_ch, b.dch_max)], Sense::Le, b.dch_max);
                BatteryVars { ch, dch, u_ch }
            })
            .collect();

        let mut exchange = Vec::with_capacity(incident.len());
        for &(k, side_a) in &incident {
            let link = &case.interfaces[k];
            let (pb, ps, qb, qs) = if side_a {
                (link.p_buy_max, link.p_sell_max, link.q_buy_max, link.q_sell_max)
            } else {
                (link.p_sell_max, link.p_buy_max, link.q_sell_max, link.q_buy_max)
            };
            let name = format!("{pre}:x{k}");
            let buy_p = model.continuous(format!("{name}:buy_p"), 0.0, pb);
            let sell_p = model.continuous(format!("{name}:sell_p"), 0.0, ps);
            let buy_q = model.continuous(format!("{name}:buy_q"), 0.0, qb);
            let sell_q = model.continuous(format!("{name}:sell_q"), 0.0, qs);
            let u_buy = model.binary(format!("{name}:u_buy"));
            model.add_row(format!("{name}:buy_p"), vec![(buy_p, 1.0), (u_buy, -pb)], Sense::Le, 0.0);
            model.add_row(format!("{name}:sell_p"), vec![(sell_p, 1.0), (u_buy, ps)], Sense::Le, ps);
            model.add_row(format!("{name}:buy_q"), vec![(buy_q, 1.0), (u_buy, -qb)], Sense::Le, 0.0);
            model.add_row(format!("{name}:sell_q"), vec![(sell_q, 1.0), (u_buy, qs)], Sense::Le, qs);
            exchange.push(ExchangeVars { link: k, side_a, buy_p, sell_p, buy_q, sell_q, u_buy });
        }

        // linear voltage drop along each parent -> child line
        for (li, l) in grid.lines.iter().enumerate() {
            let (a, b) = topo.oriented[li];
            let v0 = grid.pcc_voltage_pu;
            model.add_row(
                format!("{pre}:{}-{}:vdrop", grid.buses[a].id, grid.buses[b].id),
                vec![
                    (buses[b].v, 1.0),
                    (buses[a].v, -1.0),
                    (lines[li].p, l.r_pu / v0),
                    (lines[li].q, l.x_pu / v0),
                ],
                Sense::Eq,
                0.0,
            );
        }

        // nodal balances
        for (n, bus) in grid.buses.iter().enumerate() {
            let mut rp = vec![(buses[n].shed_p, 1.0)];
            let mut rq = vec![(buses[n].shed_q, 1.0)];
            let mut const_p = 0.0;
            let mut const_q = 0.0;
            for (di, d) in grid.ders.iter().enumerate() {
                if d.bus != bus.id {
                    continue;
                }
                match &ders[di] {
                    Some(v) => {
                        rp.push((v.p, 1.0));
                        rp.push((v.droop_p.injection, 1.0));
                        rq.push((v.q, 1.0));
                        if let Some(dq) = &v.droop_q {
                            rq.push((dq.injection, 1.0));
                        }
                    }
                    None => {
                        let prof = d.profile.as_ref().expect("validated profile");
                        const_p += prof.p[t];
                        const_q += prof.q[t];
                    }
                }
            }
            for (bi, b) in grid.batteries.iter().enumerate() {
                if b.bus == bus.id {
                    rp.push((batteries[bi].dch, 1.0));
                    rp.push((batteries[bi].ch, -1.0));
                }
            }
            if let Some(li) = topo.inflow[n] {
                rp.push((lines[li].p, 1.0));
                rq.push((lines[li].q, 1.0));
            }
            for &li in &topo.outflows[n] {
                rp.push((lines[li].p, -1.0));
                rq.push((lines[li].q, -1.0));
            }
            for x in &exchange {
                let link = &case.interfaces[x.link];
                let at = if x.side_a { &link.bus_a } else { &link.bus_b };
                if *at == bus.id {
                    rp.push((x.buy_p, 1.0));
                    rp.push((x.sell_p, -1.0));
                    rq.push((x.buy_q, 1.0));
                    rq.push((x.sell_q, -1.0));
                }
            }
            let rhs_p = grid.load_p(n, t) - const_p;
            let rhs_q = grid.load_q(n, t) - const_q;
            if !rhs_p.is_finite() || !rhs_q.is_finite() {
                return Err(model_err("nodal balance", format!("{pre}:{}", bus.id), "non-finite demand"));
            }
            model.add_row(format!("{pre}:{}:bal_p", bus.id), rp, Sense::Eq, rhs_p);
            model.add_row(format!("{pre}:{}:bal_q", bus.id), rq, Sense::Eq, rhs_q);
        }
        periods.push(PeriodVars { ders, batteries, buses, lines, freq, exchange });
    }
    Ok(MgVars { mg, var_range: start..model.num_vars(), periods })
}

/// The coupled problem over all microgrids.
pub fn build_centralized(case: &NetworkCase) -> Result<(MilpModel, VariableMap), BuildError> {
    let mut model = MilpModel::new(case.system.name.clone());
    let mut map = VariableMap::default();
    for mg in 0..case.microgrids.len() {
        map.mgs.push(add_microgrid(&mut model, case, mg)?);
    }
    for (k, link) in case.interfaces.iter().enumerate() {
        let a = case.mg_index(&link.mg_a).ok_or_else(|| BuildError::UnknownMicrogrid(link.mg_a.clone()))?;
        let b = case.mg_index(&link.mg_b).ok_or_else(|| BuildError::UnknownMicrogrid(link.mg_b.clone()))?;
        for t in 0..case.horizon() {
            let xa = *map.mgs[a]
                .exchange(t, k)
                .ok_or_else(|| model_err("coupling", format!("interface {k}"), "missing exchange on side a"))?;
            let xb = *map.mgs[b]
                .exchange(t, k)
                .ok_or_else(|| model_err("coupling", format!("interface {k}"), "missing exchange on side b"))?;
            let pre = format!("t{t}:x{k}");
            model.add_row(format!("{pre}:ab_p"), vec![(xa.buy_p, 1.0), (xb.sell_p, -1.0)], Sense::Eq, 0.0);
            model.add_row(format!("{pre}:ba_p"), vec![(xb.buy_p, 1.0), (xa.sell_p, -1.0)], Sense::Eq, 0.0);
            model.add_row(format!("{pre}:ab_q"), vec![(xa.buy_q, 1.0), (xb.sell_q, -1.0)], Sense::Eq, 0.0);
            model.add_row(format!("{pre}:ba_q"), vec![(xb.buy_q, 1.0), (xa.sell_q, -1.0)], Sense::Eq, 0.0);
        }
    }
    Ok((model, map))
}

/// Microgrid `mg_id`'s Lagrangian subproblem at multipliers `lambda`:
/// local costs plus `λ·buy` on its buying directions and `−λ·sell` on the
/// directions where it sells.
pub fn build_subproblem(
    case: &NetworkCase,
    mg_id: &str,
    lambda: &Multipliers,
) -> Result<(MilpModel, VariableMap), BuildError> {
    let mg = case.mg_index(mg_id).ok_or_else(|| BuildError::UnknownMicrogrid(mg_id.to_string()))?;
    let mut model = MilpModel::new(format!("{}:{}", case.system.name, mg_id));
    let vars = add_microgrid(&mut model, case, mg)?;
    for (t, pv) in vars.periods.iter().enumerate() {
        for x in &pv.exchange {
            let (lp_buy, lq_buy) = lambda.get(t, buy_direction(x.link, x.side_a))?;
            let (lp_sell, lq_sell) = lambda.get(t, sell_direction(x.link, x.side_a))?;
            model.set_objective(x.buy_p, lp_buy);
            model.set_objective(x.buy_q, lq_buy);
            model.set_objective(x.sell_p, -lp_sell);
            model.set_objective(x.sell_q, -lq_sell);
        }
    }
    Ok((model, VariableMap { mgs: vec![vars] }))
}
