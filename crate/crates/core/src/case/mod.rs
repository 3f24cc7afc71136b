//! Networked-microgrid case description, file ingestion and validation.
//!
//! Case files are JSON. Power quantities may be given in kW/kVAR
//! (`"units": "kw"`) or per unit (`"units": "pu"`); after loading every
//! power quantity is per unit on `power_base_mva` and `units` reads `"pu"`.
//! Prices stay in $/kWh.

mod bundled;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundled::{bundled_case, bundled_names, bundled_source, generate};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed case file: {0}")]
    Parse(String),
    #[error("invalid {entity}: {message}")]
    Validation { entity: String, message: String },
    #[error("microgrid {mg} is not radial: {detail}")]
    NonRadial { mg: String, detail: String },
}

fn invalid(entity: impl Into<String>, message: impl Into<String>) -> CaseError {
    CaseError::Validation { entity: entity.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Kw,
    #[default]
    Pu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DerKind {
    MT,
    FC,
    CHP,
    WT,
    PV,
}

impl DerKind {
    pub fn is_dispatchable(self) -> bool {
        matches!(self, DerKind::MT | DerKind::FC | DerKind::CHP)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DerKind::MT => "MT",
            DerKind::FC => "FC",
            DerKind::CHP => "CHP",
            DerKind::WT => "WT",
            DerKind::PV => "PV",
        }
    }
}

fn default_f_min() -> f64 {
    59.5
}
fn default_f_max() -> f64 {
    60.5
}
fn default_droop_p() -> f64 {
    10.0
}
fn default_droop_q() -> f64 {
    100.0
}
fn default_period_hours() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemInfo {
    pub name: String,
    pub power_base_mva: f64,
    pub horizon: usize,
    #[serde(default = "default_period_hours")]
    pub period_hours: f64,
    #[serde(default)]
    pub units: Units,
    /// Allow line flows in both directions (`-max <= flow <= max`).
    /// When false flows are bounded below by zero in the parent-to-child
    /// orientation of each radial feeder.
    #[serde(default)]
    pub bidirectional_flows: bool,
    /// Real power (kW) injected per unit of `k_p·(f_ref - f)`.
    #[serde(default = "default_droop_p")]
    pub droop_p_kw_per_unit: f64,
    /// Reactive power (kVAR) injected per unit of `k_q·(|V_ref| - |V|)`.
    #[serde(default = "default_droop_q")]
    pub droop_q_kvar_per_unit: f64,
    #[serde(default = "default_f_min")]
    pub f_min_hz: f64,
    #[serde(default = "default_f_max")]
    pub f_max_hz: f64,
    /// Permit fuel cells with a nonzero reactive range.
    #[serde(default)]
    pub fc_reactive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTable {
    /// Load-shedding price, $/kWh (applied to real and reactive shedding).
    pub shed_price: f64,
    /// Default generation price per dispatchable kind, $/kWh.
    pub gen_price: BTreeMap<DerKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    pub v_ref_pu: f64,
    pub shed_p_max: f64,
    pub shed_q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub r_pu: f64,
    pub x_pu: f64,
    pub p_flow_max: f64,
    pub q_flow_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroopSpec {
    pub mp_min: f64,
    pub mp_max: f64,
    pub mp_step: f64,
    pub mq_min: f64,
    pub mq_max: f64,
    pub mq_step: f64,
    /// Cap on each droop injection as a fraction of the unit's capacity.
    pub contribution_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Der {
    pub id: String,
    pub kind: DerKind,
    pub bus: String,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Overrides the kind's default price from the price table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_price: Option<f64>,
    /// Available output of renewable units per period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droop: Option<DroopSpec>,
}

impl Der {
    pub fn dispatchable(&self) -> bool {
        self.kind.is_dispatchable()
    }

    pub fn price(&self, prices: &PriceTable) -> f64 {
        self.gen_price.or_else(|| prices.gen_price.get(&self.kind).copied()).unwrap_or(0.0)
    }

    /// Whether the unit can move reactive power at all.
    pub fn has_reactive_range(&self) -> bool {
        self.q_max > self.q_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Battery {
    pub id: String,
    pub bus: String,
    pub ch_max: f64,
    pub dch_max: f64,
    pub ch_price: f64,
    pub dch_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microgrid {
    pub id: String,
    pub pcc_voltage_pu: f64,
    pub f_ref_hz: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub ders: Vec<Der>,
    #[serde(default)]
    pub batteries: Vec<Battery>,
    /// Per-bus demand profiles keyed by bus id; buses absent here have none.
    #[serde(default)]
    pub loads: BTreeMap<String, Profile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceLink {
    pub mg_a: String,
    pub mg_b: String,
    pub bus_a: String,
    pub bus_b: String,
    /// Limits from `mg_a`'s point of view; `mg_b` sees them mirrored.
    pub p_buy_max: f64,
    pub p_sell_max: f64,
    pub q_buy_max: f64,
    pub q_sell_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub system: SystemInfo,
    pub prices: PriceTable,
    pub microgrids: Vec<Microgrid>,
    #[serde(default)]
    pub interfaces: Vec<InterfaceLink>,
}

/// Radial orientation of one microgrid's feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub root: usize,
    /// For each line, (parent bus index, child bus index).
    pub oriented: Vec<(usize, usize)>,
    /// For each bus, the index of the line feeding it (None at the root).
    pub inflow: Vec<Option<usize>>,
    /// For each bus, the lines leaving it toward its children.
    pub outflows: Vec<Vec<usize>>,
}

/// Discrete droop-coefficient levels `min + l·step`, `l = 0..=D`.
pub fn droop_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let d = grid_steps(min, max, step).unwrap_or(0);
    (0..=d).map(|l| if l == d { max } else { min + l as f64 * step }).collect()
}

fn grid_steps(min: f64, max: f64, step: f64) -> Option<usize> {
    if min == max {
        return Some(0);
    }
    if !(step > 0.0) || max < min {
        return None;
    }
    let ratio = (max - min) / step;
    let d = ratio.round();
    if (ratio - d).abs() <= 1e-9 * d.max(1.0) {
        Some(d as usize)
    } else {
        None
    }
}

impl DroopSpec {
    pub fn mp_grid(&self) -> Vec<f64> {
        droop_grid(self.mp_min, self.mp_max, self.mp_step)
    }

    pub fn mq_grid(&self) -> Vec<f64> {
        droop_grid(self.mq_min, self.mq_max, self.mq_step)
    }

    /// Same ranges resampled to at most `levels` evenly spaced values.
    pub fn coarsened(&self, levels: usize) -> DroopSpec {
        let levels = levels.max(1);
        let resample = |min: f64, max: f64, step: f64| -> (f64, f64, f64) {
            let d = grid_steps(min, max, step).unwrap_or(0);
            if d < levels {
                (min, max, step)
            } else if levels == 1 {
                (min, min, step)
            } else {
                (min, max, (max - min) / (levels - 1) as f64)
            }
        };
        let (mp_min, mp_max, mp_step) = resample(self.mp_min, self.mp_max, self.mp_step);
        let (mq_min, mq_max, mq_step) = resample(self.mq_min, self.mq_max, self.mq_step);
        DroopSpec { mp_min, mp_max, mp_step, mq_min, mq_max, mq_step, ..self.clone() }
    }
}

impl Microgrid {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn load_p(&self, bus: usize, t: usize) -> f64 {
        self.loads.get(&self.buses[bus].id).map_or(0.0, |l| l.p[t])
    }

    pub fn load_q(&self, bus: usize, t: usize) -> f64 {
        self.loads.get(&self.buses[bus].id).map_or(0.0, |l| l.q[t])
    }

    /// Orient the feeder away from the first bus. Fails when the line set
    /// has a cycle or leaves a bus unreachable.
    pub fn topology(&self) -> Result<Topology, CaseError> {
        let n = self.buses.len();
        if n == 0 {
            return Err(invalid(format!("microgrid {}", self.id), "has no buses"));
        }
        if self.lines.len() != n - 1 {
            let detail = if self.lines.len() >= n {
                format!("{} lines on {} buses form a cycle", self.lines.len(), n)
            } else {
                format!("{} lines cannot connect {} buses", self.lines.len(), n)
            };
            return Err(CaseError::NonRadial { mg: self.id.clone(), detail });
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (li, line) in self.lines.iter().enumerate() {
            let a = self.bus_index(&line.from).ok_or_else(|| {
                invalid(format!("line {}-{} in {}", line.from, line.to, self.id), "unknown from-bus")
            })?;
            let b = self.bus_index(&line.to).ok_or_else(|| {
                invalid(format!("line {}-{} in {}", line.from, line.to, self.id), "unknown to-bus")
            })?;
            adj[a].push((b, li));
            adj[b].push((a, li));
        }
        let mut oriented = vec![(usize::MAX, usize::MAX); self.lines.len()];
        let mut inflow = vec![None; n];
        let mut outflows = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, li) in &adj[u] {
                if inflow[u] == Some(li) {
                    continue;
                }
                if seen[v] {
                    return Err(CaseError::NonRadial {
                        mg: self.id.clone(),
                        detail: format!("cycle through bus {}", self.buses[v].id),
                    });
                }
                seen[v] = true;
                oriented[li] = (u, v);
                inflow[v] = Some(li);
                outflows[u].push(li);
                queue.push_back(v);
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(CaseError::NonRadial {
                mg: self.id.clone(),
                detail: format!("bus {} is disconnected", self.buses[j].id),
            });
        }
        Ok(Topology { root: 0, oriented, inflow, outflows })
    }
}

impl NetworkCase {
    pub fn horizon(&self) -> usize {
        self.system.horizon
    }

    pub fn base_kw(&self) -> f64 {
        self.system.power_base_mva * 1000.0
    }

    pub fn mg_index(&self, id: &str) -> Option<usize> {
        self.microgrids.iter().position(|m| m.id == id)
    }

    /// Dollar cost of one p.u. of power held for one period at `price` $/kWh.
    pub fn energy_cost(&self, price: f64) -> f64 {
        price * self.base_kw() * self.system.period_hours
    }

    /// Links incident to microgrid `mg`, as (link index, mg is side a).
    pub fn incident_links(&self, mg: usize) -> Vec<(usize, bool)> {
        let id = &self.microgrids[mg].id;
        self.interfaces
            .iter()
            .enumerate()
            .filter_map(|(k, l)| {
                if &l.mg_a == id {
                    Some((k, true))
                } else if &l.mg_b == id {
                    Some((k, false))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Number of directed interfaces (two per link).
    pub fn directed_count(&self) -> usize {
        2 * self.interfaces.len()
    }

    /// Typical dispatchable energy cost in $ per p.u.-period, used to scale
    /// multiplier steps and penalties.
    pub fn cost_scale(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for mg in &self.microgrids {
            for d in mg.ders.iter().filter(|d| d.dispatchable()) {
                sum += self.energy_cost(d.price(&self.prices));
                n += 1;
            }
        }
        if n == 0 {
            self.energy_cost(self.prices.shed_price).max(1.0)
        } else {
            sum / n as f64
        }
    }

    pub fn from_json_str(text: &str) -> Result<NetworkCase, CaseError> {
        let mut case: NetworkCase =
            serde_json::from_str(text).map_err(|e| CaseError::Parse(e.to_string()))?;
        case.normalize_units();
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    /// Convert every power quantity from kW/kVAR to per unit.
    fn normalize_units(&mut self) {
        if self.system.units == Units::Pu {
            return;
        }
        let s = 1.0 / self.base_kw();
        for mg in &mut self.microgrids {
            for b in &mut mg.buses {
                b.shed_p_max *= s;
                b.shed_q_max *= s;
            }
            for l in &mut mg.lines {
                l.p_flow_max *= s;
                l.q_flow_max *= s;
            }
            for d in &mut mg.ders {
                d.p_min *= s;
                d.p_max *= s;
                d.q_min *= s;
                d.q_max *= s;
                if let Some(p) = &mut d.profile {
                    p.p.iter_mut().for_each(|v| *v *= s);
                    p.q.iter_mut().for_each(|v| *v *= s);
                }
            }
            for b in &mut mg.batteries {
                b.ch_max *= s;
                b.dch_max *= s;
            }
            for l in mg.loads.values_mut() {
                l.p.iter_mut().for_each(|v| *v *= s);
                l.q.iter_mut().for_each(|v| *v *= s);
            }
        }
        for i in &mut self.interfaces {
            i.p_buy_max *= s;
            i.p_sell_max *= s;
            i.q_buy_max *= s;
            i.q_sell_max *= s;
        }
        self.system.units = Units::Pu;
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let sys = &self.system;
        let t = sys.horizon;
        if t < 1 {
            return Err(invalid("system", "horizon must be at least 1"));
        }
        if !(sys.power_base_mva > 0.0) {
            return Err(invalid("system", "power_base_mva must be positive"));
        }
        if !(sys.period_hours > 0.0) {
            return Err(invalid("system", "period_hours must be positive"));
        }
        if !(sys.f_min_hz < sys.f_max_hz) {
            return Err(invalid("system", "f_min_hz must be below f_max_hz"));
        }
        if sys.droop_p_kw_per_unit < 0.0 || sys.droop_q_kvar_per_unit < 0.0 {
            return Err(invalid("system", "droop scaling constants must be nonnegative"));
        }
        if self.prices.shed_price < 0.0 || self.prices.gen_price.values().any(|&p| p < 0.0) {
            return Err(invalid("prices", "prices must be nonnegative"));
        }
        if self.microgrids.is_empty() {
            return Err(invalid("case", "no microgrids"));
        }
        let mut mg_ids = BTreeSet::new();
        for mg in &self.microgrids {
            if !mg_ids.insert(mg.id.as_str()) {
                return Err(invalid(format!("microgrid {}", mg.id), "duplicate id"));
            }
            self.validate_mg(mg, t)?;
        }
        let mut pairs = BTreeSet::new();
        for (k, link) in self.interfaces.iter().enumerate() {
            let name = format!("interface {} ({}-{})", k, link.mg_a, link.mg_b);
            if link.mg_a == link.mg_b {
                return Err(invalid(name, "links a microgrid to itself"));
            }
            let a = self.mg_index(&link.mg_a).ok_or_else(|| invalid(&name, "unknown mg_a"))?;
            let b = self.mg_index(&link.mg_b).ok_or_else(|| invalid(&name, "unknown mg_b"))?;
            if self.microgrids[a].bus_index(&link.bus_a).is_none() {
                return Err(invalid(&name, format!("bus_a {} not in {}", link.bus_a, link.mg_a)));
            }
            if self.microgrids[b].bus_index(&link.bus_b).is_none() {
                return Err(invalid(&name, format!("bus_b {} not in {}", link.bus_b, link.mg_b)));
            }
            let limits = [link.p_buy_max, link.p_sell_max, link.q_buy_max, link.q_sell_max];
            if limits.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(invalid(&name, "exchange limits must be finite and nonnegative"));
            }
            if !pairs.insert((a.min(b), a.max(b))) {
                return Err(invalid(&name, "second link for the same microgrid pair"));
            }
        }
        Ok(())
    }

    fn validate_mg(&self, mg: &Microgrid, t: usize) -> Result<(), CaseError> {
        let mg_name = format!("microgrid {}", mg.id);
        if !(mg.pcc_voltage_pu > 0.0) {
            return Err(invalid(&mg_name, "pcc_voltage_pu must be positive"));
        }
        let mut bus_ids = BTreeSet::new();
        for b in &mg.buses {
            let name = format!("bus {} in {}", b.id, mg.id);
            if !bus_ids.insert(b.id.as_str()) {
                return Err(invalid(name, "duplicate bus id"));
            }
            if !(0.0 < b.v_min_pu && b.v_min_pu <= b.v_ref_pu && b.v_ref_pu <= b.v_max_pu) {
                return Err(invalid(name, "need 0 < v_min <= v_ref <= v_max"));
            }
            if !(b.shed_p_max >= 0.0 && b.shed_q_max >= 0.0) {
                return Err(invalid(name, "shedding limits must be nonnegative"));
            }
        }
        for l in &mg.lines {
            let name = format!("line {}-{} in {}", l.from, l.to, mg.id);
            if mg.bus_index(&l.from).is_none() || mg.bus_index(&l.to).is_none() {
                return Err(invalid(name, "endpoint is not a bus of this microgrid"));
            }
            if !(l.r_pu >= 0.0 && l.x_pu >= 0.0) {
                return Err(invalid(name, "impedance must be nonnegative"));
            }
            if !(l.p_flow_max > 0.0 && l.q_flow_max > 0.0) {
                return Err(invalid(name, "flow limits must be positive"));
            }
        }
        mg.topology()?;
        let mut der_ids = BTreeSet::new();
        for d in &mg.ders {
            let name = format!("DER {} in {}", d.id, mg.id);
            if !der_ids.insert(d.id.as_str()) {
                return Err(invalid(name, "duplicate DER id"));
            }
            if mg.bus_index(&d.bus).is_none() {
                return Err(invalid(name, format!("bus {} does not exist", d.bus)));
            }
            if !(d.p_min <= d.p_max && d.q_min <= d.q_max) {
                return Err(invalid(name, "minimum output exceeds maximum"));
            }
            if d.kind == DerKind::FC && !self.system.fc_reactive && (d.q_min != 0.0 || d.q_max != 0.0) {
                return Err(invalid(name, "fuel cells provide no reactive power"));
            }
            if d.dispatchable() {
                if d.profile.is_some() {
                    return Err(invalid(name, "dispatchable units take no profile"));
                }
                let Some(spec) = &d.droop else {
                    return Err(invalid(name, "dispatchable units need a droop specification"));
                };
                validate_droop(&name, spec)?;
                if d.gen_price.is_none() && !self.prices.gen_price.contains_key(&d.kind) {
                    return Err(invalid(name, "no generation price for this kind"));
                }
                if d.gen_price.is_some_and(|p| p < 0.0) {
                    return Err(invalid(name, "generation price must be nonnegative"));
                }
            } else {
                let Some(p) = &d.profile else {
                    return Err(invalid(name, "renewable units need a profile"));
                };
                if p.p.len() != t || p.q.len() != t {
                    return Err(invalid(name, format!("profile must have {t} entries")));
                }
            }
        }
        for b in &mg.batteries {
            let name = format!("battery {} in {}", b.id, mg.id);
            if mg.bus_index(&b.bus).is_none() {
                return Err(invalid(name, format!("bus {} does not exist", b.bus)));
            }
            if !(b.ch_max >= 0.0 && b.dch_max >= 0.0 && b.ch_price >= 0.0 && b.dch_price >= 0.0) {
                return Err(invalid(name, "limits and prices must be nonnegative"));
            }
        }
        for (bus, l) in &mg.loads {
            let name = format!("load at bus {} in {}", bus, mg.id);
            if mg.bus_index(bus).is_none() {
                return Err(invalid(name, "bus does not exist"));
            }
            if l.p.len() != t || l.q.len() != t {
                return Err(invalid(name, format!("profile must have {t} entries")));
            }
        }
        Ok(())
    }

    /// Keep the first `horizon` periods.
    pub fn with_horizon(&self, horizon: usize) -> NetworkCase {
        let mut c = self.clone();
        let h = horizon.clamp(1, self.system.horizon);
        c.system.horizon = h;
        for mg in &mut c.microgrids {
            for d in &mut mg.ders {
                if let Some(p) = &mut d.profile {
                    p.p.truncate(h);
                    p.q.truncate(h);
                }
            }
            for l in mg.loads.values_mut() {
                l.p.truncate(h);
                l.q.truncate(h);
            }
        }
        c
    }

    /// Single-period case taken from period `t`.
    pub fn period(&self, t: usize) -> NetworkCase {
        let mut c = self.clone();
        c.system.horizon = 1;
        let pick = |v: &mut Vec<f64>| *v = vec![v[t]];
        for mg in &mut c.microgrids {
            for d in &mut mg.ders {
                if let Some(p) = &mut d.profile {
                    pick(&mut p.p);
                    pick(&mut p.q);
                }
            }
            for l in mg.loads.values_mut() {
                pick(&mut l.p);
                pick(&mut l.q);
            }
        }
        c
    }

    /// Resample every droop grid to at most `levels` values.
    pub fn with_droop_levels(&self, levels: usize) -> NetworkCase {
        let mut c = self.clone();
        for mg in &mut c.microgrids {
            for d in &mut mg.ders {
                if let Some(spec) = &mut d.droop {
                    *spec = spec.coarsened(levels);
                }
            }
        }
        c
    }

    pub fn with_contribution_frac(&self, frac: f64) -> NetworkCase {
        let mut c = self.clone();
        for mg in &mut c.microgrids {
            for d in &mut mg.ders {
                if let Some(spec) = &mut d.droop {
                    spec.contribution_frac = frac;
                }
            }
        }
        c
    }

    /// Scale every load profile by `factor`.
    pub fn with_load_factor(&self, factor: f64) -> NetworkCase {
        let mut c = self.clone();
        for mg in &mut c.microgrids {
            for l in mg.loads.values_mut() {
                l.p.iter_mut().for_each(|v| *v *= factor);
                l.q.iter_mut().for_each(|v| *v *= factor);
            }
        }
        c
    }

    /// Case restricted to one microgrid, without interfaces.
    pub fn single_microgrid(&self, mg: usize) -> NetworkCase {
        let mut c = self.clone();
        c.microgrids = vec![self.microgrids[mg].clone()];
        c.interfaces.clear();
        c
    }
}

fn validate_droop(name: &str, s: &DroopSpec) -> Result<(), CaseError> {
    if !(s.mp_min > 0.0 && s.mp_max >= s.mp_min && s.mq_min > 0.0 && s.mq_max >= s.mq_min) {
        return Err(invalid(name, "droop ranges need 0 < min <= max"));
    }
    if grid_steps(s.mp_min, s.mp_max, s.mp_step).is_none() {
        return Err(invalid(name, "mp range is not a whole number of steps"));
    }
    if grid_steps(s.mq_min, s.mq_max, s.mq_step).is_none() {
        return Err(invalid(name, "mq range is not a whole number of steps"));
    }
    if !(s.contribution_frac > 0.0 && s.contribution_frac <= 1.0) {
        return Err(invalid(name, "contribution_frac must lie in (0, 1]"));
    }
    Ok(())
}

/// Load a case from a file path, or a bundled case by name.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    NetworkCase::from_json_str(&text)
}

/// Resolve `spec` as a bundled case name first, then as a file path.
pub fn resolve_case(spec: &str) -> Result<NetworkCase, CaseError> {
    match bundled_case(spec) {
        Some(c) => Ok(c),
        None => load_case(spec),
    }
}
