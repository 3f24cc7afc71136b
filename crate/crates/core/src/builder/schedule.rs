//! Operating schedules extracted from solved models.

use serde::Serialize;

use super::{BuildError, MgVars, VariableMap};
use crate::case::NetworkCase;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExchangeSchedule {
    pub link: usize,
    pub buy_p: f64,
    pub sell_p: f64,
    pub buy_q: f64,
    pub sell_q: f64,
    pub buying: bool,
}

/// Decisions of one microgrid in one period, in p.u. Renewable entries of
/// `der_p`/`der_q` carry their profile values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodSchedule {
    pub der_p: Vec<f64>,
    pub der_q: Vec<f64>,
    pub der_on: Vec<bool>,
    pub droop_p: Vec<f64>,
    pub droop_q: Vec<f64>,
    /// Selected droop coefficients (None for units without that droop).
    pub mp: Vec<Option<f64>>,
    pub mq: Vec<Option<f64>>,
    pub bat_ch: Vec<f64>,
    pub bat_dch: Vec<f64>,
    pub voltage: Vec<f64>,
    pub shed_p: Vec<f64>,
    pub shed_q: Vec<f64>,
    /// Line flows in parent-to-child orientation.
    pub flow_p: Vec<f64>,
    pub flow_q: Vec<f64>,
    pub freq: f64,
    pub exchange: Vec<ExchangeSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgSchedule {
    pub id: String,
    pub periods: Vec<PeriodSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub mgs: Vec<MgSchedule>,
}

/// One long-format record of `schedule.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub t: usize,
    pub mg: String,
    pub entity: String,
    pub quantity: &'static str,
    pub value: f64,
}

fn mg_schedule(case: &NetworkCase, vars: &MgVars, x: &[f64]) -> MgSchedule {
    let grid = &case.microgrids[vars.mg];
    let periods = vars
        .periods
        .iter()
        .enumerate()
        .map(|(t, pv)| {
            let mut s = PeriodSchedule {
                der_p: Vec::new(),
                der_q: Vec::new(),
                der_on: Vec::new(),
                droop_p: Vec::new(),
                droop_q: Vec::new(),
                mp: Vec::new(),
                mq: Vec::new(),
                bat_ch: pv.batteries.iter().map(|b| x[b.ch.0]).collect(),
                bat_dch: pv.batteries.iter().map(|b| x[b.dch.0]).collect(),
                voltage: pv.buses.iter().map(|b| x[b.v.0]).collect(),
                shed_p: pv.buses.iter().map(|b| x[b.shed_p.0]).collect(),
                shed_q: pv.buses.iter().map(|b| x[b.shed_q.0]).collect(),
                flow_p: pv.lines.iter().map(|l| x[l.p.0]).collect(),
                flow_q: pv.lines.iter().map(|l| x[l.q.0]).collect(),
                freq: x[pv.freq.0],
                exchange: pv
                    .exchange
                    .iter()
                    .map(|e| ExchangeSchedule {
                        link: e.link,
                        buy_p: x[e.buy_p.0],
                        sell_p: x[e.sell_p.0],
                        buy_q: x[e.buy_q.0],
                        sell_q: x[e.sell_q.0],
                        buying: x[e.u_buy.0] > 0.5,
                    })
                    .collect(),
            };
            for (d, dv) in grid.ders.iter().zip(&pv.ders) {
                match dv {
                    Some(v) => {
                        s.der_p.push(x[v.p.0]);
                        s.der_q.push(x[v.q.0]);
                        s.der_on.push(x[v.u.0] > 0.5);
                        s.droop_p.push(x[v.droop_p.injection.0]);
                        let spec = d.droop.as_ref().expect("dispatchable droop");
                        s.mp.push(v.droop_p.product.selected(x).map(|l| spec.mp_grid()[l]));
                        match &v.droop_q {
                            Some(q) => {
                                s.droop_q.push(x[q.injection.0]);
                                s.mq.push(q.product.selected(x).map(|l| spec.mq_grid()[l]));
                            }
                            None => {
                                s.droop_q.push(0.0);
                                s.mq.push(None);
                            }
                        }
                    }
                    None => {
                        let prof = d.profile.as_ref().expect("renewable profile");
                        s.der_p.push(prof.p[t]);
                        s.der_q.push(prof.q[t]);
                        s.der_on.push(true);
                        s.droop_p.push(0.0);
                        s.droop_q.push(0.0);
                        s.mp.push(None);
                        s.mq.push(None);
                    }
                }
            }
            s
        })
        .collect();
    MgSchedule { id: grid.id.clone(), periods }
}

impl Schedule {
    /// Read every microgrid in `map` out of a solution vector.
    pub fn from_solution(case: &NetworkCase, map: &VariableMap, values: &[f64]) -> Schedule {
        Schedule { mgs: map.mgs.iter().map(|m| mg_schedule(case, m, values)).collect() }
    }

    /// Own generation, battery and shedding cost of microgrid `mg` in $.
    pub fn mg_cost(&self, case: &NetworkCase, mg: usize) -> f64 {
        let grid = &case.microgrids[mg];
        let shed = case.energy_cost(case.prices.shed_price);
        let mut total = 0.0;
        for p in &self.mgs[mg].periods {
            for (d, &v) in grid.ders.iter().zip(&p.der_p) {
                if d.dispatchable() {
                    total += case.energy_cost(d.price(&case.prices)) * v;
                }
            }
            for (b, (&ch, &dch)) in grid.batteries.iter().zip(p.bat_ch.iter().zip(&p.bat_dch)) {
                total += case.energy_cost(b.dch_price) * dch - case.energy_cost(b.ch_price) * ch;
            }
            total += shed * (p.shed_p.iter().sum::<f64>() + p.shed_q.iter().sum::<f64>());
        }
        total
    }

    pub fn total_cost(&self, case: &NetworkCase) -> f64 {
        (0..self.mgs.len()).map(|m| self.mg_cost(case, m)).sum()
    }

    /// Largest `|buy − sell|` over every directed interface and period.
    pub fn coupling_residual(&self, case: &NetworkCase) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, link) in case.interfaces.iter().enumerate() {
            let (Some(a), Some(b)) = (case.mg_index(&link.mg_a), case.mg_index(&link.mg_b)) else {
                continue;
            };
            for t in 0..case.horizon() {
                let xa = self.mgs[a].periods[t].exchange.iter().find(|e| e.link == k);
                let xb = self.mgs[b].periods[t].exchange.iter().find(|e| e.link == k);
                if let (Some(xa), Some(xb)) = (xa, xb) {
                    for r in [xa.buy_p - xb.sell_p, xb.buy_p - xa.sell_p, xa.buy_q - xb.sell_q, xb.buy_q - xa.sell_q] {
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst
    }

    /// Long-format records for `schedule.csv`.
    pub fn rows(&self, case: &NetworkCase) -> Vec<ScheduleRow> {
        let mut out = Vec::new();
        for (m, ms) in self.mgs.iter().enumerate() {
            let grid = &case.microgrids[m];
            for (t, p) in ms.periods.iter().enumerate() {
                let mut push = |entity: &str, quantity: &'static str, value: f64| {
                    out.push(ScheduleRow { t, mg: ms.id.clone(), entity: entity.to_string(), quantity, value });
                };
                push("mg", "freq_hz", p.freq);
                for (i, d) in grid.ders.iter().enumerate() {
                    push(&d.id, "p", p.der_p[i]);
                    push(&d.id, "q", p.der_q[i]);
                    if d.dispatchable() {
                        push(&d.id, "on", if p.der_on[i] { 1.0 } else { 0.0 });
                        push(&d.id, "droop_p", p.droop_p[i]);
                        push(&d.id, "droop_q", p.droop_q[i]);
                        if let Some(m) = p.mp[i] {
                            push(&d.id, "mp", m);
                        }
                        if let Some(m) = p.mq[i] {
                            push(&d.id, "mq", m);
                        }
                    }
                }
                for (i, b) in grid.batteries.iter().enumerate() {
                    push(&b.id, "ch", p.bat_ch[i]);
                    push(&b.id, "dch", p.bat_dch[i]);
                }
                for (i, b) in grid.buses.iter().enumerate() {
                    push(&b.id, "v", p.voltage[i]);
                    push(&b.id, "shed_p", p.shed_p[i]);
                    push(&b.id, "shed_q", p.shed_q[i]);
                }
                for (i, l) in grid.lines.iter().enumerate() {
                    let name = format!("{}-{}", l.from, l.to);
                    push(&name, "flow_p", p.flow_p[i]);
                    push(&name, "flow_q", p.flow_q[i]);
                }
                for x in &p.exchange {
                    let name = format!("link{}", x.link);
                    push(&name, "buy_p", x.buy_p);
                    push(&name, "sell_p", x.sell_p);
                    push(&name, "buy_q", x.buy_q);
                    push(&name, "sell_q", x.sell_q);
                }
            }
        }
        out
    }
}

/// Real and reactive nodal balance residuals (injections − demand) per
/// microgrid, period and bus.
pub fn flow_conservation_residual(
    case: &NetworkCase,
    schedule: &Schedule,
) -> Result<Vec<Vec<Vec<(f64, f64)>>>, BuildError> {
    if schedule.mgs.len() != case.microgrids.len() {
        return Err(BuildError::DimensionMismatch(format!(
            "schedule has {} microgrids, case has {}",
            schedule.mgs.len(),
            case.microgrids.len()
        )));
    }
    let mut out = Vec::with_capacity(case.microgrids.len());
    for (grid, ms) in case.microgrids.iter().zip(&schedule.mgs) {
        if ms.periods.len() != case.horizon() {
            return Err(BuildError::DimensionMismatch(format!(
                "microgrid {} has {} periods, expected {}",
                grid.id,
                ms.periods.len(),
                case.horizon()
            )));
        }
        let topo = grid
            .topology()
            .map_err(|e| BuildError::DimensionMismatch(e.to_string()))?;
        let mut per_t = Vec::with_capacity(case.horizon());
        for (t, p) in ms.periods.iter().enumerate() {
            let dims = [
                (p.der_p.len(), grid.ders.len(), "DER outputs"),
                (p.der_q.len(), grid.ders.len(), "DER outputs"),
                (p.droop_p.len(), grid.ders.len(), "droop injections"),
                (p.droop_q.len(), grid.ders.len(), "droop injections"),
                (p.bat_ch.len(), grid.batteries.len(), "battery decisions"),
                (p.bat_dch.len(), grid.batteries.len(), "battery decisions"),
                (p.shed_p.len(), grid.buses.len(), "bus decisions"),
                (p.shed_q.len(), grid.buses.len(), "bus decisions"),
                (p.flow_p.len(), grid.lines.len(), "line flows"),
                (p.flow_q.len(), grid.lines.len(), "line flows"),
            ];
            if let Some((got, want, what)) = dims.iter().find(|(g, w, _)| g != w) {
                return Err(BuildError::DimensionMismatch(format!(
                    "{} in {} period {t}: {got} entries, expected {want}",
                    what, grid.id
                )));
            }
            let mut res = vec![(0.0, 0.0); grid.buses.len()];
            for (n, r) in res.iter_mut().enumerate() {
                r.0 = p.shed_p[n] - grid.load_p(n, t);
                r.1 = p.shed_q[n] - grid.load_q(n, t);
            }
            for (i, d) in grid.ders.iter().enumerate() {
                let n = grid.bus_index(&d.bus).expect("validated bus");
                res[n].0 += p.der_p[i] + p.droop_p[i];
                res[n].1 += p.der_q[i] + p.droop_q[i];
            }
            for (i, b) in grid.batteries.iter().enumerate() {
                let n = grid.bus_index(&b.bus).expect("validated bus");
                res[n].0 += p.bat_dch[i] - p.bat_ch[i];
            }
            for (li, &(from, to)) in topo.oriented.iter().enumerate() {
                res[to].0 += p.flow_p[li];
                res[to].1 += p.flow_q[li];
                res[from].0 -= p.flow_p[li];
                res[from].1 -= p.flow_q[li];
            }
            for x in &p.exchange {
                let link = &case.interfaces[x.link];
                let bus = if link.mg_a == grid.id { &link.bus_a } else { &link.bus_b };
                let n = grid.bus_index(bus).ok_or_else(|| {
                    BuildError::DimensionMismatch(format!("interface {} bus not in {}", x.link, grid.id))
                })?;
                res[n].0 += x.buy_p - x.sell_p;
                res[n].1 += x.buy_q - x.sell_q;
            }
            per_t.push(res);
        }
        out.push(per_t);
    }
    Ok(out)
}
