//! Bundled cases and the generators that produced them.
//!
//! Topology and unit ratings follow the published 33-bus data and the DER
//! table of the networked islanded case. Load, wind and solar profiles are
//! synthesized from fixed seeds: they are illustrative, not measured data.
//! `case123_9mg` is a synthetic 123-bus radial system (not the IEEE feeder
//! data) split into nine microgrids.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Battery, Bus, Der, DerKind, DroopSpec, InterfaceLink, Line, Microgrid, NetworkCase, PriceTable, Profile,
    SystemInfo, Units,
};

const CASE33: &str = include_str!("../../cases/case33_4mg.json");
const CASE123: &str = include_str!("../../cases/case123_9mg.json");
const MINI2: &str = include_str!("../../cases/case_mini2.json");

pub fn bundled_names() -> &'static [&'static str] {
    &["case33_4mg", "case123_9mg", "case_mini2"]
}

/// Raw committed JSON of a bundled case.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    match name {
        "case33_4mg" => Some(CASE33),
        "case123_9mg" => Some(CASE123),
        "case_mini2" => Some(MINI2),
        _ => None,
    }
}

/// Parse a bundled case by name; kW quantities come back in p.u.
pub fn bundled_case(name: &str) -> Option<NetworkCase> {
    let text = bundled_source(name)?;
    Some(NetworkCase::from_json_str(text).expect("bundled case is valid"))
}

/// Regenerate a bundled case in its committed (kW) form.
pub fn generate(name: &str) -> Option<NetworkCase> {
    match name {
        "case33_4mg" => Some(case33_4mg()),
        "case123_9mg" => Some(case123_9mg()),
        "case_mini2" => Some(case_mini2()),
        _ => None,
    }
}

fn r3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn standard_droop() -> DroopSpec {
    DroopSpec {
        mp_min: 0.02,
        mp_max: 0.2,
        mp_step: 0.0018,
        mq_min: 0.05,
        mq_max: 0.5,
        mq_step: 0.0045,
        contribution_frac: 0.2,
    }
}

fn prices() -> PriceTable {
    PriceTable {
        shed_price: 1.0,
        gen_price: BTreeMap::from([(DerKind::MT, 0.085), (DerKind::FC, 0.065), (DerKind::CHP, 0.075)]),
    }
}

/// Rated (p_max, q_max) in kW/kVAR per kind.
fn rating(kind: DerKind) -> (f64, f64) {
    match kind {
        DerKind::PV => (200.0, 80.0),
        DerKind::WT => (150.0, 60.0),
        DerKind::MT => (400.0, 200.0),
        DerKind::FC => (300.0, 0.0),
        DerKind::CHP => (400.0, 300.0),
    }
}

/// Daily load multiplier between roughly 0.45 and 0.85.
fn load_shape(h: usize) -> f64 {
    let x = h as f64;
    let morning = (-((x - 9.0) / 3.0).powi(2)).exp();
    let evening = (-((x - 19.0) / 2.5).powi(2)).exp();
    0.45 + 0.25 * morning + 0.40 * evening.max(0.6 * morning)
}

fn renewable_profile(kind: DerKind, horizon: usize, rng: &mut ChaCha8Rng) -> Profile {
    let (p_max, q_max) = rating(kind);
    let ratio = q_max / p_max;
    let p: Vec<f64> = (0..horizon)
        .map(|h| {
            let x = h as f64;
            let level = match kind {
                DerKind::PV => {
                    let sun = (std::f64::consts::PI * (x - 6.0) / 12.0).sin().max(0.0);
                    sun * rng.gen_range(0.75..1.0)
                }
                _ => {
                    let diurnal = 0.35 + 0.2 * (2.0 * std::f64::consts::PI * (x + 3.0) / 24.0).cos();
                    (diurnal + rng.gen_range(-0.1..0.1)).clamp(0.05, 0.9)
                }
            };
            r3(p_max * level)
        })
        .collect();
    let q = p.iter().map(|v| r3(v * ratio)).collect();
    Profile { p, q }
}

fn der(id: &str, kind: DerKind, bus: &str, horizon: usize, rng: &mut ChaCha8Rng) -> Der {
    let (p_max, q_max) = rating(kind);
    let dispatchable = kind.is_dispatchable();
    Der {
        id: id.to_string(),
        kind,
        bus: bus.to_string(),
        p_min: if dispatchable { 0.1 * p_max } else { 0.0 },
        p_max,
        q_min: if dispatchable { -0.25 * q_max } else { 0.0 },
        q_max,
        gen_price: None,
        profile: (!dispatchable).then(|| renewable_profile(kind, horizon, rng)),
        droop: dispatchable.then(standard_droop),
    }
}

fn bus(id: &str, peak: (f64, f64)) -> Bus {
    Bus {
        id: id.to_string(),
        v_min_pu: 0.95,
        v_max_pu: 1.05,
        v_ref_pu: 1.0,
        shed_p_max: peak.0,
        shed_q_max: peak.1,
    }
}

fn line(from: &str, to: &str, r: f64, x: f64, limit: f64) -> Line {
    Line {
        from: from.to_string(),
        to: to.to_string(),
        r_pu: r,
        x_pu: x,
        p_flow_max: limit,
        q_flow_max: limit,
    }
}

fn load_profiles(base: &[(String, (f64, f64))], horizon: usize, rng: &mut ChaCha8Rng) -> BTreeMap<String, Profile> {
    base.iter()
        .filter(|(_, (p, q))| *p > 0.0 || *q > 0.0)
        .map(|(id, (p, q))| {
            let noise: Vec<f64> = (0..horizon).map(|_| rng.gen_range(-0.03..0.03)).collect();
            let m = |h: usize| (load_shape(h) + noise[h]).clamp(0.4, 0.9);
            let prof = Profile {
                p: (0..horizon).map(|h| r3(p * m(h))).collect(),
                q: (0..horizon).map(|h| r3(q * m(h))).collect(),
            };
            (id.clone(), prof)
        })
        .collect()
}

fn battery(id: &str, bus: &str, rating_kw: f64) -> Battery {
    Battery {
        id: id.to_string(),
        bus: bus.to_string(),
        ch_max: rating_kw,
        dch_max: rating_kw,
        ch_price: 0.01,
        dch_price: 0.02,
    }
}

fn link(a: &str, b: &str, bus_a: &str, bus_b: &str, p: f64, q: f64) -> InterfaceLink {
    InterfaceLink {
        mg_a: a.to_string(),
        mg_b: b.to_string(),
        bus_a: bus_a.to_string(),
        bus_b: bus_b.to_string(),
        p_buy_max: p,
        p_sell_max: p,
        q_buy_max: q,
        q_sell_max: q,
    }
}

/// Branch data of the 33-bus feeder: (from, to, r ohm, x ohm).
const FEEDER33: [(u32, u32, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
];

/// Bus demand of the 33-bus feeder in kW/kVAR, buses 2..=33.
const LOAD33: [(f64, f64); 32] = [
    (100.0, 60.0),
    (90.0, 40.0),
    (120.0, 80.0),
    (60.0, 30.0),
    (60.0, 20.0),
    (200.0, 100.0),
    (200.0, 100.0),
    (60.0, 20.0),
    (60.0, 20.0),
    (45.0, 30.0),
    (60.0, 35.0),
    (60.0, 35.0),
    (120.0, 80.0),
    (60.0, 10.0),
    (60.0, 20.0),
    (60.0, 20.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 40.0),
    (90.0, 50.0),
    (420.0, 200.0),
    (420.0, 200.0),
    (60.0, 25.0),
    (60.0, 25.0),
    (60.0, 20.0),
    (120.0, 70.0),
    (200.0, 600.0),
    (150.0, 70.0),
    (210.0, 100.0),
    (60.0, 40.0),
];

/// Base impedance of the 12.66 kV, 10 MVA feeder in ohms.
const Z_BASE_33: f64 = 12.66 * 12.66 / 10.0;

/// Demand at buses 34..=53, which extend the feeder.
const ADDED_BUS_LOAD: (f64, f64) = (40.0, 20.0);

fn build_mg(
    id: &str,
    bus_ids: &[u32],
    lines: Vec<Line>,
    ders: Vec<Der>,
    batteries: Vec<Battery>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Microgrid {
    let demand = |b: u32| -> (f64, f64) {
        match b {
            1 => (0.0, 0.0),
            2..=33 => LOAD33[(b - 2) as usize],
            _ => ADDED_BUS_LOAD,
        }
    };
    let buses: Vec<Bus> = bus_ids.iter().map(|&b| bus(&b.to_string(), demand(b))).collect();
    let base: Vec<(String, (f64, f64))> = bus_ids.iter().map(|&b| (b.to_string(), demand(b))).collect();
    Microgrid {
        id: id.to_string(),
        pcc_voltage_pu: 1.0,
        f_ref_hz: 60.0,
        buses,
        lines,
        ders,
        batteries,
        loads: load_profiles(&base, horizon, rng),
    }
}

/// The 33-bus system extended to 53 buses and split into four islanded
/// microgrids linked by three interfaces.
pub fn case33_4mg() -> NetworkCase {
    let horizon = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let limit = 2000.0;
    let feeder = |from: u32, to: u32| -> Line {
        let (_, _, r, x) = *FEEDER33.iter().find(|l| l.0 == from && l.1 == to).expect("feeder branch");
        line(&from.to_string(), &to.to_string(), r3_6(r / Z_BASE_33), r3_6(x / Z_BASE_33), limit)
    };
    let added = |from: u32, to: u32| line(&from.to_string(), &to.to_string(), 0.006, 0.01, limit);
    use DerKind::*;

    let mg1_buses: Vec<u32> = (1..=18).collect();
    let mg1_lines = (1..18).map(|b| feeder(b, b + 1)).collect();
    let mg1_ders = vec![
        der("PV2", PV, "2", horizon, &mut rng),
        der("WT5", WT, "5", horizon, &mut rng),
        der("CHP6", CHP, "6", horizon, &mut rng),
        der("WT7", WT, "7", horizon, &mut rng),
        der("WT14", WT, "14", horizon, &mut rng),
        der("CHP16", CHP, "16", horizon, &mut rng),
    ];
    let mg1 = build_mg("MG1", &mg1_buses, mg1_lines, mg1_ders, vec![battery("BAT1", "10", 100.0)], horizon, &mut rng);

    let mg2_buses: Vec<u32> = (19..=25).collect();
    let mg2_lines = vec![
        feeder(19, 20),
        feeder(20, 21),
        feeder(21, 22),
        added(19, 23),
        feeder(23, 24),
        feeder(24, 25),
    ];
    let mg2_ders = vec![
        der("FC19", FC, "19", horizon, &mut rng),
        der("CHP21", CHP, "21", horizon, &mut rng),
        der("MT24", MT, "24", horizon, &mut rng),
    ];
    let mg2 = build_mg("MG2", &mg2_buses, mg2_lines, mg2_ders, vec![battery("BAT2", "22", 100.0)], horizon, &mut rng);

    let mg3_buses: Vec<u32> = (26..=43).collect();
    let mut mg3_lines: Vec<Line> = (26..33).map(|b| feeder(b, b + 1)).collect();
    mg3_lines.extend((33..43).map(|b| added(b, b + 1)));
    let mg3_ders = vec![
        der("MT32", MT, "32", horizon, &mut rng),
        der("PV34", PV, "34", horizon, &mut rng),
        der("CHP37", CHP, "37", horizon, &mut rng),
        der("FC39", FC, "39", horizon, &mut rng),
        der("WT40", WT, "40", horizon, &mut rng),
    ];
    let mg3 = build_mg("MG3", &mg3_buses, mg3_lines, mg3_ders, vec![battery("BAT3", "30", 100.0)], horizon, &mut rng);

    let mg4_buses: Vec<u32> = (44..=53).collect();
    let mg4_lines = (44..53).map(|b| added(b, b + 1)).collect();
    let mg4_ders = vec![
        der("CHP44", CHP, "44", horizon, &mut rng),
        der("PV45", PV, "45", horizon, &mut rng),
        der("MT47", MT, "47", horizon, &mut rng),
        der("FC49", FC, "49", horizon, &mut rng),
        der("MT51", MT, "51", horizon, &mut rng),
        der("PV53", PV, "53", horizon, &mut rng),
    ];
    let mg4 = build_mg("MG4", &mg4_buses, mg4_lines, mg4_ders, vec![battery("BAT4", "50", 100.0)], horizon, &mut rng);

    NetworkCase {
        system: SystemInfo {
            name: "case33_4mg".to_string(),
            power_base_mva: 10.0,
            horizon,
            period_hours: 1.0,
            units: Units::Kw,
            bidirectional_flows: true,
            droop_p_kw_per_unit: 10.0,
            droop_q_kvar_per_unit: 100.0,
            f_min_hz: 59.5,
            f_max_hz: 60.5,
            fc_reactive: false,
        },
        prices: prices(),
        microgrids: vec![mg1, mg2, mg3, mg4],
        interfaces: vec![
            link("MG1", "MG2", "2", "19", 500.0, 300.0),
            link("MG1", "MG3", "6", "26", 500.0, 300.0),
            link("MG3", "MG4", "43", "44", 500.0, 300.0),
        ],
    }
}

fn r3_6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// A synthetic 123-bus radial system in nine microgrids.
pub fn case123_9mg() -> NetworkCase {
    let horizon = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let sizes = [14usize, 14, 14, 14, 14, 14, 13, 13, 13];
    let load_factor = [1.2, 0.7, 1.0, 1.3, 0.6, 1.1, 0.9, 1.25, 0.65];
    let mut microgrids = Vec::new();
    let mut next_bus = 1u32;
    for (m, &size) in sizes.iter().enumerate() {
        let ids: Vec<u32> = (next_bus..next_bus + size as u32).collect();
        next_bus += size as u32;
        let mut lines = Vec::new();
        for i in 1..size {
            let parent = rng.gen_range(i.saturating_sub(3)..i);
            let r = r3_6(rng.gen_range(0.003..0.012));
            let x = r3_6(r * rng.gen_range(0.8..1.6));
            lines.push(line(&ids[parent].to_string(), &ids[i].to_string(), r, x, 2000.0));
        }
        let base: Vec<(String, (f64, f64))> = ids
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let p = if i == 0 { 0.0 } else { (rng.gen_range(20.0f64..90.0) * load_factor[m]).round() };
                (b.to_string(), (p, (p * 0.5).round()))
            })
            .collect();
        let buses = base.iter().map(|(id, peak)| bus(id, *peak)).collect();
        let at = |i: usize| ids[i.min(size - 1)].to_string();
        use DerKind::*;
        let thermal = if m % 2 == 0 { MT } else { CHP };
        let renewable = if m % 2 == 0 { PV } else { WT };
        let mut ders = vec![
            der(&format!("{}{}", thermal.as_str(), ids[1]), thermal, &at(1), horizon, &mut rng),
            der(&format!("FC{}", ids[5]), FC, &at(5), horizon, &mut rng),
            der(&format!("{}{}", renewable.as_str(), ids[8]), renewable, &at(8), horizon, &mut rng),
        ];
        if m % 3 == 0 {
            ders.push(der(&format!("CHP{}", ids[11]), CHP, &at(11), horizon, &mut rng));
        }
        let batteries = vec![battery(&format!("BAT{}", m + 1), &at(3), 100.0)];
        microgrids.push(Microgrid {
            id: format!("MG{}", m + 1),
            pcc_voltage_pu: 1.0,
            f_ref_hz: 60.0,
            buses,
            lines,
            ders,
            batteries,
            loads: load_profiles(&base, horizon, &mut rng),
        });
    }
    let pairs = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (1, 4), (3, 6), (5, 8)];
    let interfaces = pairs
        .iter()
        .map(|&(a, b)| {
            let ma: &Microgrid = &microgrids[a - 1];
            let mb: &Microgrid = &microgrids[b - 1];
            let bus_a = ma.buses[ma.buses.len() - 1].id.clone();
            let bus_b = mb.buses[0].id.clone();
            link(&ma.id, &mb.id, &bus_a, &bus_b, 300.0, 150.0)
        })
        .collect();
    NetworkCase {
        system: SystemInfo {
            name: "case123_9mg".to_string(),
            power_base_mva: 10.0,
            horizon,
            period_hours: 1.0,
            units: Units::Kw,
            bidirectional_flows: true,
            droop_p_kw_per_unit: 10.0,
            droop_q_kvar_per_unit: 100.0,
            f_min_hz: 59.5,
            f_max_hz: 60.5,
            fc_reactive: false,
        },
        prices: prices(),
        microgrids,
        interfaces,
    }
}

/// Two three-bus microgrids over four periods, small enough for
/// exhaustive enumeration of its binaries.
pub fn case_mini2() -> NetworkCase {
    let horizon = 4;
    let shape = [0.6, 0.8, 1.0, 0.7];
    let prof = |p: f64, q: f64| Profile {
        p: shape.iter().map(|s| r3(p * s)).collect(),
        q: shape.iter().map(|s| r3(q * s)).collect(),
    };
    let droop = |levels: f64| DroopSpec {
        mp_min: 0.02,
        mp_max: 0.2,
        mp_step: 0.18 / (levels - 1.0),
        mq_min: 0.05,
        mq_max: 0.05,
        mq_step: 0.0045,
        contribution_frac: 0.2,
    };
    let chain = |ids: [&str; 3]| {
        vec![line(ids[0], ids[1], 0.006, 0.01, 1000.0), line(ids[1], ids[2], 0.006, 0.01, 1000.0)]
    };
    let mg1 = Microgrid {
        id: "MG1".to_string(),
        pcc_voltage_pu: 1.0,
        f_ref_hz: 60.0,
        buses: vec![bus("a1", (0.0, 0.0)), bus("a2", (80.0, 20.0)), bus("a3", (60.0, 15.0))],
        lines: chain(["a1", "a2", "a3"]),
        ders: vec![Der {
            id: "FC1".to_string(),
            kind: DerKind::FC,
            bus: "a1".to_string(),
            p_min: 30.0,
            p_max: 300.0,
            q_min: -20.0,
            q_max: 60.0,
            gen_price: None,
            profile: None,
            droop: Some(droop(3.0)),
        }],
        batteries: vec![battery("BAT1", "a1", 50.0)],
        loads: BTreeMap::from([("a2".to_string(), prof(80.0, 20.0)), ("a3".to_string(), prof(60.0, 15.0))]),
    };
    let mg2 = Microgrid {
        id: "MG2".to_string(),
        pcc_voltage_pu: 1.0,
        f_ref_hz: 60.0,
        buses: vec![bus("b1", (0.0, 0.0)), bus("b2", (150.0, 60.0)), bus("b3", (120.0, 50.0))],
        lines: chain(["b1", "b2", "b3"]),
        ders: vec![Der {
            id: "MT2".to_string(),
            kind: DerKind::MT,
            bus: "b1".to_string(),
            p_min: 40.0,
            p_max: 400.0,
            q_min: -50.0,
            q_max: 200.0,
            gen_price: None,
            profile: None,
            droop: Some(droop(3.0)),
        }],
        batteries: Vec::new(),
        loads: BTreeMap::from([("b2".to_string(), prof(150.0, 60.0)), ("b3".to_string(), prof(120.0, 50.0))]),
    };
    NetworkCase {
        system: SystemInfo {
            name: "case_mini2".to_string(),
            power_base_mva: 10.0,
            horizon,
            period_hours: 1.0,
            units: Units::Kw,
            bidirectional_flows: false,
            droop_p_kw_per_unit: 10.0,
            droop_q_kvar_per_unit: 100.0,
            f_min_hz: 59.5,
            f_max_hz: 60.5,
            fc_reactive: true,
        },
        prices: prices(),
        microgrids: vec![mg1, mg2],
        interfaces: vec![link("MG1", "MG2", "a1", "b1", 200.0, 100.0)],
    }
}
