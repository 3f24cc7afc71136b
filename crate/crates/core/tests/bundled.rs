use gridmesh_core::case::{bundled_case, bundled_names, bundled_source, generate, DerKind};

fn rendered(name: &str) -> String {
    let mut text = serde_json::to_string_pretty(&generate(name).unwrap()).unwrap();
    text.push('\n');
    text
}

/// Set GRIDMESH_REGEN=1 to rewrite the committed files from the generators.
#[test]
fn committed_cases_match_generators() {
    let regen = std::env::var("GRIDMESH_REGEN").is_ok_and(|v| v == "1");
    for name in bundled_names() {
        let text = rendered(name);
        if regen {
            let path = format!("{}/cases/{name}.json", env!("CARGO_MANIFEST_DIR"));
            std::fs::write(path, &text).unwrap();
        } else {
            assert_eq!(bundled_source(name).unwrap(), text, "{name} is stale; regenerate it");
        }
    }
}

#[test]
fn bundled_cases_load() {
    for name in bundled_names() {
        let case = bundled_case(name).unwrap();
        assert!(case.validate().is_ok(), "{name}");
    }
}

#[test]
fn case33_pv_ratings() {
    let case = bundled_case("case33_4mg").unwrap();
    assert_eq!(case.microgrids.len(), 4);
    let mut pv: Vec<(String, f64, f64)> = case
        .microgrids
        .iter()
        .flat_map(|m| m.ders.iter())
        .filter(|d| d.kind == DerKind::PV)
        .map(|d| (d.bus.clone(), d.p_max * case.base_kw(), d.q_max * case.base_kw()))
        .collect();
    pv.sort_by_key(|(b, _, _)| b.parse::<u32>().unwrap());
    let buses: Vec<&str> = pv.iter().map(|(b, _, _)| b.as_str()).collect();
    assert_eq!(buses, ["2", "34", "45", "53"]);
    for (_, p, q) in &pv {
        assert!((p - 200.0).abs() < 1e-9 && (q - 80.0).abs() < 1e-9);
    }
}

#[test]
fn case33_added_lines_use_fixed_impedance() {
    let case = bundled_case("case33_4mg").unwrap();
    let original: Vec<(u32, u32)> = vec![
        (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10), (10, 11), (11, 12),
        (12, 13), (13, 14), (14, 15), (15, 16), (16, 17), (17, 18), (2, 19), (19, 20), (20, 21),
        (21, 22), (3, 23), (23, 24), (24, 25), (6, 26), (26, 27), (27, 28), (28, 29), (29, 30),
        (30, 31), (31, 32), (32, 33),
    ];
    let mut added = 0;
    for mg in &case.microgrids {
        for l in &mg.lines {
            let key = (l.from.parse().unwrap(), l.to.parse().unwrap());
            if !original.contains(&key) {
                added += 1;
                assert_eq!((l.r_pu, l.x_pu), (0.006, 0.01), "{:?}", key);
            }
        }
    }
    assert_eq!(added, 20);
}

#[test]
fn case33_first_line_matches_feeder_data() {
    let case = bundled_case("case33_4mg").unwrap();
    let l = &case.microgrids[0].lines[0];
    let z_base = 12.66f64 * 12.66 / 10.0;
    assert!((l.r_pu - 0.0922 / z_base).abs() < 1e-6);
    assert!((l.x_pu - 0.0470 / z_base).abs() < 1e-6);
}

#[test]
fn mini2_binaries_per_period() {
    let case = bundled_case("case_mini2").unwrap();
    let (model, _) = gridmesh_core::builder::build_centralized(&case.period(0)).unwrap();
    let free = model
        .integer_vars()
        .filter(|v| model.var(*v).lower < model.var(*v).upper)
        .count();
    assert!(free <= 12, "{free} free binaries");
}
