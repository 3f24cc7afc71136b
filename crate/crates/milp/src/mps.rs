//! Fixed-column MPS export for cross-checking models with external solvers.
//!
//! Names are replaced by `R<i>` / `C<j>` so they fit the 8-character fields;
//! the original names are emitted as comment lines at the top.

use std::fmt::Write;

use crate::model::{MilpModel, Sense, VarKind};

/// Render a number into at most 12 characters, preferring the shortest
/// round-trip representation.
fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        return s;
    }
    for prec in (1..=6).rev() {
        let s = format!("{v:.prec$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.0e}")
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str, f5: &str, f6: &str) {
    let mut s = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}");
    if !f5.is_empty() {
        let _ = write!(s, "   {f5:<8}  {f6:>12}");
    }
    out.push_str(s.trim_end());
    out.push('\n');
}

pub fn to_mps(model: &MilpModel) -> String {
    let mut out = String::new();
    for (i, r) in model.rows.iter().enumerate() {
        let _ = writeln!(out, "* R{i} {}", r.name);
    }
    for (j, v) in model.vars.iter().enumerate() {
        let _ = writeln!(out, "* C{j} {}", v.name);
    }
    let name: String = model.name.chars().filter(|c| !c.is_whitespace()).take(8).collect();
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n");
    out.push_str(" N  COST\n");
    for (i, r) in model.rows.iter().enumerate() {
        let s = match r.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {s}  R{i}");
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (i, r) in model.rows.iter().enumerate() {
        for &(v, a) in &r.coefs {
            if a != 0.0 {
                by_col[v.0].push((i, a));
            }
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in model.vars.iter().enumerate() {
        let integral = v.kind.is_integral();
        if integral != in_int {
            let kind = if integral { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    M{marker:<7}  'MARKER'                 {kind}");
            marker += 1;
            in_int = integral;
        }
        let col = format!("C{j}");
        let mut entries: Vec<(String, f64)> = Vec::new();
        if v.objective != 0.0 {
            entries.push(("COST".into(), v.objective));
        }
        entries.extend(by_col[j].iter().map(|&(i, a)| (format!("R{i}"), a)));
        if entries.is_empty() {
            entries.push(("COST".into(), 0.0));
        }
        for pair in entries.chunks(2) {
            let (r1, a1) = &pair[0];
            match pair.get(1) {
                Some((r2, a2)) => line(&mut out, "", &col, r1, &num(*a1), r2, &num(*a2)),
                None => line(&mut out, "", &col, r1, &num(*a1), "", ""),
            }
        }
    }
    if in_int {
        let _ = writeln!(out, "    M{marker:<7}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    if model.objective_offset != 0.0 {
        line(&mut out, "", "RHS", "COST", &num(-model.objective_offset), "", "");
    }
    for (i, r) in model.rows.iter().enumerate() {
        if r.rhs != 0.0 {
            line(&mut out, "", "RHS", &format!("R{i}"), &num(r.rhs), "", "");
        }
    }

    out.push_str("BOUNDS\n");
    for (j, v) in model.vars.iter().enumerate() {
        let col = format!("C{j}");
        let (l, u) = (v.lower, v.upper);
        if v.kind == VarKind::Binary && l == 0.0 && u == 1.0 {
            line(&mut out, "BV", "BND", &col, "", "", "");
            continue;
        }
        if l == u {
            line(&mut out, "FX", "BND", &col, &num(l), "", "");
            continue;
        }
        if l == f64::NEG_INFINITY && u == f64::INFINITY {
            line(&mut out, "FR", "BND", &col, "", "", "");
            continue;
        }
        if l == f64::NEG_INFINITY {
            line(&mut out, "MI", "BND", &col, "", "", "");
        } else if l != 0.0 {
            line(&mut out, "LO", "BND", &col, &num(l), "", "");
        }
        if u.is_finite() {
            line(&mut out, "UP", "BND", &col, &num(u), "", "");
        } else if v.kind.is_integral() {
            line(&mut out, "PL", "BND", &col, "", "", "");
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MilpModel;

    #[test]
    fn knapsack_layout() {
        let mut m = MilpModel::new("knap");
        let a = m.add_var("a", 0.0, 1.0, VarKind::Binary, -5.0);
        let b = m.add_var("b", 0.0, 1.0, VarKind::Binary, -4.0);
        m.add_row("cap", vec![(a, 3.0), (b, 2.0)], Sense::Le, 4.0);
        let text = to_mps(&m);
        let expected = "\
* R0 cap
* C0 a
* C1 b
NAME          knap
ROWS
 N  COST
 L  R0
COLUMNS
    M0        'MARKER'                 'INTORG'
    C0        COST                -5   R0                   3
    C1        COST                -4   R0                   2
    M1        'MARKER'                 'INTEND'
RHS
    RHS       R0                   4
BOUNDS
 BV BND       C0
 BV BND       C1
ENDATA
";
        assert_eq!(text, expected);
    }

    #[test]
    fn long_numbers_fit_field() {
        assert!(num(1.0 / 3.0).len() <= 12);
        assert!(num(-123456.789012345).len() <= 12);
        assert_eq!(num(0.5), "0.5");
    }
}
