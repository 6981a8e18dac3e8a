//! LP-format text export (readable by common MILP solvers) and solution JSON.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde_json::json;

use super::model::{LinExpr, MilpModel, Sense, VarKind};
use super::{MilpSolution, SolveStatus};

fn sanitize(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        s.insert(0, 'v');
    }
    s
}

fn unique_names(names: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    names
        .enumerate()
        .map(|(i, n)| {
            let mut s = sanitize(&n);
            if !seen.insert(s.clone()) {
                s = format!("{s}_{i}");
                seen.insert(s.clone());
            }
            s
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    // `{:?}` keeps round-trip precision.
    format!("{v:?}")
}

fn write_expr(out: &mut String, e: &LinExpr, names: &[String]) {
    if e.terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names[0]);
        return;
    }
    for (k, &(v, c)) in e.terms.iter().enumerate() {
        if c < 0.0 {
            out.push_str(" - ");
        } else if k > 0 {
            out.push_str(" + ");
        } else {
            out.push(' ');
        }
        let _ = write!(out, "{} {}", fmt_num(c.abs()), names[v.0]);
    }
}

/// Renders `model` in LP format.
pub fn lp_format(model: &MilpModel) -> String {
    let names = unique_names(model.vars.iter().map(|v| v.name.clone()));
    let cnames = unique_names(model.constraints.iter().map(|c| c.name.clone()));
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    write_expr(&mut out, &model.objective, &names);
    if model.objective.constant != 0.0 {
        let c = model.objective.constant;
        let _ = write!(out, " {} {}", if c < 0.0 { "-" } else { "+" }, fmt_num(c.abs()));
    }
    out.push_str("\nSubject To\n");
    for (c, name) in model.constraints.iter().zip(&cnames) {
        let _ = write!(out, " {name}:");
        write_expr(&mut out, &c.expr, &names);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars.iter().zip(&names) {
        if v.kind == VarKind::Binary {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(v.lower), fmt_num(v.upper));
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", fmt_num(v.lower));
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", fmt_num(v.upper));
            }
        }
    }
    let bins: Vec<&String> = model
        .vars
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for n in bins {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_lp_format(model: &MilpModel, path: &Path) -> io::Result<()> {
    std::fs::write(path, lp_format(model))
}

/// `{status, objective, vars, nodes, wall_ms}` with variables keyed by name.
pub fn solution_json(model: &MilpModel, sol: &MilpSolution) -> serde_json::Value {
    let names = unique_names(model.vars.iter().map(|v| v.name.clone()));
    let vars: serde_json::Map<String, serde_json::Value> = names
        .into_iter()
        .zip(&sol.values)
        .map(|(n, &v)| (n, json!(v)))
        .collect();
    let status = match sol.status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::TimeLimit => "time_limit",
    };
    json!({
        "status": status,
        "objective": if sol.objective.is_finite() { json!(sol.objective) } else { json!(null) },
        "vars": vars,
        "nodes": sol.nodes,
        "wall_ms": sol.wall_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x[1]", 0.0, 10.0);
        let y = m.add_continuous("y", f64::NEG_INFINITY, f64::INFINITY);
        let b = m.add_binary("b");
        m.add_constraint("c 1", LinExpr::var(x).with_term(y, -2.0), Sense::Le, 4.0);
        m.add_constraint("c2", LinExpr::var(b).with_term(x, 1.0), Sense::Eq, 1.0);
        m.set_objective(LinExpr::term(x, 3.0).with_term(b, -1.0));
        let text = lp_format(&m);
        assert!(text.starts_with("Minimize\n obj: 3.0 x_1_ - 1.0 b\n"));
        assert!(text.contains(" c_1: 1.0 x_1_ - 2.0 y <= 4.0\n"));
        assert!(text.contains(" c2: 1.0 x_1_ + 1.0 b = 1.0\n"));
        assert!(text.contains(" y free\n"));
        assert!(text.contains("Binaries\n b\n"));
        assert!(text.ends_with("End\n"));
    }
}
