//! Export in the CPLEX-style text LP format.

use std::collections::HashSet;
use std::io::{self, Write};

use super::{LpModel, Relation};

const TERMS_PER_LINE: usize = 6;

fn sanitize(raw: &str, used: &mut HashSet<String>, fallback: usize, prefix: char) -> String {
    let mut s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E') {
        s.insert(0, prefix);
    }
    if !used.insert(s.clone()) {
        s = format!("{s}_{fallback}");
        used.insert(s.clone());
    }
    s
}

fn write_terms<W: Write>(out: &mut W, terms: impl Iterator<Item = (f64, String)>) -> io::Result<()> {
    let mut n = 0;
    for (coef, name) in terms {
        if coef == 0.0 {
            continue;
        }
        if n > 0 && n % TERMS_PER_LINE == 0 {
            write!(out, "\n   ")?;
        }
        let sign = if coef < 0.0 { '-' } else { '+' };
        write!(out, " {sign} {} {name}", fmt_num(coef.abs()))?;
        n += 1;
    }
    if n == 0 {
        // Empty expressions still need a variable reference.
        write!(out, " 0 __zero")?;
    }
    Ok(())
}

fn fmt_num(v: f64) -> String {
    format!("{v:.17e}")
        .parse::<f64>()
        .map(|p| format!("{p}"))
        .unwrap_or_else(|_| format!("{v}"))
}

/// Writes `model` as a text LP file.
pub fn write_lp<W: Write>(model: &LpModel, out: &mut W) -> io::Result<()> {
    let mut used = HashSet::new();
    let names: Vec<String> = model
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| sanitize(&v.name, &mut used, i, 'v'))
        .collect();

    writeln!(out, "\\ generated by freightmatch")?;
    if model.objective_constant != 0.0 {
        writeln!(out, "\\ objective constant {}", fmt_num(model.objective_constant))?;
    }
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    write_terms(out, model.objective.iter().zip(&names).map(|(&c, n)| (c, n.clone())))?;
    writeln!(out)?;

    writeln!(out, "Subject To")?;
    let mut row_names = HashSet::new();
    for (i, c) in model.constraints.iter().enumerate() {
        let name = sanitize(&c.name, &mut row_names, i, 'c');
        write!(out, " {name}:")?;
        write_terms(out, c.terms.iter().map(|&(v, a)| (a, names[v.0].clone())))?;
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(out, " {rel} {}", fmt_num(c.rhs))?;
    }

    writeln!(out, "Bounds")?;
    for (v, name) in model.variables.iter().zip(&names) {
        match (v.lower, v.upper) {
            (l, u) if l == 0.0 && u == f64::INFINITY => {}
            (l, u) if l == u => writeln!(out, " {name} = {}", fmt_num(l))?,
            (l, u) if l == f64::NEG_INFINITY && u == f64::INFINITY => writeln!(out, " {name} free")?,
            (l, u) => {
                let lo = if l == f64::NEG_INFINITY { "-inf".to_string() } else { fmt_num(l) };
                let hi = if u == f64::INFINITY { "+inf".to_string() } else { fmt_num(u) };
                writeln!(out, " {lo} <= {name} <= {hi}")?;
            }
        }
    }
    writeln!(out, "End")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::LpModel;

    #[test]
    fn writes_sections_and_bounds() {
        let mut m = LpModel::new();
        let x = m.add_var("x[a,b]", 0.0, 1.0);
        let y = m.add_var("1y", f64::NEG_INFINITY, f64::INFINITY);
        let z = m.add_var("x[a,b]", 2.0, 2.0);
        m.set_cost(x, 3.0);
        m.set_cost(y, -0.5);
        m.add_constraint("cap", vec![(x, 1.0), (y, -2.0), (z, 1.0)], Relation::Le, 4.0);
        let mut buf = Vec::new();
        write_lp(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Minimize\n obj: + 3 x_a_b_ - 0.5 v1y\n"));
        assert!(text.contains(" cap: + 1 x_a_b_ - 2 v1y + 1 x_a_b__2 <= 4\n"));
        assert!(text.contains(" 0 <= x_a_b_ <= 1\n"));
        assert!(text.contains(" v1y free\n"));
        assert!(text.contains(" x_a_b__2 = 2\n"));
        assert!(text.ends_with("End\n"));
    }
}
