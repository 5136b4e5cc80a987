use std::fmt::{self, Write as _};

use super::{CelFormula, ConsumePolicy, QueryAst, Selection, WindowUnit};

// Binary operators and filters always print their own parentheses, so the
// output reparses to the same tree regardless of precedence.
pub(super) fn write_formula(f: &mut fmt::Formatter<'_>, phi: &CelFormula) -> fmt::Result {
    match phi {
        CelFormula::EventType(r) => write!(f, "{r}"),
        CelFormula::As(g, x) => {
            write_formula(f, g)?;
            write!(f, " AS {x}")
        }
        CelFormula::Plus(g) => {
            write_formula(f, g)?;
            write!(f, "+")
        }
        CelFormula::Filter(g, x, p) => {
            write!(f, "(")?;
            write_formula(f, g)?;
            write!(f, " FILTER {x}[{p}])")
        }
        CelFormula::Or(a, b) => {
            write!(f, "(")?;
            write_formula(f, a)?;
            write!(f, " OR ")?;
            write_formula(f, b)?;
            write!(f, ")")
        }
        CelFormula::Seq(a, b) => {
            write!(f, "(")?;
            write_formula(f, a)?;
            write!(f, " ; ")?;
            write_formula(f, b)?;
            write!(f, ")")
        }
        CelFormula::Proj(l, g) => {
            write!(f, "PROJECT[")?;
            for (i, v) in l.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, "](")?;
            write_formula(f, g)?;
            write!(f, ")")
        }
    }
}

pub(super) fn query_text(q: &QueryAst) -> String {
    let mut s = String::from("SELECT ");
    if let Some(st) = q.strategy {
        s.push_str(st.keyword());
        s.push(' ');
    }
    match &q.select {
        Selection::All => s.push('*'),
        Selection::Vars(v) => s.push_str(&v.join(", ")),
    }
    let _ = write!(s, "\nFROM {}\nWHERE {}", q.from.join(", "), q.formula);
    if let Some(attrs) = &q.partition_by {
        let list: Vec<String> = attrs.iter().map(|a| format!("[{a}]")).collect();
        let _ = write!(s, "\nPARTITION BY {}", list.join(", "));
    }
    if let Some(w) = &q.within {
        let _ = match &w.unit {
            WindowUnit::Unit(u) => write!(s, "\nWITHIN {} {}", w.magnitude, u.keyword()),
            WindowUnit::Attribute(a) => write!(s, "\nWITHIN {} [{a}]", w.magnitude),
        };
    }
    if let Some(c) = q.consume {
        s.push_str(match c {
            ConsumePolicy::None => "\nCONSUME BY NONE",
            ConsumePolicy::Any => "\nCONSUME BY ANY",
        });
    }
    s
}
