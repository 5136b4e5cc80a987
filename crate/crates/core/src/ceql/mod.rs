//! CEQL queries: parsing, validation, schema checks and desugaring to CEL.

mod lexer;
mod parser;
mod pretty;
mod schema;

use std::collections::BTreeSet;
use std::fmt;

use crate::event::Predicate;

pub use parser::{parse, parse_formula};
pub use schema::{AttrType, Schema};

/// A formula of the complex event logic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CelFormula {
    EventType(String),
    As(Box<CelFormula>, String),
    Filter(Box<CelFormula>, String, Predicate),
    Or(Box<CelFormula>, Box<CelFormula>),
    Seq(Box<CelFormula>, Box<CelFormula>),
    Plus(Box<CelFormula>),
    Proj(BTreeSet<String>, Box<CelFormula>),
}

impl CelFormula {
    pub fn event(name: impl Into<String>) -> Self {
        CelFormula::EventType(name.into())
    }

    pub fn bind(self, var: impl Into<String>) -> Self {
        CelFormula::As(Box::new(self), var.into())
    }

    pub fn filter(self, var: impl Into<String>, p: Predicate) -> Self {
        CelFormula::Filter(Box::new(self), var.into(), p)
    }

    pub fn or(self, other: CelFormula) -> Self {
        CelFormula::Or(Box::new(self), Box::new(other))
    }

    pub fn then(self, other: CelFormula) -> Self {
        CelFormula::Seq(Box::new(self), Box::new(other))
    }

    pub fn plus(self) -> Self {
        CelFormula::Plus(Box::new(self))
    }

    pub fn project<I, S>(self, vars: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CelFormula::Proj(vars.into_iter().map(Into::into).collect(), Box::new(self))
    }

    /// Every variable that can be bound by the formula, event types included.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            CelFormula::EventType(r) => {
                out.insert(r.clone());
            }
            CelFormula::As(f, x) => {
                f.collect_vars(out);
                out.insert(x.clone());
            }
            CelFormula::Filter(f, _, _) | CelFormula::Plus(f) => f.collect_vars(out),
            CelFormula::Or(a, b) | CelFormula::Seq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            CelFormula::Proj(l, f) => {
                let mut inner = BTreeSet::new();
                f.collect_vars(&mut inner);
                out.extend(inner.into_iter().filter(|v| l.contains(v)));
            }
        }
    }

    /// Event types mentioned anywhere in the formula.
    pub fn event_types(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| {
            if let CelFormula::EventType(r) = f {
                out.insert(r.clone());
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut impl FnMut(&CelFormula)) {
        f(self);
        match self {
            CelFormula::EventType(_) => {}
            CelFormula::As(g, _) | CelFormula::Filter(g, _, _) | CelFormula::Plus(g) | CelFormula::Proj(_, g) => {
                g.walk(f)
            }
            CelFormula::Or(a, b) | CelFormula::Seq(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    /// Number of constructors in the formula.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn depth(&self) -> usize {
        match self {
            CelFormula::EventType(_) => 1,
            CelFormula::As(g, _) | CelFormula::Filter(g, _, _) | CelFormula::Plus(g) | CelFormula::Proj(_, g) => {
                1 + g.depth()
            }
            CelFormula::Or(a, b) | CelFormula::Seq(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

impl fmt::Display for CelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        pretty::write_formula(f, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStrategy {
    Max,
    Last,
    Next,
    Any,
}

impl SelectionStrategy {
    pub fn keyword(self) -> &'static str {
        match self {
            SelectionStrategy::Max => "MAX",
            SelectionStrategy::Last => "LAST",
            SelectionStrategy::Next => "NEXT",
            SelectionStrategy::Any => "ANY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    All,
    Vars(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Events,
    Seconds,
    Minutes,
    Hours,
}

impl TimeUnit {
    /// Multiplier from this unit to the stream clock.
    pub fn scale(self) -> u64 {
        match self {
            TimeUnit::Events | TimeUnit::Seconds => 1,
            TimeUnit::Minutes => 60,
            TimeUnit::Hours => 3600,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TimeUnit::Events => "events",
            TimeUnit::Seconds => "seconds",
            TimeUnit::Minutes => "minutes",
            TimeUnit::Hours => "hours",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowUnit {
    Unit(TimeUnit),
    /// Time is read from the named attribute.
    Attribute(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Within {
    pub magnitude: u64,
    pub unit: WindowUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConsumePolicy {
    #[default]
    None,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub strategy: Option<SelectionStrategy>,
    pub select: Selection,
    pub from: Vec<String>,
    pub formula: CelFormula,
    pub partition_by: Option<Vec<String>>,
    pub within: Option<Within>,
    pub consume: Option<ConsumePolicy>,
}

impl QueryAst {
    /// Turns the SELECT clause into a projection over the WHERE formula.
    pub fn desugar(&self) -> CelFormula {
        let vars: BTreeSet<String> = match &self.select {
            Selection::All => self.formula.variables(),
            Selection::Vars(v) => v.iter().cloned().collect(),
        };
        CelFormula::Proj(vars, Box::new(self.formula.clone()))
    }

    /// Pretty-prints the query in parseable form.
    pub fn to_text(&self) -> String {
        pretty::query_text(self)
    }

    pub fn check_schema(&self, schema: &Schema) -> Result<(), CeqlError> {
        schema.check(&self.formula)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CeqlError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unknown variable `{name}`")]
    UnknownVariable { name: String, line: usize, col: usize },
    #[error("{line}:{col}: duplicate {clause} clause")]
    DuplicateClause {
        clause: &'static str,
        line: usize,
        col: usize,
    },
    #[error("schema: {0}")]
    Schema(String),
}

/// Same as [`QueryAst::desugar`].
pub fn desugar(q: &QueryAst) -> CelFormula {
    q.desugar()
}

#[cfg(test)]
mod tests;
