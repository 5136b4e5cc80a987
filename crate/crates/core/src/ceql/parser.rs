use std::collections::BTreeSet;

use super::lexer::{tokenize, Tok, Token};
use super::{
    CelFormula, CeqlError, ConsumePolicy, QueryAst, Selection, SelectionStrategy, TimeUnit, WindowUnit, Within,
};
use crate::event::{Atom, AtomValue, CmpOp, Predicate, Value};

const RESERVED: &[&str] = &[
    "SELECT",
    "FROM",
    "WHERE",
    "FILTER",
    "AS",
    "IN",
    "OR",
    "AND",
    "NOT",
    "PARTITION",
    "BY",
    "WITHIN",
    "CONSUME",
    "PROJECT",
    "TRUE",
    "FALSE",
];

fn is_reserved(s: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(s))
}

/// Parses a full CEQL query and validates its variable references.
/// Variable references with their line and column.
type VarRefs = Vec<(String, usize, usize)>;

pub fn parse(text: &str) -> Result<QueryAst, CeqlError> {
    let mut p = Parser::new(text)?;
    let (q, select_refs) = p.query()?;
    p.validate(&q.formula, select_refs)?;
    Ok(q)
}

/// Parses a bare CEL formula, as written after WHERE.
pub fn parse_formula(text: &str) -> Result<CelFormula, CeqlError> {
    let mut p = Parser::new(text)?;
    let f = p.formula()?;
    p.expect_eof()?;
    p.validate(&f, Vec::new())?;
    Ok(f)
}

/// Filter expression before desugaring.
enum FilterExpr {
    Atom { var: String, pred: Predicate },
    And(Box<FilterExpr>, Box<FilterExpr>),
    Or(Box<FilterExpr>, Box<FilterExpr>),
}

impl FilterExpr {
    /// Flattens a pure conjunction of atoms, `None` if a disjunction occurs.
    fn conjuncts<'a>(&'a self, out: &mut Vec<(&'a str, &'a Predicate)>) -> bool {
        match self {
            FilterExpr::Atom { var, pred } => {
                out.push((var, pred));
                true
            }
            FilterExpr::And(a, b) => a.conjuncts(out) && b.conjuncts(out),
            FilterExpr::Or(..) => false,
        }
    }

    fn apply(self, f: CelFormula) -> CelFormula {
        let mut flat = Vec::new();
        if self.conjuncts(&mut flat) {
            // Group conjuncts by variable, in order of first appearance.
            let mut groups: Vec<(&str, Predicate)> = Vec::new();
            for (var, pred) in flat {
                match groups.iter_mut().find(|(v, _)| *v == var) {
                    Some((_, p)) => *p = std::mem::replace(p, Predicate::True).and(pred.clone()),
                    None => groups.push((var, pred.clone())),
                }
            }
            return groups.into_iter().fold(f, |acc, (v, p)| acc.filter(v, p));
        }
        self.apply_general(f)
    }

    fn apply_general(self, f: CelFormula) -> CelFormula {
        match self {
            FilterExpr::Atom { var, pred } => f.filter(var, pred),
            FilterExpr::And(a, b) => b.apply_general(a.apply_general(f)),
            FilterExpr::Or(a, b) => a.apply_general(f.clone()).or(b.apply_general(f)),
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Variable references from FILTER clauses, checked after parsing.
    filter_refs: VarRefs,
}

impl Parser {
    fn new(text: &str) -> Result<Self, CeqlError> {
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
            filter_refs: Vec::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, CeqlError> {
        let (line, col) = self.here();
        Err(CeqlError::Syntax {
            line,
            col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(x) => format!("`{x}`"),
            Tok::Eof => "end of input".into(),
            t => format!("{t:?}"),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), CeqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.error(format!("expected {kw}, found {}", self.describe()))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), CeqlError> {
        if self.eat(t) {
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", self.describe()))
        }
    }

    fn expect_eof(&self) -> Result<(), CeqlError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.error(format!("unexpected {}", self.describe()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), CeqlError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                let t = self.advance();
                Ok((s, t.line, t.col))
            }
            _ => self.error(format!("expected {what}, found {}", self.describe())),
        }
    }

    fn query(&mut self) -> Result<(QueryAst, VarRefs), CeqlError> {
        self.expect_keyword("SELECT")?;

        let strategy = match self.peek() {
            Tok::Ident(s) if matches!(self.peek_at(1), Tok::Ident(_) | Tok::Star) => {
                let st = match s.to_ascii_uppercase().as_str() {
                    "MAX" => Some(SelectionStrategy::Max),
                    "LAST" => Some(SelectionStrategy::Last),
                    "NEXT" => Some(SelectionStrategy::Next),
                    "ANY" => Some(SelectionStrategy::Any),
                    _ => None,
                };
                // `SELECT max FROM` selects a variable named max.
                if st.is_some() && !matches!(self.peek_at(1), Tok::Ident(k) if k.eq_ignore_ascii_case("FROM")) {
                    self.advance();
                    st
                } else {
                    None
                }
            }
            _ => None,
        };

        let mut select_refs = Vec::new();
        let select = if self.eat(&Tok::Star) {
            Selection::All
        } else {
            let mut vars = Vec::new();
            loop {
                let (v, l, c) = self.ident("variable")?;
                select_refs.push((v.clone(), l, c));
                vars.push(v);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            Selection::Vars(vars)
        };

        self.expect_keyword("FROM")?;
        let mut from = vec![self.ident("stream name")?.0];
        while self.eat(&Tok::Comma) {
            from.push(self.ident("stream name")?.0);
        }

        self.expect_keyword("WHERE")?;
        let formula = self.formula()?;

        let mut partition_by = None;
        let mut within = None;
        let mut consume = None;
        loop {
            let (line, col) = self.here();
            let dup = |clause| CeqlError::DuplicateClause { clause, line, col };
            if self.eat_keyword("PARTITION") {
                self.expect_keyword("BY")?;
                if partition_by.is_some() {
                    return Err(dup("PARTITION BY"));
                }
                partition_by = Some(self.partition_attrs()?);
            } else if self.eat_keyword("WITHIN") {
                if within.is_some() {
                    return Err(dup("WITHIN"));
                }
                within = Some(self.within()?);
            } else if self.eat_keyword("CONSUME") {
                self.expect_keyword("BY")?;
                if consume.is_some() {
                    return Err(dup("CONSUME BY"));
                }
                consume = Some(if self.eat_keyword("NONE") {
                    ConsumePolicy::None
                } else if self.eat_keyword("ANY") {
                    ConsumePolicy::Any
                } else {
                    return self.error(format!("expected NONE or ANY, found {}", self.describe()));
                });
            } else if self.at_keyword("WHERE") {
                return Err(dup("WHERE"));
            } else {
                break;
            }
        }
        self.expect_eof()?;

        let q = QueryAst {
            strategy,
            select,
            from,
            formula,
            partition_by,
            within,
            consume,
        };
        Ok((q, select_refs))
    }

    fn partition_attrs(&mut self) -> Result<Vec<String>, CeqlError> {
        let mut attrs = Vec::new();
        loop {
            if self.eat(&Tok::LBracket) {
                attrs.push(self.ident("attribute name")?.0);
                self.expect(&Tok::RBracket, "`]`")?;
            } else {
                attrs.push(self.ident("attribute name")?.0);
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(attrs)
    }

    fn within(&mut self) -> Result<Within, CeqlError> {
        let magnitude = match *self.peek() {
            Tok::Int(n) if n >= 0 => {
                self.advance();
                n as u64
            }
            _ => {
                return self.error(format!(
                    "expected a non-negative window size, found {}",
                    self.describe()
                ))
            }
        };
        let unit = if self.eat(&Tok::LBracket) {
            let (a, _, _) = self.ident("time attribute")?;
            self.expect(&Tok::RBracket, "`]`")?;
            WindowUnit::Attribute(a)
        } else {
            let unit = match self.peek() {
                Tok::Ident(s) => match s.to_ascii_lowercase().as_str() {
                    "event" | "events" => Some(TimeUnit::Events),
                    "second" | "seconds" => Some(TimeUnit::Seconds),
                    "minute" | "minutes" => Some(TimeUnit::Minutes),
                    "hour" | "hours" => Some(TimeUnit::Hours),
                    _ => None,
                },
                _ => None,
            };
            if unit.is_some() {
                self.advance();
            }
            WindowUnit::Unit(unit.unwrap_or(TimeUnit::Events))
        };
        Ok(Within { magnitude, unit })
    }

    // formula := or_expr (FILTER filter_expr)*
    fn formula(&mut self) -> Result<CelFormula, CeqlError> {
        let mut f = self.or_expr()?;
        while self.eat_keyword("FILTER") {
            let fe = self.filter_or()?;
            f = fe.apply(f);
        }
        Ok(f)
    }

    fn or_expr(&mut self) -> Result<CelFormula, CeqlError> {
        let mut f = self.seq_expr()?;
        while self.eat_keyword("OR") {
            f = f.or(self.seq_expr()?);
        }
        Ok(f)
    }

    fn seq_expr(&mut self) -> Result<CelFormula, CeqlError> {
        let mut f = self.postfix()?;
        while self.eat(&Tok::Semi) {
            f = f.then(self.postfix()?);
        }
        Ok(f)
    }

    fn postfix(&mut self) -> Result<CelFormula, CeqlError> {
        let mut f = self.primary()?;
        loop {
            if self.eat(&Tok::Plus) {
                f = f.plus();
            } else if self.eat_keyword("AS") || self.eat_keyword("IN") {
                f = f.bind(self.ident("variable name")?.0);
            } else {
                return Ok(f);
            }
        }
    }

    fn primary(&mut self) -> Result<CelFormula, CeqlError> {
        if self.eat(&Tok::LParen) {
            let f = self.formula()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(f);
        }
        if self.eat_keyword("PROJECT") {
            self.expect(&Tok::LBracket, "`[`")?;
            let mut vars = BTreeSet::new();
            if !self.eat(&Tok::RBracket) {
                loop {
                    vars.insert(self.ident("variable")?.0);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RBracket, "`]`")?;
            }
            self.expect(&Tok::LParen, "`(`")?;
            let f = self.formula()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(CelFormula::Proj(vars, Box::new(f)));
        }
        let (name, _, _) = self.ident("event type or `(`")?;
        Ok(CelFormula::EventType(name))
    }

    fn filter_or(&mut self) -> Result<FilterExpr, CeqlError> {
        let mut e = self.filter_and()?;
        while self.eat_keyword("OR") {
            e = FilterExpr::Or(Box::new(e), Box::new(self.filter_and()?));
        }
        Ok(e)
    }

    fn filter_and(&mut self) -> Result<FilterExpr, CeqlError> {
        let mut e = self.filter_atom()?;
        while self.eat_keyword("AND") {
            e = FilterExpr::And(Box::new(e), Box::new(self.filter_atom()?));
        }
        Ok(e)
    }

    fn filter_atom(&mut self) -> Result<FilterExpr, CeqlError> {
        if self.eat(&Tok::LParen) {
            let e = self.filter_or()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(e);
        }
        let (var, line, col) = self.ident("filter variable")?;
        self.filter_refs.push((var.clone(), line, col));
        self.expect(&Tok::LBracket, "`[`")?;
        let pred = self.pred_or()?;
        self.expect(&Tok::RBracket, "`]`")?;
        Ok(FilterExpr::Atom { var, pred })
    }

    fn pred_or(&mut self) -> Result<Predicate, CeqlError> {
        let first = self.pred_and()?;
        if !self.at_keyword("OR") {
            return Ok(first);
        }
        let mut ps = vec![first];
        while self.eat_keyword("OR") {
            ps.push(self.pred_and()?);
        }
        Ok(Predicate::Or(ps))
    }

    fn pred_and(&mut self) -> Result<Predicate, CeqlError> {
        let first = self.pred_not()?;
        if !self.at_keyword("AND") {
            return Ok(first);
        }
        let mut ps = vec![first];
        while self.eat_keyword("AND") {
            ps.push(self.pred_not()?);
        }
        Ok(Predicate::And(ps))
    }

    fn pred_not(&mut self) -> Result<Predicate, CeqlError> {
        if self.eat_keyword("NOT") {
            return Ok(Predicate::Not(Box::new(self.pred_not()?)));
        }
        if self.eat(&Tok::LParen) {
            let p = self.pred_or()?;
            self.expect(&Tok::RParen, "`)`")?;
            return Ok(p);
        }
        if self.eat_keyword("TRUE") {
            return Ok(Predicate::True);
        }
        let (attr, _, _) = self.ident("attribute name")?;
        let op = match self.peek() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return self.error(format!("expected a comparison operator, found {}", self.describe())),
        };
        self.advance();
        let value = match self.peek().clone() {
            Tok::Int(i) => Value::Int(i),
            Tok::Float(x) => Value::Float(x),
            Tok::Str(s) => Value::text(s),
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => Value::Bool(true),
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => Value::Bool(false),
            _ => return self.error(format!("expected a literal, found {}", self.describe())),
        };
        self.advance();
        let value = AtomValue::from_value(&value).expect("literal is never null");
        Ok(Predicate::Atom(Atom::Compare {
            attr: attr.into(),
            op,
            value,
        }))
    }

    fn validate(&self, formula: &CelFormula, select_refs: VarRefs) -> Result<(), CeqlError> {
        let vars = formula.variables();
        // Filter variables may be projected away later, so check them against
        // everything bound anywhere in the formula.
        let mut bound = BTreeSet::new();
        formula.walk(&mut |f| match f {
            CelFormula::EventType(r) => {
                bound.insert(r.clone());
            }
            CelFormula::As(_, x) => {
                bound.insert(x.clone());
            }
            _ => {}
        });
        for (name, line, col) in &self.filter_refs {
            if !bound.contains(name) {
                return Err(CeqlError::UnknownVariable {
                    name: name.clone(),
                    line: *line,
                    col: *col,
                });
            }
        }
        for (name, line, col) in select_refs {
            if !vars.contains(&name) {
                return Err(CeqlError::UnknownVariable { name, line, col });
            }
        }
        Ok(())
    }
}
