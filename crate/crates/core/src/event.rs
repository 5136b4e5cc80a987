//! Stream values, tuples, predicates and complex events.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Index of a tuple in the merged input stream.
pub type Position = usize;

/// Logical time attached to a tuple. Defaults to the tuple's position.
pub type Time = u64;

/// An attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(Arc<str>),
    Null,
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Self {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "double",
            Value::Bool(_) => "bool",
            Value::Text(_) => "string",
            Value::Null => "null",
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Compares two non-null values.
    ///
    /// Integers and floats compare numerically. Any other mix of variants is a
    /// type error, and so is anything involving null. Float NaN is unordered.
    pub fn compare(&self, other: &Value) -> Result<Option<Ordering>, TypeMismatch> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Ok(Some(a.cmp(b))),
            (Value::Float(a), Value::Float(b)) => Ok(a.partial_cmp(b)),
            (Value::Int(a), Value::Float(b)) => Ok(cmp_int_float(*a, *b)),
            (Value::Float(a), Value::Int(b)) => Ok(cmp_int_float(*b, *a).map(Ordering::reverse)),
            (Value::Bool(a), Value::Bool(b)) => Ok(Some(a.cmp(b))),
            (Value::Text(a), Value::Text(b)) => Ok(Some(a.cmp(b))),
            _ => Err(TypeMismatch {
                left: self.type_name(),
                right: other.type_name(),
            }),
        }
    }
}

/// Exact comparison of an integer against a float, without rounding the
/// integer through `f64`.
fn cmp_int_float(i: i64, f: f64) -> Option<Ordering> {
    if f.is_nan() {
        return None;
    }
    // 2^63 is exactly representable; every i64 lies strictly inside (-2^63-1, 2^63).
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if f >= LIMIT {
        return Some(Ordering::Less);
    }
    if f < -LIMIT {
        return Some(Ordering::Greater);
    }
    let trunc = f.trunc();
    let ti = trunc as i64;
    match i.cmp(&ti) {
        Ordering::Equal => {
            let frac = f - trunc;
            if frac > 0.0 {
                Some(Ordering::Less)
            } else if frac < 0.0 {
                Some(Ordering::Greater)
            } else {
                Some(Ordering::Equal)
            }
        }
        o => Some(o),
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => {
                if x.is_finite() && x.fract() == 0.0 {
                    write!(f, "{x:.1}")
                } else {
                    write!(f, "{x}")
                }
            }
            Value::Bool(b) => write!(f, "{b}"),
            Value::Text(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Value::Null => write!(f, "null"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::text(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot compare {left} with {right}")]
pub struct TypeMismatch {
    pub left: &'static str,
    pub right: &'static str,
}

/// One event of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTuple {
    pub event_type: Arc<str>,
    attributes: Vec<(Arc<str>, Value)>,
    pub position: Position,
    pub time: Time,
}

impl DataTuple {
    /// A tuple whose time equals its position.
    pub fn new(event_type: impl AsRef<str>, position: Position) -> Self {
        DataTuple {
            event_type: Arc::from(event_type.as_ref()),
            attributes: Vec::new(),
            position,
            time: position as Time,
        }
    }

    pub fn with(mut self, name: impl AsRef<str>, value: impl Into<Value>) -> Self {
        self.set(name, value.into());
        self
    }

    pub fn at_time(mut self, time: Time) -> Self {
        self.time = time;
        self
    }

    pub fn set(&mut self, name: impl AsRef<str>, value: Value) {
        let name = name.as_ref();
        match self.attributes.iter_mut().find(|(n, _)| &**n == name) {
            Some(slot) => slot.1 = value,
            None => self.attributes.push((Arc::from(name), value)),
        }
    }

    /// Attribute lookup; a missing attribute reads as [`Value::Null`].
    pub fn get(&self, name: &str) -> &Value {
        static NULL: Value = Value::Null;
        self.attributes
            .iter()
            .find(|(n, _)| &**n == name)
            .map(|(_, v)| v)
            .unwrap_or(&NULL)
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.attributes.iter().map(|(n, v)| (&**n, v))
    }
}

/// Output of the engine: an interval of the stream plus the marked positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComplexEvent {
    pub start: Position,
    pub end: Position,
    /// Sorted ascending, every element in `start..=end`.
    pub data: Vec<Position>,
}

impl ComplexEvent {
    pub fn new(start: Position, end: Position, mut data: Vec<Position>) -> Self {
        data.sort_unstable();
        data.dedup();
        debug_assert!(start <= end);
        debug_assert!(data.iter().all(|&p| p >= start && p <= end));
        ComplexEvent { start, end, data }
    }
}

impl fmt::Display for ComplexEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "([{},{}], {{", self.start, self.end)?;
        for (i, p) in self.data.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}})")
    }
}

/// A complex event enriched with the positions bound to every variable.
///
/// Variables mapped to the empty set are not stored, so structural equality
/// is valuation equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Valuation {
    pub start: Position,
    pub end: Position,
    pub assignment: BTreeMap<String, BTreeSet<Position>>,
}

impl Valuation {
    pub fn new(start: Position, end: Position) -> Self {
        Valuation {
            start,
            end,
            assignment: BTreeMap::new(),
        }
    }

    pub fn bind(mut self, var: impl Into<String>, positions: impl IntoIterator<Item = Position>) -> Self {
        let set: BTreeSet<Position> = positions.into_iter().collect();
        if !set.is_empty() {
            self.assignment.entry(var.into()).or_default().extend(set);
        }
        self
    }

    pub fn get(&self, var: &str) -> Option<&BTreeSet<Position>> {
        self.assignment.get(var)
    }

    pub fn is_well_formed(&self) -> bool {
        self.start <= self.end
            && self
                .assignment
                .values()
                .flatten()
                .all(|&p| p >= self.start && p <= self.end)
    }
}

/// Forgets the variables of a valuation and keeps its positions.
pub fn normalize_valuation(v: &Valuation) -> ComplexEvent {
    let data: BTreeSet<Position> = v.assignment.values().flatten().copied().collect();
    ComplexEvent {
        start: v.start,
        end: v.end,
        data: data.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

/// Outcome of testing one atom against a tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    /// The attribute is absent or null.
    Missing,
    /// The attribute holds a value of an incomparable type.
    TypeError,
}

impl Truth {
    pub fn holds(self) -> bool {
        self == Truth::True
    }
}

/// A predicate that can be decided on a single tuple, without looking at
/// other tuples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    EventType(Arc<str>),
    Compare {
        attr: Arc<str>,
        op: CmpOp,
        value: AtomValue,
    },
}

/// Constant side of a comparison atom.
///
/// Floats are stored by bit pattern so atoms can be hashed and deduplicated
/// structurally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomValue {
    Int(i64),
    Float(u64),
    Bool(bool),
    Text(Arc<str>),
}

impl AtomValue {
    pub fn to_value(&self) -> Value {
        match self {
            AtomValue::Int(i) => Value::Int(*i),
            AtomValue::Float(b) => Value::Float(f64::from_bits(*b)),
            AtomValue::Bool(b) => Value::Bool(*b),
            AtomValue::Text(s) => Value::Text(s.clone()),
        }
    }

    /// `None` for null, which cannot appear as a comparison constant.
    pub fn from_value(v: &Value) -> Option<Self> {
        Some(match v {
            Value::Int(i) => AtomValue::Int(*i),
            Value::Float(f) => AtomValue::Float(if *f == 0.0 { 0 } else { f.to_bits() }),
            Value::Bool(b) => AtomValue::Bool(*b),
            Value::Text(s) => AtomValue::Text(s.clone()),
            Value::Null => return None,
        })
    }
}

impl Atom {
    pub fn event_type(name: impl AsRef<str>) -> Self {
        Atom::EventType(Arc::from(name.as_ref()))
    }

    /// # Panics
    /// If `value` is null.
    pub fn compare(attr: impl AsRef<str>, op: CmpOp, value: impl Into<Value>) -> Self {
        let value = AtomValue::from_value(&value.into()).expect("comparison constant must not be null");
        Atom::Compare {
            attr: Arc::from(attr.as_ref()),
            op,
            value,
        }
    }

    pub fn check(&self, t: &DataTuple) -> Truth {
        match self {
            Atom::EventType(name) => {
                if *t.event_type == **name {
                    Truth::True
                } else {
                    Truth::False
                }
            }
            Atom::Compare { attr, op, value } => {
                let lhs = t.get(attr);
                if lhs.is_null() {
                    return Truth::Missing;
                }
                let rhs = value.to_value();
                if matches!(rhs, Value::Text(_)) && !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                    return Truth::TypeError;
                }
                match lhs.compare(&rhs) {
                    Ok(Some(ord)) if op.holds(ord) => Truth::True,
                    Ok(Some(_)) => Truth::False,
                    // NaN: only `!=` holds
                    Ok(None) => {
                        if *op == CmpOp::Ne {
                            Truth::True
                        } else {
                            Truth::False
                        }
                    }
                    Err(_) => Truth::TypeError,
                }
            }
        }
    }

    pub fn eval(&self, t: &DataTuple) -> bool {
        self.check(t).holds()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::EventType(n) => write!(f, "type = {n}"),
            Atom::Compare { attr, op, value } => write!(f, "{attr} {} {}", op.symbol(), value.to_value()),
        }
    }
}

/// Boolean combination of atoms.
///
/// Negation is classical over satisfaction: `NOT p` holds exactly when `p`
/// does not, so a missing attribute satisfies `NOT price > 100`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    True,
    Atom(Atom),
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn atom(a: Atom) -> Self {
        Predicate::Atom(a)
    }

    /// Conjunction that flattens nested `And`s and drops `True`.
    pub fn and(self, other: Predicate) -> Predicate {
        match (self, other) {
            (Predicate::True, p) | (p, Predicate::True) => p,
            (Predicate::And(mut a), Predicate::And(b)) => {
                a.extend(b);
                Predicate::And(a)
            }
            (Predicate::And(mut a), p) => {
                a.push(p);
                Predicate::And(a)
            }
            (p, Predicate::And(mut b)) => {
                b.insert(0, p);
                Predicate::And(b)
            }
            (a, b) => Predicate::And(vec![a, b]),
        }
    }

    pub fn eval(&self, t: &DataTuple) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Atom(a) => a.eval(t),
            Predicate::Not(p) => !p.eval(t),
            Predicate::And(ps) => ps.iter().all(|p| p.eval(t)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval(t)),
        }
    }

    /// Visits atoms left to right.
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Predicate::True => {}
            Predicate::Atom(a) => f(a),
            Predicate::Not(p) => p.for_each_atom(f),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.for_each_atom(f)),
        }
    }
}

/// Equivalent to [`Predicate::eval`].
pub fn eval_predicate(p: &Predicate, t: &DataTuple) -> bool {
    p.eval(t)
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, ps: &[Predicate], sep: &str) -> fmt::Result {
            write!(f, "(")?;
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, ")")
        }
        match self {
            Predicate::True => write!(f, "TRUE"),
            Predicate::Atom(a) => write!(f, "{a}"),
            Predicate::Not(p) => write!(f, "NOT {p}"),
            Predicate::And(ps) => join(f, ps, "AND"),
            Predicate::Or(ps) => join(f, ps, "OR"),
        }
    }
}
