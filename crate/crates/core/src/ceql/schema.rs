use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{CelFormula, CeqlError};
use crate::event::{Atom, AtomValue, CmpOp, DataTuple, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrType {
    Int,
    Double,
    String,
    Bool,
}

impl AttrType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "int" | "integer" | "long" => AttrType::Int,
            "double" | "float" => AttrType::Double,
            "string" | "str" | "text" => AttrType::String,
            "bool" | "boolean" => AttrType::Bool,
            _ => return None,
        })
    }

    /// Converts a raw field into a value of this type. Empty input is null.
    pub fn read(self, raw: &str) -> Result<Value, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(Value::Null);
        }
        match self {
            AttrType::Int => raw
                .parse()
                .map(Value::Int)
                .map_err(|_| format!("`{raw}` is not an int")),
            AttrType::Double => raw
                .parse()
                .map(Value::Float)
                .map_err(|_| format!("`{raw}` is not a double")),
            AttrType::String => Ok(Value::text(raw)),
            AttrType::Bool => match raw.to_ascii_lowercase().as_str() {
                "true" | "1" => Ok(Value::Bool(true)),
                "false" | "0" => Ok(Value::Bool(false)),
                _ => Err(format!("`{raw}` is not a bool")),
            },
        }
    }

    fn accepts(self, v: &Value) -> bool {
        matches!(
            (self, v),
            (_, Value::Null)
                | (AttrType::Int | AttrType::Double, Value::Int(_) | Value::Float(_))
                | (AttrType::String, Value::Text(_))
                | (AttrType::Bool, Value::Bool(_))
        )
    }

    fn compatible(self, op: CmpOp, c: &AtomValue) -> bool {
        match (self, c) {
            (AttrType::Int | AttrType::Double, AtomValue::Int(_) | AtomValue::Float(_)) => true,
            (AttrType::String, AtomValue::Text(_)) => matches!(op, CmpOp::Eq | CmpOp::Ne),
            (AttrType::Bool, AtomValue::Bool(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttrType::Int => "int",
            AttrType::Double => "double",
            AttrType::String => "string",
            AttrType::Bool => "bool",
        })
    }
}

/// Declared event types and their attributes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    types: BTreeMap<String, Vec<(String, AttrType)>>,
}

impl Schema {
    /// Parses `DECLARE EVENT T(a:int, b:string)` lines. Blank lines and
    /// lines starting with `#` or `--` are ignored.
    pub fn parse(text: &str) -> Result<Schema, CeqlError> {
        let mut schema = Schema::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("--") {
                continue;
            }
            let err = |m: &str| CeqlError::Schema(format!("line {}: {m}", n + 1));
            let mut words = line.split_whitespace();
            let ok = matches!(words.next(), Some(w) if w.eq_ignore_ascii_case("DECLARE"))
                && matches!(words.next(), Some(w) if w.eq_ignore_ascii_case("EVENT"));
            if !ok {
                return Err(err("expected `DECLARE EVENT <Type>(...)`"));
            }
            let rest: String = words.collect::<Vec<_>>().join(" ");
            let open = rest.find('(').ok_or_else(|| err("missing `(`"))?;
            let close = rest.rfind(')').ok_or_else(|| err("missing `)`"))?;
            if close < open || !rest[close + 1..].trim().is_empty() {
                return Err(err("malformed attribute list"));
            }
            let name = rest[..open].trim();
            if !is_ident(name) {
                return Err(err(&format!("invalid event type name `{name}`")));
            }
            let mut attrs: Vec<(String, AttrType)> = Vec::new();
            let body = rest[open + 1..close].trim();
            if !body.is_empty() {
                for field in body.split(',') {
                    let (a, t) = field.split_once(':').ok_or_else(|| err("expected `attr:type`"))?;
                    let (a, t) = (a.trim(), t.trim());
                    if !is_ident(a) {
                        return Err(err(&format!("invalid attribute name `{a}`")));
                    }
                    if a == "type" {
                        return Err(err("`type` is reserved for the event type"));
                    }
                    let ty = AttrType::parse(t).ok_or_else(|| err(&format!("unknown attribute type `{t}`")))?;
                    if attrs.iter().any(|(x, _)| x == a) {
                        return Err(err(&format!("duplicate attribute `{a}`")));
                    }
                    attrs.push((a.to_string(), ty));
                }
            }
            if schema.types.insert(name.to_string(), attrs).is_some() {
                return Err(err(&format!("event type `{name}` declared twice")));
            }
        }
        Ok(schema)
    }

    pub fn declare(&mut self, event_type: &str, attrs: &[(&str, AttrType)]) {
        self.types.insert(
            event_type.to_string(),
            attrs.iter().map(|(a, t)| (a.to_string(), *t)).collect(),
        );
    }

    pub fn attributes(&self, event_type: &str) -> Option<&[(String, AttrType)]> {
        self.types.get(event_type).map(Vec::as_slice)
    }

    pub fn attr_type(&self, event_type: &str, attr: &str) -> Option<AttrType> {
        self.attributes(event_type)?
            .iter()
            .find(|(a, _)| a == attr)
            .map(|(_, t)| *t)
    }

    /// Union of attribute names over all types, first declaration wins the type.
    pub fn all_attributes(&self) -> BTreeMap<&str, AttrType> {
        let mut out = BTreeMap::new();
        for attrs in self.types.values() {
            for (a, t) in attrs {
                out.entry(a.as_str()).or_insert(*t);
            }
        }
        out
    }

    pub fn event_types(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(String::as_str)
    }

    /// Checks that a tuple's values agree with the declared attribute types.
    pub fn validate_tuple(&self, t: &DataTuple) -> Result<(), String> {
        let Some(attrs) = self.attributes(&t.event_type) else {
            return Err(format!("undeclared event type `{}`", t.event_type));
        };
        for (name, v) in t.attributes() {
            match attrs.iter().find(|(a, _)| a == name) {
                Some((_, ty)) if !ty.accepts(v) => {
                    return Err(format!(
                        "attribute `{name}` of `{}` expects {ty}, got {}",
                        t.event_type,
                        v.type_name()
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Type-checks the filters of a formula.
    pub fn check(&self, formula: &CelFormula) -> Result<(), CeqlError> {
        for r in formula.event_types() {
            if !self.types.contains_key(&r) {
                return Err(CeqlError::Schema(format!("undeclared event type `{r}`")));
            }
        }
        let bindings = var_types(formula);
        let mut result = Ok(());
        formula.walk(&mut |f| {
            if result.is_err() {
                return;
            }
            if let CelFormula::Filter(_, x, p) = f {
                let empty = BTreeSet::new();
                let types = bindings.get(x.as_str()).unwrap_or(&empty);
                p.for_each_atom(&mut |a| {
                    if result.is_ok() {
                        result = self.check_atom(x, types, a);
                    }
                });
            }
        });
        result
    }

    fn check_atom(&self, var: &str, types: &BTreeSet<String>, atom: &Atom) -> Result<(), CeqlError> {
        let Atom::Compare { attr, op, value } = atom else {
            return Ok(());
        };
        let mut declared = false;
        for t in types {
            if let Some(ty) = self.attr_type(t, attr) {
                declared = true;
                if !ty.compatible(*op, value) {
                    return Err(CeqlError::Schema(format!(
                        "{var}[{atom}]: attribute `{attr}` of `{t}` is {ty}, incompatible with {} {}",
                        op.symbol(),
                        value.to_value()
                    )));
                }
            }
        }
        if !declared {
            return Err(CeqlError::Schema(format!(
                "{var}[{atom}]: no event type bound to `{var}` declares attribute `{attr}`"
            )));
        }
        Ok(())
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

/// Event types each variable can be bound to.
fn var_types(f: &CelFormula) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    f.walk(&mut |g| match g {
        CelFormula::EventType(r) => {
            out.entry(r.clone()).or_default().insert(r.clone());
        }
        CelFormula::As(inner, x) => {
            out.entry(x.clone()).or_default().extend(inner.event_types());
        }
        _ => {}
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ceql::parse;

    const STOCK: &str = "DECLARE EVENT SELL(name:string, price:int, volume:int)\n\
                         DECLARE EVENT BUY(name:string, price:int, volume:int)\n";

    #[test]
    fn parses_declarations() {
        let s = Schema::parse(STOCK).unwrap();
        assert_eq!(s.attr_type("SELL", "price"), Some(AttrType::Int));
        assert_eq!(s.attr_type("BUY", "nope"), None);
        assert_eq!(s.event_types().collect::<Vec<_>>(), vec!["BUY", "SELL"]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Schema::parse("EVENT X(a:int)").is_err());
        assert!(Schema::parse("DECLARE EVENT X(a:blob)").is_err());
        assert!(Schema::parse("DECLARE EVENT X(a:int, a:int)").is_err());
    }

    #[test]
    fn accepts_well_typed_filters() {
        let s = Schema::parse(STOCK).unwrap();
        let q = parse("SELECT * FROM S WHERE SELL as x; (BUY or SELL) as y FILTER x[price > 1.5] AND y[name = 'A']")
            .unwrap();
        q.check_schema(&s).unwrap();
    }

    #[test]
    fn rejects_ill_typed_filters() {
        let s = Schema::parse(STOCK).unwrap();
        let q = parse("SELECT * FROM S WHERE SELL as x FILTER x[name > 'A']").unwrap();
        assert!(q.check_schema(&s).is_err());
        let q = parse("SELECT * FROM S WHERE SELL as x FILTER x[price = 'A']").unwrap();
        assert!(q.check_schema(&s).is_err());
        let q = parse("SELECT * FROM S WHERE SELL as x FILTER x[colour = 1]").unwrap();
        assert!(q.check_schema(&s).is_err());
        let q = parse("SELECT * FROM S WHERE HOLD").unwrap();
        assert!(q.check_schema(&s).is_err());
    }

    #[test]
    fn reads_typed_fields() {
        assert_eq!(AttrType::Int.read("42").unwrap(), Value::Int(42));
        assert_eq!(AttrType::Double.read("2.5").unwrap(), Value::Float(2.5));
        assert_eq!(AttrType::Int.read("").unwrap(), Value::Null);
        assert!(AttrType::Int.read("x").is_err());
        assert_eq!(AttrType::Bool.read("TRUE").unwrap(), Value::Bool(true));
    }

    #[test]
    fn validates_tuples() {
        let s = Schema::parse(STOCK).unwrap();
        let ok = DataTuple::new("SELL", 0).with("price", 3);
        assert!(s.validate_tuple(&ok).is_ok());
        let bad = DataTuple::new("SELL", 0).with("price", "x");
        assert!(s.validate_tuple(&bad).is_err());
        assert!(s.validate_tuple(&DataTuple::new("HOLD", 0)).is_err());
    }
}
