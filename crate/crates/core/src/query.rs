//! Turns CEQL text into something the engine can run.

use std::fmt;

use crate::cea::{compile, Cea};
use crate::ceql::{parse, CelFormula, CeqlError, ConsumePolicy, QueryAst, Schema, SelectionStrategy, WindowUnit};
use crate::engine::EngineConfig;
use crate::event::{DataTuple, Time, Value};
use crate::partition::Partitioner;

/// Where an event's time comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeSource {
    /// Time is the stream position.
    Position,
    /// Time is whatever the ingestion layer stamped on the tuple.
    Clock,
    /// Time is read from an integer attribute.
    Attribute(String),
}

impl fmt::Display for TimeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSource::Position => f.write_str("position"),
            TimeSource::Clock => f.write_str("clock"),
            TimeSource::Attribute(a) => write!(f, "[{a}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Ceql(#[from] CeqlError),
    #[error("selection strategy {0} is not supported; only ANY is")]
    UnsupportedStrategy(&'static str),
    #[error("position {position}: time attribute `{attr}` must be a non-negative integer, found {found:?}")]
    BadTime {
        position: usize,
        attr: String,
        found: Value,
    },
}

#[derive(Debug, Clone)]
pub struct CompiledQuery {
    pub ast: QueryAst,
    /// The WHERE formula with the SELECT projection applied.
    pub formula: CelFormula,
    pub cea: Cea,
    /// Window in stream-time units.
    pub window: Option<Time>,
    pub time: TimeSource,
    pub partition_by: Vec<String>,
    pub consume: ConsumePolicy,
}

impl CompiledQuery {
    pub fn new(text: &str) -> Result<Self, QueryError> {
        Self::from_ast(parse(text)?)
    }

    pub fn with_schema(text: &str, schema: &Schema) -> Result<Self, QueryError> {
        let ast = parse(text)?;
        ast.check_schema(schema)?;
        Self::from_ast(ast)
    }

    pub fn from_ast(ast: QueryAst) -> Result<Self, QueryError> {
        if let Some(s) = ast.strategy {
            if s != SelectionStrategy::Any {
                return Err(QueryError::UnsupportedStrategy(s.keyword()));
            }
        }
        let formula = ast.desugar();
        let cea = compile(&formula);
        let (window, time) = match &ast.within {
            None => (None, TimeSource::Clock),
            Some(w) => match &w.unit {
                WindowUnit::Unit(crate::ceql::TimeUnit::Events) => (Some(w.magnitude), TimeSource::Position),
                WindowUnit::Unit(u) => (Some(w.magnitude.saturating_mul(u.scale())), TimeSource::Clock),
                WindowUnit::Attribute(a) => (Some(w.magnitude), TimeSource::Attribute(a.clone())),
            },
        };
        Ok(CompiledQuery {
            formula,
            cea,
            window,
            time,
            partition_by: ast.partition_by.clone().unwrap_or_default(),
            consume: ast.consume.unwrap_or_default(),
            ast,
        })
    }

    /// Engine settings implied by the query, on top of `base`.
    pub fn engine_config(&self, base: EngineConfig) -> EngineConfig {
        EngineConfig {
            window: self.window,
            consume: self.consume,
            ..base
        }
    }

    /// Sets `t.time` according to the query's time source.
    pub fn stamp(&self, t: &mut DataTuple) -> Result<(), QueryError> {
        match &self.time {
            TimeSource::Clock => {}
            TimeSource::Position => t.time = t.position as Time,
            TimeSource::Attribute(a) => match t.get(a) {
                Value::Int(v) if *v >= 0 => t.time = *v as Time,
                other => {
                    return Err(QueryError::BadTime {
                        position: t.position,
                        attr: a.clone(),
                        found: other.clone(),
                    })
                }
            },
        }
        Ok(())
    }

    /// A ready-to-run evaluator, partitioned if the query asks for it.
    pub fn runner(&self, base: EngineConfig) -> Partitioner {
        Partitioner::new(&self.cea, self.partition_by.clone(), self.engine_config(base))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Q1;

    #[test]
    fn window_units() {
        let q = CompiledQuery::new("SELECT * FROM S WHERE A WITHIN 2 minutes").unwrap();
        assert_eq!((q.window, q.time.clone()), (Some(120), TimeSource::Clock));
        let q = CompiledQuery::new("SELECT * FROM S WHERE A WITHIN 7 events").unwrap();
        assert_eq!((q.window, q.time.clone()), (Some(7), TimeSource::Position));
        let q = CompiledQuery::new("SELECT * FROM S WHERE A WITHIN 9 [ts]").unwrap();
        assert_eq!(q.time, TimeSource::Attribute("ts".into()));
        let q = CompiledQuery::new(Q1).unwrap();
        assert_eq!(q.window, None);
    }

    #[test]
    fn strategies() {
        assert!(CompiledQuery::new("SELECT ANY * FROM S WHERE A").is_ok());
        let err = CompiledQuery::new("SELECT MAX * FROM S WHERE A").unwrap_err();
        assert_eq!(err, QueryError::UnsupportedStrategy("MAX"));
    }

    #[test]
    fn stamping() {
        let q = CompiledQuery::new("SELECT * FROM S WHERE A WITHIN 9 [ts]").unwrap();
        let mut t = DataTuple::new("A", 3).with("ts", 40i64);
        q.stamp(&mut t).unwrap();
        assert_eq!(t.time, 40);
        let mut bad = DataTuple::new("A", 4).with("ts", "x");
        assert!(matches!(
            q.stamp(&mut bad),
            Err(QueryError::BadTime { position: 4, .. })
        ));

        let q = CompiledQuery::new("SELECT * FROM S WHERE A WITHIN 9 events").unwrap();
        let mut t = DataTuple::new("A", 5).at_time(1000);
        q.stamp(&mut t).unwrap();
        assert_eq!(t.time, 5);
    }

    #[test]
    fn schema_is_checked() {
        let schema = Schema::parse(crate::fixtures::STOCK_SCHEMA).unwrap();
        assert!(CompiledQuery::with_schema(Q1, &schema).is_ok());
        assert!(CompiledQuery::with_schema("SELECT * FROM S WHERE TRADE", &schema).is_err());
    }
}
