//! Complex event recognition over streams.

pub mod cea;
pub mod ceql;
pub mod determinize;
pub mod engine;
pub mod event;
pub mod fixtures;
pub mod oracle;
pub mod partition;
pub mod query;
pub mod synth;
pub mod tecs;

pub use cea::{compile, Cea};
pub use ceql::{parse, CelFormula, ConsumePolicy, QueryAst, Schema};
pub use determinize::{DetStats, Determinizer};
pub use engine::{Engine, EngineConfig, EngineError, EngineStats, NullSink, OutputSink};
pub use event::{ComplexEvent, DataTuple, Position, Time, Value};
pub use partition::{PartitionKey, Partitioner};
pub use query::{CompiledQuery, QueryError, TimeSource};
