//! Workloads shared by the benchmarks.

use cer_core::synth::{generate, sequence_query, GenSpec};
use cer_core::{CompiledQuery, DataTuple, Engine, EngineConfig, NullSink};

/// A no-output sequence query of length `n` and its stream.
pub struct Workload {
    pub query: CompiledQuery,
    pub stream: Vec<DataTuple>,
}

impl Workload {
    pub fn sequence(n: usize, window: u64, events: usize, types: usize) -> Workload {
        let query = CompiledQuery::new(&sequence_query(n, window, true)).expect("generated query parses");
        let stream = generate(&GenSpec {
            events,
            types,
            ..GenSpec::default()
        });
        Workload { query, stream }
    }

    /// Same as [`Workload::sequence`] but without the never-occurring tail,
    /// so it emits.
    pub fn matching(n: usize, window: u64, events: usize) -> Workload {
        let query = CompiledQuery::new(&sequence_query(n, window, false)).expect("generated query parses");
        let stream = generate(&GenSpec {
            events,
            types: n,
            ..GenSpec::default()
        });
        Workload { query, stream }
    }

    pub fn config(&self, limit: Option<usize>) -> EngineConfig {
        self.query.engine_config(EngineConfig {
            limit,
            ..EngineConfig::default()
        })
    }

    /// Runs the whole stream once and returns the number of outputs.
    pub fn run(&self, limit: Option<usize>) -> u64 {
        let mut e = Engine::new(&self.query.cea, self.config(limit));
        for t in &self.stream {
            e.process_event(t, &mut NullSink)
                .expect("generated streams are ordered");
        }
        e.stats().outputs
    }
}
