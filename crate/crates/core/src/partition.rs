//! PARTITION BY: one engine per distinct key.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHasher};

use crate::cea::Cea;
use crate::engine::{Engine, EngineConfig, EngineError, EngineStats, OutputSink};
use crate::event::{ComplexEvent, DataTuple, Position, Time, Value};

/// Canonical encoding of one key component. Integral floats fold into
/// integers so `100` and `100.0` land in the same partition, matching how
/// filters compare numbers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyPart {
    Int(i64),
    Float(u64),
    Bool(bool),
    Text(Arc<str>),
}

impl KeyPart {
    /// `None` for null and NaN, which belong to no partition.
    pub fn of(v: &Value) -> Option<KeyPart> {
        Some(match v {
            Value::Null => return None,
            Value::Int(i) => KeyPart::Int(*i),
            Value::Float(f) if f.is_nan() => return None,
            Value::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e18 => KeyPart::Int(*f as i64),
            Value::Float(f) => KeyPart::Float(f.to_bits()),
            Value::Bool(b) => KeyPart::Bool(*b),
            Value::Text(s) => KeyPart::Text(s.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionKey(pub Box<[KeyPart]>);

impl PartitionKey {
    pub fn shard(&self, shards: usize) -> usize {
        let mut h = FxHasher::default();
        self.hash(&mut h);
        (h.finish() % shards as u64) as usize
    }
}

/// The key of `t`, or `None` when some attribute is null or missing.
pub fn route(attrs: &[String], t: &DataTuple) -> Option<PartitionKey> {
    attrs
        .iter()
        .map(|a| KeyPart::of(t.get(a)))
        .collect::<Option<Vec<_>>>()
        .map(|v| PartitionKey(v.into_boxed_slice()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionStats {
    pub routed: u64,
    /// Tuples with a null key component.
    pub dropped: u64,
    pub engines_created: u64,
    pub evicted: u64,
    pub peak_engines: usize,
    /// Live tECS nodes summed over engines.
    pub live_nodes: usize,
    pub peak_live_nodes: usize,
}

/// Routes tuples to per-key engines. With no attributes it wraps one engine.
#[derive(Debug)]
pub struct Partitioner {
    cea: Cea,
    attrs: Vec<String>,
    cfg: EngineConfig,
    single: Option<Engine>,
    engines: FxHashMap<PartitionKey, Engine>,
    /// Events between idle sweeps, if eviction is on.
    evict_every: Option<u64>,
    since_sweep: u64,
    retired: EngineStats,
    last: Option<(Position, Time)>,
    stats: PartitionStats,
}

impl Partitioner {
    pub fn new(cea: &Cea, attrs: Vec<String>, cfg: EngineConfig) -> Self {
        let single = attrs.is_empty().then(|| Engine::new(cea, cfg.clone()));
        Partitioner {
            cea: cea.clone(),
            attrs,
            cfg,
            single,
            engines: FxHashMap::default(),
            evict_every: None,
            since_sweep: 0,
            retired: EngineStats::default(),
            last: None,
            stats: PartitionStats::default(),
        }
    }

    /// Drops engines whose newest event left the window, checking every
    /// `period` events. Has no effect without a window.
    pub fn with_eviction(mut self, period: u64) -> Self {
        self.evict_every = Some(period.max(1));
        self
    }

    pub fn attributes(&self) -> &[String] {
        &self.attrs
    }

    pub fn is_partitioned(&self) -> bool {
        self.single.is_none()
    }

    pub fn engine_count(&self) -> usize {
        if self.single.is_some() {
            1
        } else {
            self.engines.len()
        }
    }

    pub fn engine(&self, key: &PartitionKey) -> Option<&Engine> {
        self.engines.get(key)
    }

    pub fn stats(&self) -> PartitionStats {
        self.stats
    }

    /// Engine counters summed over live and evicted engines.
    pub fn engine_totals(&self) -> EngineStats {
        let mut total = self.retired;
        for e in self.single.iter().chain(self.engines.values()) {
            total.absorb(&e.stats());
        }
        total
    }

    /// Sends `t` to its engine, creating it on first sight.
    pub fn dispatch(&mut self, t: &DataTuple, sink: &mut impl OutputSink) -> Result<usize, EngineError> {
        if let Some((p, tm)) = self.last {
            if t.position <= p {
                return Err(EngineError::PositionOrder {
                    position: t.position,
                    previous: p,
                });
            }
            if t.time < tm {
                return Err(EngineError::TimeOrder {
                    position: t.position,
                    time: t.time,
                    previous: tm,
                });
            }
        }
        self.last = Some((t.position, t.time));
        let engine = match &mut self.single {
            Some(e) => e,
            None => {
                let Some(key) = route(&self.attrs, t) else {
                    self.stats.dropped += 1;
                    return Ok(0);
                };
                let (cea, cfg, stats) = (&self.cea, &self.cfg, &mut self.stats);
                self.engines.entry(key).or_insert_with(|| {
                    stats.engines_created += 1;
                    Engine::new(cea, cfg.clone())
                })
            }
        };
        self.stats.routed += 1;
        let before = engine.tecs().live();
        let n = engine.process_event(t, sink)?;
        self.stats.live_nodes = self.stats.live_nodes + engine.tecs().live() - before;
        self.stats.peak_live_nodes = self.stats.peak_live_nodes.max(self.stats.live_nodes);
        self.stats.peak_engines = self.stats.peak_engines.max(self.engine_count());
        if let Some(period) = self.evict_every {
            self.since_sweep += 1;
            if self.since_sweep >= period {
                self.since_sweep = 0;
                self.evict_idle(t.time);
            }
        }
        Ok(n)
    }

    /// Removes engines that can no longer produce output.
    pub fn evict_idle(&mut self, now: Time) {
        let Some(cutoff) = self.cfg.window.and_then(|w| now.checked_sub(w)) else {
            return;
        };
        let (retired, stats) = (&mut self.retired, &mut self.stats);
        self.engines.retain(|_, e| {
            let keep = e.last_time().is_some_and(|t| t >= cutoff);
            if !keep {
                let mut s = e.stats();
                stats.live_nodes -= s.tecs.live;
                s.tecs.live = 0;
                s.active_states = 0;
                retired.absorb(&s);
                stats.evicted += 1;
            }
            keep
        });
    }
}

/// Runs a whole stream, collecting `(trigger, event)` pairs in order.
pub fn run_partitioned(
    cea: &Cea,
    attrs: &[String],
    cfg: EngineConfig,
    stream: &[DataTuple],
) -> Result<Vec<(Position, ComplexEvent)>, EngineError> {
    let mut p = Partitioner::new(cea, attrs.to_vec(), cfg);
    let mut out = Vec::new();
    for t in stream {
        p.dispatch(t, &mut out)?;
    }
    Ok(out)
}

/// Like [`run_partitioned`] but shards keys across `workers` threads.
/// Each trigger belongs to one key, so sorting by trigger with a stable sort
/// reproduces the sequential order exactly.
pub fn run_parallel(
    cea: &Cea,
    attrs: &[String],
    cfg: EngineConfig,
    stream: &[DataTuple],
    workers: usize,
) -> Result<Vec<(Position, ComplexEvent)>, EngineError> {
    let workers = workers.max(1);
    if attrs.is_empty() || workers == 1 {
        return run_partitioned(cea, attrs, cfg, stream);
    }
    let mut shards: Vec<Vec<&DataTuple>> = vec![Vec::new(); workers];
    for t in stream {
        if let Some(k) = route(attrs, t) {
            shards[k.shard(workers)].push(t);
        }
    }
    let results: Vec<Result<Vec<(Position, ComplexEvent)>, EngineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| {
                let cfg = cfg.clone();
                s.spawn(move || {
                    let mut p = Partitioner::new(cea, attrs.to_vec(), cfg);
                    let mut out = Vec::new();
                    for t in shard {
                        p.dispatch(t, &mut out)?;
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    out.sort_by_key(|(j, _)| *j);
    Ok(out)
}
