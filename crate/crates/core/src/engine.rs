//! Streaming evaluation of a complex event automaton.
//!
//! Each event updates a table from determinized states to union-lists of
//! tECS nodes, then enumerates the complex events ending at that event.

use std::num::NonZeroUsize;

use crate::cea::Cea;
use crate::ceql::ConsumePolicy;
use crate::determinize::{DetId, DetStats, Determinizer, Symbol};
use crate::event::{ComplexEvent, DataTuple, Position, Time};
use crate::tecs::{EnumBuffers, EnumStats, NodeId, OpenEvent, Tecs, TecsStats, UnionList};

/// Default cap on complex events emitted per trigger.
pub const DEFAULT_LIMIT: usize = 1000;
/// Default number of events between pruning passes.
pub const DEFAULT_PRUNE_PERIOD: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    /// Largest allowed `time(end) - time(start)`; `None` is unbounded.
    pub window: Option<Time>,
    pub consume: ConsumePolicy,
    /// Cap on emissions per trigger; `None` is unbounded.
    pub limit: Option<usize>,
    pub prune_period: u64,
    /// Check structural invariants after every event.
    pub audit: bool,
    pub cache_cap: Option<NonZeroUsize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window: None,
            consume: ConsumePolicy::None,
            limit: Some(DEFAULT_LIMIT),
            prune_period: DEFAULT_PRUNE_PERIOD,
            audit: false,
            cache_cap: None,
        }
    }
}

impl EngineConfig {
    pub fn with_window(mut self, window: Option<Time>) -> Self {
        self.window = window;
        self
    }

    pub fn unlimited(mut self) -> Self {
        self.limit = None;
        self
    }

    pub fn audited(mut self) -> Self {
        self.audit = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("event at position {position} has time {time}, earlier than the previous time {previous}")]
    TimeOrder {
        position: Position,
        time: Time,
        previous: Time,
    },
    #[error("event position {position} does not follow position {previous}")]
    PositionOrder { position: Position, previous: Position },
    #[error("invariant violated after position {position}: {message}")]
    Audit { position: Position, message: String },
}

/// Receives `(trigger position, complex event)` pairs.
pub trait OutputSink {
    fn emit(&mut self, trigger: Position, event: ComplexEvent);
}

impl<F: FnMut(Position, ComplexEvent)> OutputSink for F {
    fn emit(&mut self, trigger: Position, event: ComplexEvent) {
        self(trigger, event)
    }
}

impl OutputSink for Vec<(Position, ComplexEvent)> {
    fn emit(&mut self, trigger: Position, event: ComplexEvent) {
        self.push((trigger, event));
    }
}

/// Discards everything.
pub struct NullSink;

impl OutputSink for NullSink {
    fn emit(&mut self, _: Position, _: ComplexEvent) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub events: u64,
    pub outputs: u64,
    /// Triggers whose enumeration stopped at the cap.
    pub capped_triggers: u64,
    pub active_states: usize,
    pub max_active_states: usize,
    pub prunes: u64,
    /// Node allocations during the most recent event.
    pub last_event_allocs: u64,
    pub max_event_allocs: u64,
    pub det: DetStats,
    pub tecs: TecsStats,
    pub enumeration: EnumStats,
}

impl EngineStats {
    /// Folds in the counters of another engine. Gauges add up, peaks take the max.
    pub fn absorb(&mut self, o: &EngineStats) {
        self.events += o.events;
        self.outputs += o.outputs;
        self.capped_triggers += o.capped_triggers;
        self.active_states += o.active_states;
        self.max_active_states = self.max_active_states.max(o.max_active_states);
        self.prunes += o.prunes;
        self.last_event_allocs = self.last_event_allocs.max(o.last_event_allocs);
        self.max_event_allocs = self.max_event_allocs.max(o.max_event_allocs);
        self.det.det_states += o.det.det_states;
        self.det.symbols += o.det.symbols;
        self.det.hits += o.det.hits;
        self.det.misses += o.det.misses;
        self.tecs.allocated += o.tecs.allocated;
        self.tecs.freed_unreferenced += o.tecs.freed_unreferenced;
        self.tecs.freed_expired += o.tecs.freed_expired;
        self.tecs.live += o.tecs.live;
        self.tecs.peak_live = self.tecs.peak_live.max(o.tecs.peak_live);
        self.enumeration.absorb(o.enumeration);
    }
}

#[derive(Debug)]
struct Entry {
    state: DetId,
    list: UnionList,
}

/// The union-list being read by a transition step.
enum Source {
    /// Not in any table; released by the caller if it is not moved.
    Fresh(UnionList),
    /// Entry `i` of the current table.
    Old(usize),
}

#[derive(Debug)]
pub struct Engine {
    det: Determinizer,
    tecs: Tecs,
    cfg: EngineConfig,
    /// Active states in insertion order.
    table: Vec<Entry>,
    next: Vec<Entry>,
    /// Index of each state in `next`, valid when `seen[q] == epoch`.
    slot: Vec<u32>,
    seen: Vec<u64>,
    epoch: u64,
    last: Option<(Position, Time)>,
    since_prune: u64,
    stats: EngineStats,
    buf: EnumBuffers,
    fault: bool,
}

impl Engine {
    pub fn new(cea: &Cea, cfg: EngineConfig) -> Self {
        let det = Determinizer::with_cache_cap(cea, cfg.cache_cap);
        let tecs = if cfg.window.is_some() {
            Tecs::with_pruning()
        } else {
            Tecs::new()
        };
        Engine {
            det,
            tecs,
            cfg,
            table: Vec::new(),
            next: Vec::new(),
            slot: Vec::new(),
            seen: Vec::new(),
            epoch: 0,
            last: None,
            since_prune: 0,
            stats: EngineStats::default(),
            buf: EnumBuffers::default(),
            fault: false,
        }
    }

    /// Test hook: records every marked position one step too late, so
    /// differential checks have something to catch.
    #[doc(hidden)]
    pub fn inject_fault(&mut self) {
        self.fault = true;
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn determinizer(&self) -> &Determinizer {
        &self.det
    }

    pub fn tecs(&self) -> &Tecs {
        &self.tecs
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats {
            det: self.det.stats(),
            tecs: self.tecs.stats(),
            active_states: self.table.len(),
            ..self.stats
        }
    }

    /// Active states and their union-lists, in insertion order.
    pub fn active(&self) -> impl Iterator<Item = (DetId, &UnionList)> {
        self.table.iter().map(|e| (e.state, &e.list))
    }

    /// Time of the most recent event, if any.
    pub fn last_time(&self) -> Option<Time> {
        self.last.map(|(_, t)| t)
    }

    fn min_time(&self, now: Time) -> Option<Time> {
        self.cfg.window.and_then(|w| now.checked_sub(w))
    }

    /// Processes one event and emits the complex events ending at it.
    /// Returns how many were emitted.
    pub fn process_event(&mut self, t: &DataTuple, sink: &mut impl OutputSink) -> Result<usize, EngineError> {
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
        let allocs_before = self.tecs.stats().allocated;
        let sym = self.det.read(t);
        self.update(sym, t.position, t.time);
        let emitted = self.output(t.position, t.time, sink);
        if self.cfg.consume == ConsumePolicy::Any && emitted > 0 {
            self.clear();
        }
        self.tecs.collect();
        self.since_prune += 1;
        if self.since_prune >= self.cfg.prune_period {
            self.prune(t.time);
        }
        let allocs = self.tecs.stats().allocated - allocs_before;
        self.stats.events += 1;
        self.stats.outputs += emitted as u64;
        self.stats.last_event_allocs = allocs;
        self.stats.max_event_allocs = self.stats.max_event_allocs.max(allocs);
        self.stats.max_active_states = self.stats.max_active_states.max(self.table.len());
        if self.cfg.audit {
            self.audit().map_err(|message| EngineError::Audit {
                position: t.position,
                message,
            })?;
        }
        Ok(emitted)
    }

    fn update(&mut self, sym: Symbol, j: Position, now: Time) {
        self.epoch += 1;
        debug_assert!(self.next.is_empty());

        let b = self.tecs.bottom(j, now);
        let init = self.tecs.ul_init(b);
        let q0 = self.det.initial();
        let leftover = self.exec_trans(q0, Source::Fresh(init), sym, j);
        if let Some(ul) = leftover {
            self.tecs.ul_release(ul);
        }

        let min_time = self.min_time(now);
        for i in 0..self.table.len() {
            if let Some(m) = min_time {
                if !self.tecs.ul_truncate(&mut self.table[i].list, m) {
                    continue;
                }
            }
            let p = self.table[i].state;
            self.exec_trans(p, Source::Old(i), sym, j);
        }

        for e in self.table.drain(..) {
            if !e.list.is_empty() {
                self.tecs.ul_release(e.list);
            }
        }
        std::mem::swap(&mut self.table, &mut self.next);
    }

    /// Runs the transitions of `p` on the current symbol. Returns a fresh
    /// list back unless it was moved into the new table.
    fn exec_trans(&mut self, p: DetId, src: Source, sym: Symbol, j: Position) -> Option<UnionList> {
        let (marked, unmarked) = self.det.step(p, sym);
        self.grow_slots();
        // The list is merged lazily: an unmarking step into a new entry
        // just moves it.
        let mut merged: Option<NodeId> = None;
        if let Some(q) = marked {
            let n = self.merged(&mut merged, &src);
            let pos = if self.fault { j + 1 } else { j };
            let n2 = self.tecs.extend(n, pos);
            self.add_node(q, n2);
        }
        if let Some(q) = unmarked {
            if self.seen[q as usize] == self.epoch {
                let n = self.merged(&mut merged, &src);
                self.add_node(q, n);
            } else {
                let list = match src {
                    Source::Fresh(ul) => ul,
                    Source::Old(i) => std::mem::take(&mut self.table[i].list),
                };
                self.push_entry(q, list);
                return None;
            }
        }
        match src {
            Source::Fresh(ul) => Some(ul),
            Source::Old(_) => None,
        }
    }

    fn merged(&mut self, cache: &mut Option<NodeId>, src: &Source) -> NodeId {
        *cache.get_or_insert_with(|| match src {
            Source::Fresh(ul) => self.tecs.merge(ul),
            Source::Old(i) => self.tecs.merge(&self.table[*i].list),
        })
    }

    fn grow_slots(&mut self) {
        let n = self.det.num_states();
        if self.slot.len() < n {
            self.slot.resize(n, 0);
            self.seen.resize(n, 0);
        }
    }

    /// `Add(q, n, init(n))`: insert into an existing entry or start one.
    fn add_node(&mut self, q: DetId, n: NodeId) {
        if self.seen[q as usize] == self.epoch {
            let idx = self.slot[q as usize] as usize;
            let mut ul = std::mem::take(&mut self.next[idx].list);
            self.tecs.ul_insert(&mut ul, n);
            self.next[idx].list = ul;
        } else {
            let ul = self.tecs.ul_init(n);
            self.push_entry(q, ul);
        }
    }

    fn push_entry(&mut self, q: DetId, list: UnionList) {
        self.seen[q as usize] = self.epoch;
        self.slot[q as usize] = self.next.len() as u32;
        self.next.push(Entry { state: q, list });
    }

    fn output(&mut self, j: Position, now: Time, sink: &mut impl OutputSink) -> usize {
        let limit = self.cfg.limit.unwrap_or(usize::MAX);
        let min_time = self.min_time(now);
        let mut emitted = 0usize;
        for i in 0..self.table.len() {
            if !self.det.is_final(self.table[i].state) {
                continue;
            }
            if emitted >= limit {
                break;
            }
            let n = self.tecs.merge(&self.table[i].list);
            let st = self
                .tecs
                .enumerate(n, j, min_time, limit - emitted, &mut self.buf, |c| sink.emit(j, c));
            emitted += st.emitted as usize;
            self.stats.enumeration.absorb(st);
        }
        if self.cfg.limit.is_some_and(|l| emitted >= l) {
            self.stats.capped_triggers += 1;
        }
        emitted
    }

    /// Forgets every open complex event.
    pub fn clear(&mut self) {
        for e in self.table.drain(..) {
            self.tecs.ul_release(e.list);
        }
    }

    /// Drops state that can no longer contribute inside the window.
    pub fn prune(&mut self, now: Time) {
        self.since_prune = 0;
        let Some(min_time) = self.min_time(now) else {
            return;
        };
        let tecs = &mut self.tecs;
        self.table.retain_mut(|e| tecs.ul_truncate(&mut e.list, min_time));
        self.tecs.prune(min_time);
        self.stats.prunes += 1;
    }

    /// Checks the tECS and table invariants.
    pub fn audit(&self) -> Result<(), String> {
        let min_time = self.last.and_then(|(_, now)| self.min_time(now));
        self.tecs.audit(min_time)?;
        let bound = self.det.num_states();
        let mut prev = None;
        for e in &self.table {
            self.tecs.audit_list(&e.list)?;
            if e.list.len() > bound {
                return Err(format!(
                    "union-list of state {} has {} entries, more than the {bound} states",
                    e.state,
                    e.list.len()
                ));
            }
            let head = self.tecs.stamp(e.list.head());
            if prev.is_some_and(|p| p < head) {
                return Err("active states are not ordered by maximum start".into());
            }
            prev = Some(head);
        }
        Ok(())
    }

    /// Open complex events per active state; exponential, for tests.
    pub fn open_events(&self) -> Vec<(DetId, Vec<OpenEvent>)> {
        self.table
            .iter()
            .map(|e| {
                let mut all: Vec<_> = e.list.nodes().iter().flat_map(|&n| self.tecs.open_events(n)).collect();
                all.sort();
                (e.state, all)
            })
            .collect()
    }
}

/// Runs an engine over a whole stream and collects its output.
pub fn run_to_vec(
    cea: &Cea,
    cfg: EngineConfig,
    stream: &[DataTuple],
) -> Result<Vec<(Position, ComplexEvent)>, EngineError> {
    let mut e = Engine::new(cea, cfg);
    let mut out = Vec::new();
    for t in stream {
        e.process_event(t, &mut out)?;
    }
    Ok(out)
}
