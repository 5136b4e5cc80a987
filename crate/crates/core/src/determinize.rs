//! On-the-fly subset construction over predicate bit-vectors.
//!
//! Each tuple is classified once against the automaton's atoms. The
//! resulting bit-vector is interned to a small symbol, and subset
//! transitions are cached per (subset, symbol).

use std::fmt;
use std::hash::BuildHasherDefault;
use std::num::NonZeroUsize;

use indexmap::IndexSet;
use lru::LruCache;
use rustc_hash::{FxHashMap, FxHasher};
use smallvec::SmallVec;

use crate::cea::{normalize_initial, Cea, Mark, StateId};
use crate::event::{Atom, DataTuple, Predicate};

/// Interned subset of automaton states.
pub type DetId = u32;
/// Interned bit-vector.
pub type Symbol = u32;

type FxIndexSet<T> = IndexSet<T, BuildHasherDefault<FxHasher>>;

/// Fixed-length bit-vector; bit `i` is set iff the tuple satisfies atom `i`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    words: SmallVec<[u64; 2]>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: SmallVec::from_elem(0, len.div_ceil(64)),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    /// Parses a string of `0`/`1`, bit 0 first.
    pub fn from_bits(s: &str) -> Option<Self> {
        let mut v = BitVector::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                _ => return None,
            }
        }
        Some(v)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

/// Evaluates every atom once against `t`.
pub fn eval_bitvector(t: &DataTuple, atoms: &[Atom]) -> BitVector {
    let mut v = BitVector::zeros(atoms.len());
    for (i, a) in atoms.iter().enumerate() {
        if a.eval(t) {
            v.set(i, true);
        }
    }
    v
}

/// A transition predicate rewritten over atom indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredExpr {
    True,
    Atom(usize),
    Not(Box<PredExpr>),
    And(Vec<PredExpr>),
    Or(Vec<PredExpr>),
}

impl PredExpr {
    /// # Panics
    /// If `p` mentions an atom missing from `atoms`.
    pub fn compile(p: &Predicate, atoms: &[Atom]) -> PredExpr {
        match p {
            Predicate::True => PredExpr::True,
            Predicate::Atom(a) => PredExpr::Atom(atoms.iter().position(|b| b == a).expect("atom not collected")),
            Predicate::Not(q) => PredExpr::Not(Box::new(PredExpr::compile(q, atoms))),
            Predicate::And(qs) => PredExpr::And(qs.iter().map(|q| PredExpr::compile(q, atoms)).collect()),
            Predicate::Or(qs) => PredExpr::Or(qs.iter().map(|q| PredExpr::compile(q, atoms)).collect()),
        }
    }

    pub fn eval(&self, v: &BitVector) -> bool {
        match self {
            PredExpr::True => true,
            PredExpr::Atom(i) => v.get(*i),
            PredExpr::Not(p) => !p.eval(v),
            PredExpr::And(ps) => ps.iter().all(|p| p.eval(v)),
            PredExpr::Or(ps) => ps.iter().any(|p| p.eval(v)),
        }
    }
}

/// Cache and interning counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetStats {
    pub det_states: usize,
    pub symbols: usize,
    pub hits: u64,
    pub misses: u64,
}

impl DetStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Successors of a subset on one symbol: (marking, unmarking).
pub type Step = (Option<DetId>, Option<DetId>);

enum Cache {
    Unbounded(FxHashMap<u64, Step>),
    Lru(LruCache<u64, Step, BuildHasherDefault<FxHasher>>),
}

/// Lazily determinized view of a [`Cea`].
pub struct Determinizer {
    cea: Cea,
    atoms: Vec<Atom>,
    /// Outgoing transitions per automaton state.
    out: Vec<Vec<(PredExpr, Mark, StateId)>>,
    states: FxIndexSet<Box<[StateId]>>,
    finals: Vec<bool>,
    symbols: FxIndexSet<BitVector>,
    cache: Cache,
    hits: u64,
    misses: u64,
    scratch: (Vec<StateId>, Vec<StateId>),
}

impl Determinizer {
    pub fn new(cea: &Cea) -> Self {
        Self::with_cache_cap(cea, None)
    }

    /// `cap` bounds the number of cached subset transitions.
    pub fn with_cache_cap(cea: &Cea, cap: Option<NonZeroUsize>) -> Self {
        let cea = normalize_initial(cea);
        let atoms = cea.collect_atoms();
        let mut out = vec![Vec::new(); cea.num_states];
        for t in &cea.transitions {
            out[t.from].push((PredExpr::compile(&t.pred, &atoms), t.mark, t.to));
        }
        let cache = match cap {
            None => Cache::Unbounded(FxHashMap::default()),
            Some(c) => Cache::Lru(LruCache::with_hasher(c, BuildHasherDefault::default())),
        };
        let mut d = Determinizer {
            cea,
            atoms,
            out,
            states: FxIndexSet::default(),
            finals: Vec::new(),
            symbols: FxIndexSet::default(),
            cache,
            hits: 0,
            misses: 0,
            scratch: (Vec::new(), Vec::new()),
        };
        let q0 = d.cea.initial;
        d.intern(&[q0]);
        d
    }

    pub fn cea(&self) -> &Cea {
        &self.cea
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// The singleton subset of the initial state. Always id 0.
    pub fn initial(&self) -> DetId {
        0
    }

    pub fn is_final(&self, s: DetId) -> bool {
        self.finals[s as usize]
    }

    /// Automaton states making up a subset, sorted.
    pub fn states_of(&self, s: DetId) -> &[StateId] {
        &self.states[s as usize]
    }

    /// Number of subsets interned so far.
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn stats(&self) -> DetStats {
        DetStats {
            det_states: self.states.len(),
            symbols: self.symbols.len(),
            hits: self.hits,
            misses: self.misses,
        }
    }

    pub fn eval_bitvector(&self, t: &DataTuple) -> BitVector {
        eval_bitvector(t, &self.atoms)
    }

    /// Classifies a tuple into an interned symbol.
    pub fn read(&mut self, t: &DataTuple) -> Symbol {
        let v = self.eval_bitvector(t);
        self.symbol(v)
    }

    pub fn symbol(&mut self, v: BitVector) -> Symbol {
        assert_eq!(v.len(), self.atoms.len(), "bit-vector length must match the atom count");
        let (i, _) = self.symbols.insert_full(v);
        i as Symbol
    }

    pub fn vector(&self, sym: Symbol) -> &BitVector {
        &self.symbols[sym as usize]
    }

    fn intern(&mut self, set: &[StateId]) -> DetId {
        if let Some(i) = self.states.get_index_of(set) {
            return i as DetId;
        }
        let fin = set.iter().any(|&q| self.cea.is_final(q));
        let (i, _) = self.states.insert_full(set.into());
        self.finals.push(fin);
        DetId::try_from(i).expect("too many determinized states")
    }

    /// Cached successors of `s` on `sym`.
    #[inline]
    pub fn step(&mut self, s: DetId, sym: Symbol) -> Step {
        let key = (u64::from(s) << 32) | u64::from(sym);
        let cached = match &mut self.cache {
            Cache::Unbounded(m) => m.get(&key).copied(),
            Cache::Lru(m) => m.get(&key).copied(),
        };
        if let Some(r) = cached {
            self.hits += 1;
            return r;
        }
        self.misses += 1;
        let r = self.compute(s, sym);
        match &mut self.cache {
            Cache::Unbounded(m) => {
                m.insert(key, r);
            }
            Cache::Lru(m) => {
                m.put(key, r);
            }
        }
        r
    }

    /// `delta(s, v, action)`.
    pub fn delta(&mut self, s: DetId, v: &BitVector, action: Mark) -> Option<DetId> {
        let sym = self.symbol(v.clone());
        let (m, u) = self.step(s, sym);
        match action {
            Mark::Mark => m,
            Mark::Unmark => u,
        }
    }

    /// Successors computed from scratch, bypassing and not filling the cache.
    pub fn compute(&mut self, s: DetId, sym: Symbol) -> Step {
        let (mut marked, mut unmarked) = std::mem::take(&mut self.scratch);
        marked.clear();
        unmarked.clear();
        let v = &self.symbols[sym as usize];
        for &p in self.states[s as usize].iter() {
            for (pred, mark, q) in &self.out[p] {
                if pred.eval(v) {
                    match mark {
                        Mark::Mark => marked.push(*q),
                        Mark::Unmark => unmarked.push(*q),
                    }
                }
            }
        }
        let mut finish = |set: &mut Vec<StateId>| {
            if set.is_empty() {
                return None;
            }
            set.sort_unstable();
            set.dedup();
            Some(self.intern(set))
        };
        let r = (finish(&mut marked), finish(&mut unmarked));
        self.scratch = (marked, unmarked);
        r
    }

    pub fn clear_cache(&mut self) {
        match &mut self.cache {
            Cache::Unbounded(m) => m.clear(),
            Cache::Lru(m) => m.clear(),
        }
    }
}

impl fmt::Debug for Determinizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Determinizer")
            .field("atoms", &self.atoms.len())
            .field("stats", &self.stats())
            .finish()
    }
}

/// The interned initial subset of a fresh determinizer for `a`.
pub fn initial_det_state(d: &Determinizer) -> DetId {
    d.initial()
}
