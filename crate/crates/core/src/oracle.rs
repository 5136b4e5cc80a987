//! Brute-force reference semantics, for differential testing on small inputs.
//!
//! Everything here is exponential on purpose. Positions reported in results
//! are the tuples' own `position` fields, so the functions also work on
//! substreams.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::cea::{Cea, Mark};
use crate::ceql::CelFormula;
use crate::determinize::{DetId, Determinizer};
use crate::event::{normalize_valuation, ComplexEvent, DataTuple, Position, Time, Valuation};

/// Longest stream [`eval_cel`] accepts.
pub const MAX_CEL_STREAM: usize = 20;
/// Longest stream the run enumerators accept.
pub const MAX_RUN_STREAM: usize = 30;
/// Upper bound on intermediate set sizes before giving up.
pub const WORK_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("stream of {len} events exceeds the oracle limit of {max}")]
    StreamTooLong { len: usize, max: usize },
    #[error("intermediate result exceeds {0} elements")]
    TooMuchWork(usize),
}

fn guard(stream: &[DataTuple], max: usize) -> Result<(), OracleError> {
    if stream.len() > max {
        Err(OracleError::StreamTooLong { len: stream.len(), max })
    } else {
        Ok(())
    }
}

/// Valuation over stream indices; converted to positions at the end.
type Val = Valuation;

/// Denotational semantics of a formula over a finite stream.
///
/// With a window, valuations spanning more than `window` time units are
/// discarded as soon as they appear. This is sound because no operator
/// shrinks an interval.
pub fn eval_cel(
    phi: &CelFormula,
    stream: &[DataTuple],
    window: Option<Time>,
) -> Result<BTreeSet<Valuation>, OracleError> {
    guard(stream, MAX_CEL_STREAM)?;
    let ev = CelEval { stream, window };
    let by_index = ev.eval(phi)?;
    Ok(by_index.into_iter().map(|v| ev.to_positions(v)).collect())
}

struct CelEval<'a> {
    stream: &'a [DataTuple],
    window: Option<Time>,
}

impl CelEval<'_> {
    fn fits(&self, v: &Val) -> bool {
        match self.window {
            Some(w) => self.stream[v.end].time - self.stream[v.start].time <= w,
            None => true,
        }
    }

    fn check(&self, set: &BTreeSet<Val>) -> Result<(), OracleError> {
        if set.len() > WORK_LIMIT {
            Err(OracleError::TooMuchWork(WORK_LIMIT))
        } else {
            Ok(())
        }
    }

    fn eval(&self, phi: &CelFormula) -> Result<BTreeSet<Val>, OracleError> {
        let out = match phi {
            CelFormula::EventType(r) => self
                .stream
                .iter()
                .enumerate()
                .filter(|(_, t)| *t.event_type == **r)
                .map(|(i, _)| Valuation::new(i, i).bind(r.clone(), [i]))
                .collect(),
            CelFormula::As(f, x) => self
                .eval(f)?
                .into_iter()
                .map(|mut v| {
                    let all: BTreeSet<Position> = v.assignment.values().flatten().copied().collect();
                    if !all.is_empty() {
                        v.assignment.insert(x.clone(), all);
                    }
                    v
                })
                .collect(),
            CelFormula::Filter(f, x, p) => self
                .eval(f)?
                .into_iter()
                .filter(|v| v.get(x).is_none_or(|s| s.iter().all(|&i| p.eval(&self.stream[i]))))
                .collect(),
            CelFormula::Or(f, g) => {
                let mut a = self.eval(f)?;
                a.extend(self.eval(g)?);
                a
            }
            CelFormula::Seq(f, g) => {
                let a = self.eval(f)?;
                let b = self.eval(g)?;
                self.seq(&a, &b)?
            }
            CelFormula::Plus(f) => {
                let base = self.eval(f)?;
                let mut acc = base.clone();
                loop {
                    let step = self.seq(&base, &acc)?;
                    let before = acc.len();
                    acc.extend(step);
                    self.check(&acc)?;
                    if acc.len() == before {
                        break;
                    }
                }
                acc
            }
            CelFormula::Proj(l, f) => self
                .eval(f)?
                .into_iter()
                .map(|mut v| {
                    v.assignment.retain(|k, _| l.contains(k));
                    v
                })
                .collect(),
        };
        self.check(&out)?;
        Ok(out)
    }

    fn seq(&self, a: &BTreeSet<Val>, b: &BTreeSet<Val>) -> Result<BTreeSet<Val>, OracleError> {
        let mut out = BTreeSet::new();
        for v1 in a {
            for v2 in b.iter().filter(|v2| v1.end < v2.start) {
                let mut v = Valuation::new(v1.start, v2.end);
                if !self.fits(&v) {
                    continue;
                }
                v.assignment = v1.assignment.clone();
                for (k, s) in &v2.assignment {
                    v.assignment.entry(k.clone()).or_default().extend(s);
                }
                out.insert(v);
            }
            if out.len() > WORK_LIMIT {
                return Err(OracleError::TooMuchWork(WORK_LIMIT));
            }
        }
        Ok(out)
    }

    fn to_positions(&self, v: Val) -> Valuation {
        let pos = |i: usize| self.stream[i].position;
        Valuation {
            start: pos(v.start),
            end: pos(v.end),
            assignment: v
                .assignment
                .into_iter()
                .map(|(k, s)| (k, s.into_iter().map(pos).collect()))
                .collect(),
        }
    }
}

/// `⌈V⌉` applied to a set of valuations.
pub fn complex_events(vals: &BTreeSet<Valuation>) -> BTreeSet<ComplexEvent> {
    vals.iter().map(normalize_valuation).collect()
}

/// One run of an automaton: the transitions taken at positions `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub start: Position,
    pub end: Position,
    /// Index into `Cea::transitions` and its mark, one per position.
    pub steps: Vec<(usize, Mark)>,
}

impl Run {
    pub fn complex_event(&self) -> ComplexEvent {
        let data = self
            .steps
            .iter()
            .enumerate()
            .filter(|(_, (_, m))| *m == Mark::Mark)
            .map(|(k, _)| self.start + k)
            .collect();
        ComplexEvent::new(self.start, self.end, data)
    }
}

type Steps = Vec<(usize, Mark)>;

/// Every accepting run, by depth-first search. Positions are stream indices.
pub fn accepting_runs(a: &Cea, stream: &[DataTuple], limit: usize) -> Result<Vec<Run>, OracleError> {
    guard(stream, MAX_RUN_STREAM)?;
    let mut out = Vec::new();
    for start in 0..stream.len() {
        // (state, next position, steps so far)
        let mut stack: Vec<(usize, usize, Steps)> = vec![(a.initial, start, Vec::new())];
        while let Some((q, j, steps)) = stack.pop() {
            if j >= stream.len() {
                continue;
            }
            for (ti, t) in a.transitions.iter().enumerate() {
                if t.from != q || !t.pred.eval(&stream[j]) {
                    continue;
                }
                let mut next = steps.clone();
                next.push((ti, t.mark));
                if a.is_final(t.to) {
                    out.push(Run {
                        start,
                        end: j,
                        steps: next.clone(),
                    });
                    if out.len() > limit {
                        return Err(OracleError::TooMuchWork(limit));
                    }
                }
                stack.push((t.to, j + 1, next));
            }
        }
    }
    Ok(out)
}

/// `{C_ρ | ρ accepting run}` computed by a breadth-first frontier of
/// (state, marked positions) pairs per start position. With a window, runs
/// are abandoned once they span more than `window` time units.
pub fn brute_runs(a: &Cea, stream: &[DataTuple], window: Option<Time>) -> Result<BTreeSet<ComplexEvent>, OracleError> {
    frontier_runs(
        stream,
        window,
        a.initial,
        |q, j, out| {
            for tr in a
                .transitions
                .iter()
                .filter(|tr| tr.from == q && tr.pred.eval(&stream[j]))
            {
                out.push((tr.to, tr.mark));
            }
        },
        |q| a.is_final(q),
    )
}

/// Same as [`brute_runs`] but stepping through a determinizer.
pub fn brute_runs_det(
    det: &mut Determinizer,
    stream: &[DataTuple],
    window: Option<Time>,
) -> Result<BTreeSet<ComplexEvent>, OracleError> {
    guard(stream, MAX_RUN_STREAM)?;
    let init = det.initial();
    let symbols: Vec<_> = stream.iter().map(|t| det.read(t)).collect();
    let det = std::cell::RefCell::new(det);
    frontier_runs(
        stream,
        window,
        init,
        |q: DetId, j, out| {
            let (m, u) = det.borrow_mut().step(q, symbols[j]);
            out.extend(m.map(|m| (m, Mark::Mark)));
            out.extend(u.map(|u| (u, Mark::Unmark)));
        },
        |q| det.borrow().is_final(q),
    )
}

fn frontier_runs<S: Copy + Ord>(
    stream: &[DataTuple],
    window: Option<Time>,
    init: S,
    mut step: impl FnMut(S, usize, &mut Vec<(S, Mark)>),
    is_final: impl Fn(S) -> bool,
) -> Result<BTreeSet<ComplexEvent>, OracleError> {
    guard(stream, MAX_RUN_STREAM)?;
    let mut out = BTreeSet::new();
    let mut succ = Vec::new();
    for start in 0..stream.len() {
        let mut frontier: BTreeSet<(S, Vec<Position>)> = BTreeSet::from([(init, Vec::new())]);
        for j in start..stream.len() {
            if let Some(w) = window {
                if stream[j].time - stream[start].time > w {
                    break;
                }
            }
            let mut next = BTreeSet::new();
            for (q, d) in &frontier {
                succ.clear();
                step(*q, j, &mut succ);
                for &(p, m) in &succ {
                    let mut d2 = d.clone();
                    if m == Mark::Mark {
                        d2.push(stream[j].position);
                    }
                    if is_final(p) {
                        out.insert(ComplexEvent::new(
                            stream[start].position,
                            stream[j].position,
                            d2.clone(),
                        ));
                    }
                    next.insert((p, d2));
                }
            }
            if next.len() > WORK_LIMIT || out.len() > WORK_LIMIT {
                return Err(OracleError::TooMuchWork(WORK_LIMIT));
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
    }
    Ok(out)
}

/// Keeps complex events whose span in time is at most `window`.
pub fn within_filter(
    cs: &BTreeSet<ComplexEvent>,
    window: Option<Time>,
    time_of: impl Fn(Position) -> Time,
) -> BTreeSet<ComplexEvent> {
    match window {
        None => cs.clone(),
        Some(w) => cs
            .iter()
            .filter(|c| time_of(c.end) - time_of(c.start) <= w)
            .cloned()
            .collect(),
    }
}

/// Groups complex events by their end position.
pub fn by_trigger(cs: impl IntoIterator<Item = ComplexEvent>) -> BTreeMap<Position, BTreeSet<ComplexEvent>> {
    let mut out: BTreeMap<Position, BTreeSet<ComplexEvent>> = BTreeMap::new();
    for c in cs {
        out.entry(c.end).or_default().insert(c);
    }
    out
}

/// Differences between two output sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diff {
    pub only_engine: Vec<ComplexEvent>,
    pub only_oracle: Vec<ComplexEvent>,
    /// Complex events the engine emitted more than once.
    pub duplicates: Vec<ComplexEvent>,
}

impl Diff {
    pub fn compute(engine: &[ComplexEvent], oracle: &BTreeSet<ComplexEvent>) -> Diff {
        let mut seen = BTreeSet::new();
        let mut duplicates = Vec::new();
        for c in engine {
            if !seen.insert(c.clone()) {
                duplicates.push(c.clone());
            }
        }
        Diff {
            only_engine: seen.difference(oracle).cloned().collect(),
            only_oracle: oracle.difference(&seen).cloned().collect(),
            duplicates,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.only_engine.is_empty() && self.only_oracle.is_empty() && self.duplicates.is_empty()
    }
}

impl fmt::Display for Diff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return writeln!(f, "no differences");
        }
        for c in &self.only_engine {
            writeln!(f, "only in engine: {c}")?;
        }
        for c in &self.only_oracle {
            writeln!(f, "only in oracle: {c}")?;
        }
        for c in &self.duplicates {
            writeln!(f, "duplicate:      {c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cea::compile;
    use crate::ceql::parse;
    use crate::fixtures::{stock_stream, Q1};

    fn ce(s: usize, e: usize, d: &[usize]) -> ComplexEvent {
        ComplexEvent::new(s, e, d.to_vec())
    }

    fn types(ts: &[&str]) -> Vec<DataTuple> {
        ts.iter().enumerate().map(|(i, t)| DataTuple::new(t, i)).collect()
    }

    #[test]
    fn base_case() {
        let got = eval_cel(&CelFormula::event("SELL"), &types(&["SELL", "BUY"]), None).unwrap();
        assert_eq!(got, BTreeSet::from([Valuation::new(0, 0).bind("SELL", [0])]));
    }

    #[test]
    fn plus_fixpoint_on_two_events() {
        let got = eval_cel(&CelFormula::event("SELL").plus(), &types(&["SELL", "SELL"]), None).unwrap();
        let want = BTreeSet::from([
            Valuation::new(0, 0).bind("SELL", [0]),
            Valuation::new(1, 1).bind("SELL", [1]),
            Valuation::new(0, 1).bind("SELL", [0, 1]),
        ]);
        assert_eq!(got, want);
    }

    fn stock_runs() -> BTreeSet<ComplexEvent> {
        BTreeSet::from([
            ce(0, 4, &[0, 2, 4]),
            ce(1, 4, &[1, 2, 4]),
            ce(0, 6, &[0, 2, 6]),
            ce(0, 6, &[0, 5, 6]),
            ce(1, 6, &[1, 2, 6]),
            ce(1, 6, &[1, 5, 6]),
        ])
    }

    #[test]
    fn worked_example_semantics() {
        let q = parse(Q1).unwrap();
        let vals = eval_cel(&q.desugar(), &stock_stream(), None).unwrap();
        assert_eq!(complex_events(&vals), stock_runs());
    }

    #[test]
    fn worked_example_runs() {
        let a = compile(&parse(Q1).unwrap().desugar());
        assert_eq!(brute_runs(&a, &stock_stream(), None).unwrap(), stock_runs());
        let runs = accepting_runs(&a, &stock_stream(), 100).unwrap();
        let from_dfs: BTreeSet<_> = runs.iter().map(Run::complex_event).collect();
        assert_eq!(from_dfs, stock_runs());
    }

    #[test]
    fn no_finals_no_runs() {
        let mut a = compile(&CelFormula::event("A"));
        a.finals.iter_mut().for_each(|f| *f = false);
        assert!(brute_runs(&a, &types(&["A", "A"]), None).unwrap().is_empty());
    }

    #[test]
    fn single_transition_single_event() {
        let a = compile(&CelFormula::event("A"));
        assert_eq!(
            brute_runs(&a, &types(&["A"]), None).unwrap(),
            BTreeSet::from([ce(0, 0, &[0])])
        );
    }

    #[test]
    fn within_filter_cases() {
        let cs = stock_runs();
        let unit = |p: usize| p as u64;
        let filtered = within_filter(&cs, Some(5), unit);
        assert!(filtered.iter().all(|c| c.start != 0 || c.end != 6));
        assert!(!filtered.contains(&ce(0, 6, &[0, 2, 6])));
        assert_eq!(within_filter(&cs, None, unit), cs);
        let six: BTreeSet<_> = cs.iter().filter(|c| c.end == 6).cloned().collect();
        assert_eq!(within_filter(&six, Some(6), unit), six);
    }

    #[test]
    fn windowed_oracles_agree_with_filtering() {
        let a = compile(&parse(Q1).unwrap().desugar());
        let s = stock_stream();
        let all = brute_runs(&a, &s, None).unwrap();
        for w in 0..8 {
            let direct = brute_runs(&a, &s, Some(w)).unwrap();
            assert_eq!(direct, within_filter(&all, Some(w), |p| p as u64), "window {w}");
            let cel = eval_cel(&parse(Q1).unwrap().desugar(), &s, Some(w)).unwrap();
            assert_eq!(complex_events(&cel), direct);
        }
    }

    #[test]
    fn size_guards() {
        let long = types(&["A"; 21]);
        assert!(matches!(
            eval_cel(&CelFormula::event("A"), &long, None),
            Err(OracleError::StreamTooLong { len: 21, max: 20 })
        ));
        let longer = types(&["A"; 31]);
        assert!(brute_runs(&compile(&CelFormula::event("A")), &longer, None).is_err());
    }

    #[test]
    fn diff_reports_each_side() {
        let oracle = BTreeSet::from([ce(0, 1, &[0]), ce(1, 1, &[1])]);
        let engine = vec![ce(0, 1, &[0]), ce(0, 1, &[0]), ce(2, 2, &[])];
        let d = Diff::compute(&engine, &oracle);
        assert_eq!(d.only_engine, vec![ce(2, 2, &[])]);
        assert_eq!(d.only_oracle, vec![ce(1, 1, &[1])]);
        assert_eq!(d.duplicates, vec![ce(0, 1, &[0])]);
        assert!(Diff::compute(&[ce(1, 1, &[1]), ce(0, 1, &[0])], &oracle).is_empty());
    }
}
