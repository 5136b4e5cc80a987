//! Complex event automata and their compilation from CEL formulas.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use crate::ceql::CelFormula;
use crate::event::{Atom, Predicate};

pub type StateId = usize;

/// Action of a transition: `Mark` adds the current position to the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mark {
    Mark,
    Unmark,
}

impl Mark {
    pub fn symbol(self) -> char {
        match self {
            Mark::Mark => '•',
            Mark::Unmark => '∘',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: StateId,
    pub pred: Predicate,
    pub mark: Mark,
    pub to: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cea {
    pub num_states: usize,
    pub transitions: Vec<Transition>,
    pub initial: StateId,
    pub finals: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VTransition {
    pub from: StateId,
    pub pred: Predicate,
    pub vars: BTreeSet<String>,
    pub to: StateId,
}

/// Intermediate automaton whose transitions carry variable sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vcea {
    pub num_states: usize,
    pub transitions: Vec<VTransition>,
    pub initial: BTreeSet<StateId>,
    pub finals: BTreeSet<StateId>,
}

impl Vcea {
    pub fn from_formula(phi: &CelFormula) -> Vcea {
        match phi {
            CelFormula::EventType(r) => Vcea {
                num_states: 2,
                transitions: vec![VTransition {
                    from: 0,
                    pred: Predicate::Atom(Atom::event_type(r)),
                    vars: BTreeSet::from([r.clone()]),
                    to: 1,
                }],
                initial: BTreeSet::from([0]),
                finals: BTreeSet::from([1]),
            },
            CelFormula::As(f, x) => {
                let mut a = Vcea::from_formula(f);
                for t in a.transitions.iter_mut().filter(|t| !t.vars.is_empty()) {
                    t.vars.insert(x.clone());
                }
                a
            }
            CelFormula::Filter(f, x, p) => {
                let mut a = Vcea::from_formula(f);
                for t in a.transitions.iter_mut().filter(|t| t.vars.contains(x)) {
                    t.pred = std::mem::replace(&mut t.pred, Predicate::True).and(p.clone());
                }
                a
            }
            CelFormula::Or(f, g) => {
                let a = Vcea::from_formula(f);
                let b = Vcea::from_formula(g).shifted(a.num_states);
                Vcea {
                    num_states: a.num_states + b.num_states,
                    transitions: a.transitions.into_iter().chain(b.transitions).collect(),
                    initial: a.initial.union(&b.initial).copied().collect(),
                    finals: a.finals.union(&b.finals).copied().collect(),
                }
            }
            CelFormula::Seq(f, g) => {
                let a = Vcea::from_formula(f);
                let b = Vcea::from_formula(g).shifted(a.num_states);
                let mut transitions = a.transitions.clone();
                transitions.extend(b.transitions.iter().cloned());
                for &p in &b.initial {
                    transitions.push(VTransition {
                        from: p,
                        pred: Predicate::True,
                        vars: BTreeSet::new(),
                        to: p,
                    });
                }
                for t in a.transitions.iter().filter(|t| a.finals.contains(&t.to)) {
                    for &q in &b.initial {
                        transitions.push(VTransition { to: q, ..t.clone() });
                    }
                }
                Vcea {
                    num_states: a.num_states + b.num_states,
                    transitions,
                    initial: a.initial,
                    finals: b.finals,
                }
            }
            CelFormula::Plus(f) => {
                // A fresh state `r` sits between iterations: it can idle on
                // TRUE and restart the body like an initial state.
                let a = Vcea::from_formula(f);
                let r = a.num_states;
                let mut transitions = a.transitions.clone();
                for t in a.transitions.iter().filter(|t| a.finals.contains(&t.to)) {
                    transitions.push(VTransition { to: r, ..t.clone() });
                }
                for t in a.transitions.iter().filter(|t| a.initial.contains(&t.from)) {
                    transitions.push(VTransition { from: r, ..t.clone() });
                    if a.finals.contains(&t.to) {
                        transitions.push(VTransition {
                            from: r,
                            to: r,
                            ..t.clone()
                        });
                    }
                }
                transitions.push(VTransition {
                    from: r,
                    pred: Predicate::True,
                    vars: BTreeSet::new(),
                    to: r,
                });
                Vcea {
                    num_states: a.num_states + 1,
                    transitions,
                    initial: a.initial,
                    finals: a.finals,
                }
            }
            CelFormula::Proj(l, f) => {
                let mut a = Vcea::from_formula(f);
                for t in &mut a.transitions {
                    t.vars.retain(|v| l.contains(v));
                }
                a
            }
        }
    }

    fn shifted(mut self, by: usize) -> Vcea {
        for t in &mut self.transitions {
            t.from += by;
            t.to += by;
        }
        self.initial = self.initial.iter().map(|s| s + by).collect();
        self.finals = self.finals.iter().map(|s| s + by).collect();
        self
    }

    /// Collapses the initial set into one fresh state and turns variable sets
    /// into marks.
    pub fn into_cea(self) -> Cea {
        let q0 = self.num_states;
        let mark = |vars: &BTreeSet<String>| if vars.is_empty() { Mark::Unmark } else { Mark::Mark };
        let mut transitions: Vec<Transition> = self
            .transitions
            .iter()
            .map(|t| Transition {
                from: t.from,
                pred: t.pred.clone(),
                mark: mark(&t.vars),
                to: t.to,
            })
            .collect();
        for t in self.transitions.iter().filter(|t| self.initial.contains(&t.from)) {
            transitions.push(Transition {
                from: q0,
                pred: t.pred.clone(),
                mark: mark(&t.vars),
                to: t.to,
            });
        }
        let mut finals = vec![false; self.num_states + 1];
        for &f in &self.finals {
            finals[f] = true;
        }
        Cea {
            num_states: self.num_states + 1,
            transitions,
            initial: q0,
            finals,
        }
        .trimmed()
    }
}

/// Compiles a formula into a trimmed automaton whose initial state has no
/// incoming transitions.
pub fn compile(phi: &CelFormula) -> Cea {
    Vcea::from_formula(phi).into_cea()
}

impl Cea {
    pub fn is_final(&self, q: StateId) -> bool {
        self.finals[q]
    }

    pub fn outgoing(&self, q: StateId) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == q)
    }

    /// Keeps states that are reachable from the initial state and can reach a
    /// final state, renumbered in breadth-first order. The initial state is
    /// always kept and becomes state 0.
    pub fn trimmed(&self) -> Cea {
        let n = self.num_states;
        let mut forward = vec![false; n];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        forward[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for t in self.outgoing(q) {
                if !forward[t.to] {
                    forward[t.to] = true;
                    queue.push_back(t.to);
                }
            }
        }
        let mut backward = self.finals.clone();
        loop {
            let mut changed = false;
            for t in &self.transitions {
                if backward[t.to] && !backward[t.from] {
                    backward[t.from] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut rename = vec![usize::MAX; n];
        let mut next = 0;
        for &q in &order {
            if q == self.initial || backward[q] {
                rename[q] = next;
                next += 1;
            }
        }
        let mut transitions: Vec<Transition> = self
            .transitions
            .iter()
            .filter(|t| rename[t.from] != usize::MAX && rename[t.to] != usize::MAX)
            .map(|t| Transition {
                from: rename[t.from],
                pred: t.pred.clone(),
                mark: t.mark,
                to: rename[t.to],
            })
            .collect();
        transitions.sort_by_key(|t| t.from);
        let mut finals = vec![false; next];
        for q in 0..n {
            if rename[q] != usize::MAX && self.finals[q] {
                finals[rename[q]] = true;
            }
        }
        Cea {
            num_states: next,
            transitions,
            initial: rename[self.initial],
            finals,
        }
    }

    /// Distinct atoms of all transition predicates, in order of first
    /// appearance.
    pub fn collect_atoms(&self) -> Vec<Atom> {
        let mut out: Vec<Atom> = Vec::new();
        for t in &self.transitions {
            t.pred.for_each_atom(&mut |a| {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            });
        }
        out
    }

    /// Plain-text adjacency listing, one transition per line.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let finals: Vec<String> = (0..self.num_states)
            .filter(|&q| self.finals[q])
            .map(|q| q.to_string())
            .collect();
        let _ = writeln!(s, "states {}", self.num_states);
        let _ = writeln!(s, "initial {}", self.initial);
        let _ = writeln!(s, "final {}", finals.join(" "));
        for t in &self.transitions {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", t.from, t.pred, t.mark.symbol(), t.to);
        }
        s
    }
}

impl fmt::Display for Cea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.export_text())
    }
}

/// Redirects every transition entering the initial state to a copy of it,
/// so the initial state is never re-entered.
pub fn normalize_initial(a: &Cea) -> Cea {
    if !a.transitions.iter().any(|t| t.to == a.initial) {
        return a.clone();
    }
    let copy = a.num_states;
    let redirect = |q: StateId| if q == a.initial { copy } else { q };
    let mut transitions: Vec<Transition> = a
        .transitions
        .iter()
        .map(|t| Transition {
            to: redirect(t.to),
            ..t.clone()
        })
        .collect();
    for t in a.outgoing(a.initial) {
        transitions.push(Transition {
            from: copy,
            to: redirect(t.to),
            ..t.clone()
        });
    }
    let mut finals = a.finals.clone();
    finals.push(a.finals[a.initial]);
    Cea {
        num_states: a.num_states + 1,
        transitions,
        initial: a.initial,
        finals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ceql::parse;
    use crate::event::CmpOp;

    pub(crate) const Q1: &str = r#"SELECT * FROM Stock
        WHERE SELL as msft; SELL as intel; SELL as amzn
        FILTER msft[name="MSFT"] AND msft[price > 100]
           AND intel[name="INTL"]
           AND amzn[name="AMZN"] AND amzn[price < 2000]"#;

    fn q1_cea() -> Cea {
        compile(&parse(Q1).unwrap().desugar())
    }

    #[test]
    fn atomic_formula_has_two_states() {
        let a = compile(&CelFormula::event("SELL"));
        assert_eq!(a.num_states, 2);
        assert_eq!(
            a.transitions,
            vec![Transition {
                from: 0,
                pred: Predicate::Atom(Atom::event_type("SELL")),
                mark: Mark::Mark,
                to: 1
            }]
        );
        assert_eq!(a.finals, vec![false, true]);
    }

    #[test]
    fn empty_projection_unmarks() {
        let a = compile(&CelFormula::event("SELL").project(Vec::<String>::new()));
        assert_eq!(a.num_states, 2);
        assert_eq!(a.transitions[0].mark, Mark::Unmark);
    }

    #[test]
    fn worked_example_automaton_shape() {
        let a = q1_cea();
        assert_eq!(a.num_states, 4);
        assert_eq!(a.initial, 0);
        assert_eq!(a.finals, vec![false, false, false, true]);
        let mut edges: Vec<(usize, Mark, usize)> = a.transitions.iter().map(|t| (t.from, t.mark, t.to)).collect();
        edges.sort();
        assert_eq!(
            edges,
            vec![
                (0, Mark::Mark, 1),
                (1, Mark::Mark, 2),
                (1, Mark::Unmark, 1),
                (2, Mark::Mark, 3),
                (2, Mark::Unmark, 2)
            ]
        );
        for t in a.transitions.iter().filter(|t| t.mark == Mark::Unmark) {
            assert_eq!(t.pred, Predicate::True);
        }
        assert!(!a.transitions.iter().any(|t| t.to == a.initial));
    }

    #[test]
    fn worked_example_atoms() {
        let atoms = q1_cea().collect_atoms();
        assert_eq!(
            atoms,
            vec![
                Atom::event_type("SELL"),
                Atom::compare("name", CmpOp::Eq, "MSFT"),
                Atom::compare("price", CmpOp::Gt, 100),
                Atom::compare("name", CmpOp::Eq, "INTL"),
                Atom::compare("name", CmpOp::Eq, "AMZN"),
                Atom::compare("price", CmpOp::Lt, 2000),
            ]
        );
    }

    #[test]
    fn atoms_empty_and_deduplicated() {
        let all_true = Cea {
            num_states: 2,
            transitions: vec![Transition {
                from: 0,
                pred: Predicate::True,
                mark: Mark::Unmark,
                to: 1,
            }],
            initial: 0,
            finals: vec![false, true],
        };
        assert!(all_true.collect_atoms().is_empty());
        let q = parse("SELECT * FROM S WHERE SELL as a; SELL as b FILTER a[name='MSFT'] AND b[name='MSFT']").unwrap();
        let atoms = compile(&q.formula).collect_atoms();
        assert_eq!(atoms.len(), 2);
    }

    #[test]
    fn normalize_moves_loops_to_copy() {
        let a = Cea {
            num_states: 2,
            transitions: vec![
                Transition {
                    from: 0,
                    pred: Predicate::True,
                    mark: Mark::Unmark,
                    to: 0,
                },
                Transition {
                    from: 0,
                    pred: Predicate::Atom(Atom::event_type("A")),
                    mark: Mark::Mark,
                    to: 1,
                },
            ],
            initial: 0,
            finals: vec![false, true],
        };
        let b = normalize_initial(&a);
        assert_eq!(b.num_states, 3);
        assert!(!b.transitions.iter().any(|t| t.to == b.initial));
        assert!(b.transitions.iter().any(|t| t.from == 2 && t.to == 2));
        assert_eq!(normalize_initial(&b), b);
    }

    #[test]
    fn compiled_automata_are_already_normalized() {
        let a = compile(&CelFormula::event("SELL").plus());
        assert_eq!(normalize_initial(&a), a);
    }

    #[test]
    fn export_lists_transitions() {
        let text = compile(&CelFormula::event("SELL")).export_text();
        assert_eq!(text, "states 2\ninitial 0\nfinal 1\n0\ttype = SELL\t•\t1\n");
    }
}
