use super::*;
use crate::event::{Atom, CmpOp};

const Q1: &str = r#"SELECT * FROM Stock
WHERE SELL as msft; SELL as intel; SELL as amzn
FILTER msft[name="MSFT"] AND msft[price > 100]
   AND intel[name="INTL"]
   AND amzn[name="AMZN"] AND amzn[price < 2000]"#;

const Q2: &str = "SELECT b FROM S WHERE (BUY or SELL) as s; (BUY or SELL) as b \
                  PARTITION BY [name],[volume] WITHIN 1 minute";

fn cmp(attr: &str, op: CmpOp, v: impl Into<crate::event::Value>) -> Predicate {
    Predicate::Atom(Atom::compare(attr, op, v))
}

fn sell() -> CelFormula {
    CelFormula::event("SELL")
}

#[test]
fn q1_parses_to_grouped_filters() {
    let q = parse(Q1).unwrap();
    let seq = sell().bind("msft").then(sell().bind("intel")).then(sell().bind("amzn"));
    let expected = seq
        .filter("msft", cmp("name", CmpOp::Eq, "MSFT").and(cmp("price", CmpOp::Gt, 100)))
        .filter("intel", cmp("name", CmpOp::Eq, "INTL"))
        .filter(
            "amzn",
            cmp("name", CmpOp::Eq, "AMZN").and(cmp("price", CmpOp::Lt, 2000)),
        );
    assert_eq!(q.formula, expected);
    assert_eq!(q.select, Selection::All);
    assert_eq!(q.within, None);
    assert_eq!(q.partition_by, None);
}

#[test]
fn q2_parses_partition_and_window() {
    let q = parse(Q2).unwrap();
    let bs = CelFormula::event("BUY").or(sell());
    assert_eq!(q.formula, bs.clone().bind("s").then(bs.bind("b")));
    assert_eq!(q.partition_by, Some(vec!["name".to_string(), "volume".to_string()]));
    assert_eq!(
        q.within,
        Some(Within {
            magnitude: 1,
            unit: WindowUnit::Unit(TimeUnit::Minutes)
        })
    );
    assert_eq!(q.select, Selection::Vars(vec!["b".into()]));
}

#[test]
fn minimal_query() {
    let q = parse("SELECT * FROM S WHERE SELL").unwrap();
    assert_eq!(q.formula, sell());
    assert!(q.within.is_none() && q.partition_by.is_none() && q.consume.is_none());
}

#[test]
fn desugar_projects_selected_vars() {
    let q = parse(Q2).unwrap();
    match q.desugar() {
        CelFormula::Proj(l, f) => {
            assert_eq!(l, ["b".to_string()].into_iter().collect());
            assert_eq!(*f, q.formula);
        }
        other => panic!("expected projection, got {other}"),
    }
}

#[test]
fn desugar_star_projects_everything() {
    let q = parse(Q1).unwrap();
    let CelFormula::Proj(l, _) = q.desugar() else { panic!() };
    let want: BTreeSet<String> = ["msft", "intel", "amzn", "SELL"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(l, want);
}

#[test]
fn unknown_select_variable() {
    let err = parse("SELECT z FROM S WHERE SELL as x").unwrap_err();
    assert!(matches!(err, CeqlError::UnknownVariable { ref name, line: 1, col: 8 } if name == "z"));
}

#[test]
fn unknown_filter_variable() {
    let err = parse("SELECT * FROM S WHERE SELL as x\nFILTER y[price > 1]").unwrap_err();
    assert!(matches!(err, CeqlError::UnknownVariable { ref name, line: 2, col: 8 } if name == "y"));
}

#[test]
fn duplicate_clauses() {
    let err = parse("SELECT * FROM S WHERE SELL WITHIN 3 WITHIN 4").unwrap_err();
    assert!(matches!(err, CeqlError::DuplicateClause { clause: "WITHIN", .. }));
    let err = parse("SELECT * FROM S WHERE SELL PARTITION BY a PARTITION BY b").unwrap_err();
    assert!(matches!(
        err,
        CeqlError::DuplicateClause {
            clause: "PARTITION BY",
            ..
        }
    ));
}

#[test]
fn syntax_error_location() {
    let err = parse("SELECT * FROM S\nWHERE SELL ;").unwrap_err();
    assert!(matches!(err, CeqlError::Syntax { line: 2, col: 13, .. }), "{err}");
}

#[test]
fn keywords_are_case_insensitive() {
    let a = parse("select * from S where SELL as x; BUY within 5 events consume by any").unwrap();
    let b = parse("SELECT * FROM S WHERE SELL AS x; BUY WITHIN 5 EVENTS CONSUME BY ANY").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.consume, Some(ConsumePolicy::Any));
}

#[test]
fn strategy_tokens() {
    assert_eq!(
        parse("SELECT MAX * FROM S WHERE SELL").unwrap().strategy,
        Some(SelectionStrategy::Max)
    );
    assert_eq!(
        parse("SELECT NEXT x FROM S WHERE SELL as x").unwrap().strategy,
        Some(SelectionStrategy::Next)
    );
    let q = parse("SELECT max FROM S WHERE SELL as max").unwrap();
    assert_eq!(q.strategy, None);
    assert_eq!(q.select, Selection::Vars(vec!["max".into()]));
}

#[test]
fn attribute_time_window() {
    let q = parse("SELECT * FROM S WHERE SELL WITHIN 10000 [stock_time]").unwrap();
    assert_eq!(q.within.unwrap().unit, WindowUnit::Attribute("stock_time".into()));
}

#[test]
fn precedence_of_operators() {
    // postfix > ; > OR > FILTER
    let f = parse_formula("A ; B+ as x OR C").unwrap();
    let want = CelFormula::event("A")
        .then(CelFormula::event("B").plus().bind("x"))
        .or(CelFormula::event("C"));
    assert_eq!(f, want);
}

#[test]
fn disjunctive_filter_desugars_to_union() {
    let f = parse_formula("SELL as x FILTER x[price > 1] OR x[price < 0]").unwrap();
    let base = sell().bind("x");
    let want = base
        .clone()
        .filter("x", cmp("price", CmpOp::Gt, 1))
        .or(base.filter("x", cmp("price", CmpOp::Lt, 0)));
    assert_eq!(f, want);
}

#[test]
fn projection_syntax() {
    let f = parse_formula("PROJECT[x](SELL as x ; BUY)").unwrap();
    assert_eq!(f, sell().bind("x").then(CelFormula::event("BUY")).project(["x"]));
    let g = parse_formula("PROJECT[](SELL)").unwrap();
    assert_eq!(g, sell().project(Vec::<String>::new()));
}

#[test]
fn pretty_print_round_trips() {
    for text in [
        Q1,
        Q2,
        "SELECT ANY x FROM S, T WHERE PROJECT[x]((SELL+ as x) OR BUY) WITHIN 4 [ts] CONSUME BY NONE",
    ] {
        let q = parse(text).unwrap();
        let again = parse(&q.to_text()).unwrap();
        assert_eq!(q, again, "{}", q.to_text());
    }
}

#[test]
fn predicate_syntax_inside_brackets() {
    let f = parse_formula("SELL as x FILTER x[not (price >= 3 or name != 'a') and ok = true and v <= -1.5]").unwrap();
    let CelFormula::Filter(_, _, p) = f else { panic!() };
    let want = Predicate::And(vec![
        Predicate::Not(Box::new(Predicate::Or(vec![
            cmp("price", CmpOp::Ge, 3),
            cmp("name", CmpOp::Ne, "a"),
        ]))),
        cmp("ok", CmpOp::Eq, true),
        cmp("v", CmpOp::Le, -1.5),
    ]);
    assert_eq!(p, want);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn arb_pred() -> impl Strategy<Value = Predicate> {
        let leaf = prop_oneof![
            (0i64..50).prop_map(|v| cmp("price", CmpOp::Gt, v)),
            (-5i64..5).prop_map(|v| cmp("price", CmpOp::Le, v)),
            prop::sample::select(vec!["A", "B", "it's"]).prop_map(|s| cmp("name", CmpOp::Eq, s)),
            (0.0f64..10.0).prop_map(|x| cmp("vol", CmpOp::Ne, x)),
        ];
        leaf.prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..3).prop_map(Predicate::And),
                prop::collection::vec(inner.clone(), 2..3).prop_map(Predicate::Or),
                inner.prop_map(|p| Predicate::Not(Box::new(p))),
            ]
        })
    }

    fn arb_formula() -> impl Strategy<Value = CelFormula> {
        let leaf = prop::sample::select(vec!["A", "B", "C"]).prop_map(CelFormula::event);
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), prop::sample::select(vec!["x", "y"])).prop_map(|(f, v)| f.bind(v)),
                (inner.clone(), prop::sample::select(vec!["x", "A"]), arb_pred()).prop_map(|(f, v, p)| f.filter(v, p)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.or(b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.then(b)),
                inner.clone().prop_map(CelFormula::plus),
                (
                    inner,
                    prop::collection::btree_set(prop::sample::select(vec!["x", "y", "A"]), 0..3)
                )
                    .prop_map(|(f, l)| f.project(l)),
            ]
        })
    }

    fn filters_reference_bound_vars(f: &CelFormula) -> bool {
        let mut bound = BTreeSet::new();
        f.walk(&mut |g| match g {
            CelFormula::EventType(r) => {
                bound.insert(r.clone());
            }
            CelFormula::As(_, x) => {
                bound.insert(x.clone());
            }
            _ => {}
        });
        let mut ok = true;
        f.walk(&mut |g| {
            if let CelFormula::Filter(_, x, _) = g {
                ok &= bound.contains(x);
            }
        });
        ok
    }

    proptest! {
        #[test]
        fn formula_round_trip(f in arb_formula()) {
            prop_assume!(filters_reference_bound_vars(&f));
            let text = f.to_string();
            let once = parse_formula(&text).unwrap();
            prop_assert_eq!(&once, &f, "{}", text);
            prop_assert_eq!(parse_formula(&once.to_string()).unwrap(), once);
        }
    }
}
