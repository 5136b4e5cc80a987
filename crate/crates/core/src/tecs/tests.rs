use super::*;
use proptest::prelude::*;

type Open = (Position, Vec<Position>);

fn sorted(mut v: Vec<Open>) -> Vec<Open> {
    v.sort();
    v
}

fn contents(t: &Tecs, n: NodeId) -> Vec<Open> {
    sorted(t.open_events(n))
}

/// `b(pos)` extended by each of `outs`.
fn chain(t: &mut Tecs, pos: Position, outs: &[Position]) -> NodeId {
    let mut n = t.bottom(pos, pos as Time);
    for &o in outs {
        n = t.extend(n, o);
    }
    n
}

#[test]
fn bottom_holds_one_empty_event() {
    let mut t = Tecs::new();
    let b = t.bottom(0, 0);
    assert_eq!(contents(&t, b), vec![(0, vec![])]);
    assert_eq!(t.stamp(b), Stamp { pos: 0, time: 0 });
    let b5 = t.bottom(5, 5);
    assert_eq!(contents(&t, b5), vec![(5, vec![])]);
}

#[test]
fn bottoms_are_distinct_nodes() {
    let mut t = Tecs::new();
    let a = t.bottom(3, 3);
    let b = t.bottom(3, 3);
    assert_ne!(a, b);
    assert_eq!(contents(&t, a), contents(&t, b));
}

#[test]
fn extend_adds_position() {
    let mut t = Tecs::new();
    let b = t.bottom(1, 1);
    let o = t.extend(b, 1);
    assert_eq!(contents(&t, o), vec![(1, vec![1])]);
    let o2 = t.extend(o, 4);
    assert_eq!(contents(&t, o2), vec![(1, vec![1, 4])]);
    assert_eq!(t.stamp(o2), t.stamp(b));
}

#[test]
fn gadget_a_on_two_bottoms() {
    let mut t = Tecs::new();
    let (a, b) = (t.bottom(2, 2), t.bottom(2, 2));
    let before = t.stats().allocated;
    let u = t.union(a, b);
    assert_eq!(t.stats().allocated - before, 1);
    assert_eq!(t.node(u).kind, NodeKind::Union { left: a, right: b });
    assert!(t.is_safe(u));
}

#[test]
fn gadget_b_puts_non_union_left() {
    let mut t = Tecs::new();
    let x = chain(&mut t, 4, &[6]);
    let y = t.bottom(4, 4);
    let u1 = t.union(x, y);
    let z = chain(&mut t, 4, &[7]);
    let u = t.union(u1, z);
    assert_eq!(t.node(u).kind, NodeKind::Union { left: z, right: u1 });
    assert_eq!(contents(&t, u), sorted(vec![(4, vec![6]), (4, vec![]), (4, vec![7])]));
    assert!(t.is_safe(u));
}

/// Two safe unions of maximum start 5 whose right children start at
/// `r1` and `r2`.
fn two_unions(t: &mut Tecs, r1: Position, r2: Position) -> (NodeId, NodeId) {
    let h1 = t.bottom(5, 5);
    let l1 = chain(t, r1, &[8]);
    let mut ul1 = t.ul_init(h1);
    t.ul_insert(&mut ul1, l1);
    let h2 = chain(t, 5, &[6]);
    let l2 = chain(t, r2, &[9]);
    let mut ul2 = t.ul_init(h2);
    t.ul_insert(&mut ul2, l2);
    (t.merge(&ul1), t.merge(&ul2))
}

fn check_three_node_gadget(r1: Position, r2: Position) {
    let mut t = Tecs::new();
    let (n1, n2) = two_unions(&mut t, r1, r2);
    let mut want = contents(&t, n1);
    want.extend(contents(&t, n2));
    let before = t.stats().allocated;
    let u = t.union(n1, n2);
    assert_eq!(t.stats().allocated - before, 3);
    assert_eq!(contents(&t, u), sorted(want));
    assert!(t.is_safe(u));
    t.audit(None).unwrap();
    let NodeKind::Union { right: u1, .. } = t.node(u).kind else {
        panic!()
    };
    let NodeKind::Union { right: u2, .. } = t.node(u1).kind else {
        panic!()
    };
    let NodeKind::Union { left, right } = t.node(u2).kind else {
        panic!()
    };
    assert!(t.stamp(left) >= t.stamp(right));
    assert_eq!(t.stamp(left).pos, r1.max(r2));
}

#[test]
fn gadget_c_when_left_operand_has_later_right_child() {
    check_three_node_gadget(3, 2);
}

#[test]
fn gadget_d_when_right_operand_has_later_right_child() {
    check_three_node_gadget(1, 4);
}

#[test]
#[should_panic(expected = "different maximum start")]
fn union_requires_equal_stamps() {
    let mut t = Tecs::new();
    let (a, b) = (t.bottom(1, 1), t.bottom(0, 0));
    t.union(a, b);
}

#[test]
fn ul_init_is_singleton() {
    let mut t = Tecs::new();
    let b = t.bottom(0, 0);
    assert_eq!(t.ul_init(b).nodes(), &[b]);
    let o = t.extend(b, 2);
    assert_eq!(t.ul_init(o).len(), 1);
}

#[test]
#[should_panic(expected = "non-union")]
fn ul_init_rejects_unions() {
    let mut t = Tecs::new();
    let (a, b) = (t.bottom(1, 1), t.bottom(1, 1));
    let u = t.union(a, b);
    t.ul_init(u);
}

#[test]
fn ul_insert_unions_equal_stamps() {
    let mut t = Tecs::new();
    let b7 = t.bottom(7, 7);
    let x5 = chain(&mut t, 5, &[6]);
    let mut ul = t.ul_init(b7);
    t.ul_insert(&mut ul, x5);
    let m5 = chain(&mut t, 5, &[7]);
    t.ul_insert(&mut ul, m5);
    assert_eq!(ul.len(), 2);
    assert_eq!(ul.head(), b7);
    assert_eq!(contents(&t, ul.nodes()[1]), vec![(5, vec![6]), (5, vec![7])]);
    t.audit_list(&ul).unwrap();
}

#[test]
fn ul_insert_equal_to_head_goes_second() {
    let mut t = Tecs::new();
    let b7 = t.bottom(7, 7);
    let m7 = chain(&mut t, 7, &[8]);
    let mut ul = t.ul_init(b7);
    t.ul_insert(&mut ul, m7);
    assert_eq!(ul.nodes(), &[b7, m7]);
}

#[test]
fn ul_insert_keeps_descending_order() {
    let mut t = Tecs::new();
    let b7 = t.bottom(7, 7);
    let x5 = t.bottom(5, 5);
    let m6 = t.bottom(6, 6);
    let mut ul = t.ul_init(b7);
    t.ul_insert(&mut ul, x5);
    t.ul_insert(&mut ul, m6);
    assert_eq!(ul.nodes(), &[b7, m6, x5]);
    t.audit_list(&ul).unwrap();
}

#[test]
fn merge_of_singleton_is_identity() {
    let mut t = Tecs::new();
    let b = t.bottom(0, 0);
    let ul = t.ul_init(b);
    let before = t.stats().allocated;
    assert_eq!(t.merge(&ul), b);
    assert_eq!(t.stats().allocated, before);
}

#[test]
fn merge_of_three_builds_left_spine() {
    let mut t = Tecs::new();
    let b7 = t.bottom(7, 7);
    let mut ul = t.ul_init(b7);
    let (m6, x5) = (t.bottom(6, 6), t.bottom(5, 5));
    t.ul_insert(&mut ul, m6);
    t.ul_insert(&mut ul, x5);
    let before = t.stats().allocated;
    let u = t.merge(&ul);
    assert_eq!(t.stats().allocated - before, 2);
    assert_eq!(t.node(u).odepth, 1);
    assert!(t.is_safe(u));
    let NodeKind::Union { left, right } = t.node(u).kind else {
        panic!()
    };
    assert_eq!(left, b7);
    let NodeKind::Union { left, right: last } = t.node(right).kind else {
        panic!()
    };
    assert_eq!((left, last), (m6, x5));
    assert_eq!(contents(&t, u), vec![(5, vec![]), (6, vec![]), (7, vec![])]);
}

#[test]
fn enumeration_respects_window_and_order() {
    let mut t = Tecs::new();
    let b1 = t.bottom(1, 1);
    let b0 = t.bottom(0, 0);
    let mut ul = t.ul_init(b1);
    t.ul_insert(&mut ul, b0);
    let u = t.merge(&ul);
    let o = t.extend(u, 2);
    let mut buf = EnumBuffers::default();
    let mut got = Vec::new();
    let st = t.enumerate(o, 4, None, usize::MAX, &mut buf, |c| got.push(c));
    assert_eq!(
        got,
        vec![ComplexEvent::new(1, 4, vec![2]), ComplexEvent::new(0, 4, vec![2])]
    );
    assert_eq!((st.emitted, st.delay_violations), (2, 0));
    got.clear();
    t.enumerate(o, 4, Some(1), usize::MAX, &mut buf, |c| got.push(c));
    assert_eq!(got, vec![ComplexEvent::new(1, 4, vec![2])]);
    got.clear();
    t.enumerate(o, 4, Some(2), usize::MAX, &mut buf, |c| got.push(c));
    assert!(got.is_empty());
    t.enumerate(o, 4, None, 1, &mut buf, |c| got.push(c));
    assert_eq!(got.len(), 1);
}

#[test]
fn collect_frees_unreferenced_nodes() {
    let mut t = Tecs::new();
    let b = t.bottom(0, 0);
    let ul = t.ul_init(b);
    let _garbage = t.extend(b, 1);
    assert_eq!(t.collect(), 1);
    assert!(t.is_live(b));
    t.ul_release(ul);
    assert_eq!(t.collect(), 1);
    assert_eq!(t.live(), 0);
}

#[test]
fn released_union_keeps_shared_children() {
    let mut t = Tecs::new();
    let (a, b) = (t.bottom(3, 3), t.extend_bottom(3, 4));
    let mut keep = t.ul_init(a);
    t.ul_insert(&mut keep, b);
    let u = t.union(a, b);
    t.collect();
    assert!(!t.is_live(u));
    assert!(t.is_live(a) && t.is_live(b));
    t.ul_release(keep);
}

#[test]
fn prune_inside_window_is_noop() {
    let mut t = Tecs::with_pruning();
    let b = t.bottom(5, 5);
    let ul = t.ul_init(b);
    assert_eq!(t.prune(3), 0);
    assert!(t.is_live(b));
    t.ul_release(ul);
}

#[test]
fn prune_frees_expired_bottom() {
    let mut t = Tecs::with_pruning();
    let old = t.bottom(0, 0);
    let new = t.bottom(9, 9);
    let _k = (t.ul_init(old), t.ul_init(new));
    assert_eq!(t.live(), 2);
    assert_eq!(t.prune(5), 1);
    assert!(!t.is_live(old) && t.is_live(new));
}

#[test]
fn prune_drops_expired_right_subtrees_only() {
    let mut t = Tecs::with_pruning();
    let old = chain(&mut t, 1, &[2]);
    let head = t.bottom(8, 8);
    let mut ul = t.ul_init(head);
    t.ul_insert(&mut ul, old);
    let root = t.merge(&ul);
    t.retain(root);
    t.ul_release(ul);
    t.collect();
    let want_all = contents(&t, root);
    assert_eq!(want_all.len(), 2);
    t.prune(5);
    assert!(t.is_live(root) && t.is_live(head));
    assert!(!t.is_live(old));
    assert_eq!(contents(&t, root), vec![(8, vec![])]);
    t.audit(Some(5)).unwrap();
    let mut got = Vec::new();
    t.enumerate(root, 9, Some(5), usize::MAX, &mut EnumBuffers::default(), |c| {
        got.push(c)
    });
    assert_eq!(got, vec![ComplexEvent::new(8, 9, vec![])]);
    t.release(root);
}

#[test]
fn dump_is_deterministic() {
    let mut t = Tecs::new();
    let b1 = t.bottom(1, 1);
    let b0 = t.bottom(0, 0);
    let mut ul = t.ul_init(b1);
    t.ul_insert(&mut ul, b0);
    let u = t.merge(&ul);
    let o = t.extend(u, 2);
    assert_eq!(
        t.dump(o),
        "n0 output 2 max=1 next=n1\nn1 union max=1 left=n2 right=n3\nn2 bottom 1 max=1\nn3 bottom 0 max=0\n"
    );
}

impl Tecs {
    fn extend_bottom(&mut self, pos: Position, out: Position) -> NodeId {
        let b = self.bottom(pos, pos as Time);
        self.extend(b, out)
    }
}

// Random programs of tECS operations, checked against a list model.
#[derive(Debug, Clone)]
enum Op {
    Bottom(usize),
    Extend(usize),
    Insert(usize),
    Merge,
    Union(usize, usize),
}

fn arb_ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            (0usize..4).prop_map(Op::Bottom),
            any::<usize>().prop_map(Op::Extend),
            any::<usize>().prop_map(Op::Insert),
            Just(Op::Merge),
            (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Union(a, b)),
        ],
        1..60,
    )
}

proptest! {
    #[test]
    fn operations_preserve_contents_and_shape(ops in arb_ops()) {
        let mut t = Tecs::new();
        let mut pool: Vec<(NodeId, Vec<Open>)> = Vec::new();
        let mut lists: Vec<(UnionList, Vec<Open>)> = Vec::new();
        let mut next_pos = 10;
        for op in ops {
            match op {
                Op::Bottom(p) => {
                    let b = t.bottom(p, p as Time);
                    pool.push((b, vec![(p, vec![])]));
                    let ul = t.ul_init(b);
                    lists.push((ul, vec![(p, vec![])]));
                }
                Op::Extend(i) if !pool.is_empty() => {
                    let (n, c) = pool[i % pool.len()].clone();
                    let o = t.extend(n, next_pos);
                    let c = c.into_iter().map(|(s, mut d)| { d.push(next_pos); (s, d) }).collect();
                    next_pos += 1;
                    pool.push((o, c));
                }
                Op::Insert(i) if !pool.is_empty() && !lists.is_empty() => {
                    let (n, c) = pool[i % pool.len()].clone();
                    let li = i % lists.len();
                    if t.stamp(n) <= t.stamp(lists[li].0.head()) && t.is_safe(n) {
                        t.ul_insert(&mut lists[li].0, n);
                        lists[li].1.extend(c);
                        t.audit_list(&lists[li].0).map_err(TestCaseError::fail)?;
                    }
                }
                Op::Merge if !lists.is_empty() => {
                    let (ul, c) = lists.last().unwrap();
                    let m = t.merge(ul);
                    prop_assert!(t.is_safe(m));
                    prop_assert!(t.node(m).odepth <= 1);
                    pool.push((m, c.clone()));
                }
                Op::Union(a, b) if pool.len() >= 2 => {
                    let (n1, c1) = pool[a % pool.len()].clone();
                    let (n2, c2) = pool[b % pool.len()].clone();
                    if n1 != n2 && t.stamp(n1) == t.stamp(n2) && t.is_safe(n1) && t.is_safe(n2) {
                        let before = t.stats().allocated;
                        let u = t.union(n1, n2);
                        prop_assert!(t.stats().allocated - before <= 3);
                        prop_assert!(t.is_safe(u));
                        pool.push((u, c1.into_iter().chain(c2).collect()));
                    }
                }
                _ => {}
            }
            t.audit(None).map_err(TestCaseError::fail)?;
        }
        for (n, c) in &pool {
            prop_assert_eq!(contents(&t, *n), sorted(c.clone()));
        }
        for (ul, c) in &lists {
            let m = t.merge(ul);
            prop_assert_eq!(contents(&t, m), sorted(c.clone()));
        }
    }
}
