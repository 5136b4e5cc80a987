//! Timed enumerable compact sets: a DAG of bottom, output and union nodes
//! encoding sets of open complex events `(start, positions)`.
//!
//! Nodes live in an arena and are addressed by generation-checked handles.
//! Memory is reclaimed in two ways:
//!
//! * reference counts over edges and union-list memberships, collected in
//!   a deferred sweep ([`Tecs::collect`]) so callers may hold temporaries;
//! * window expiry ([`Tecs::prune`]), which frees nodes whose maximum start
//!   has left the window even if some parent still points at them. Such
//!   parents only reach them through right edges, which enumeration never
//!   follows once they are out of the window, and every union caches the
//!   metadata of its right child so gadgets never dereference it either.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};

use smallvec::SmallVec;

use crate::event::{ComplexEvent, Position, Time};

/// Handle to a node. Stale handles (to reclaimed nodes) are detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId {
    idx: u32,
    generation: u32,
}

/// Maximum start of a node: the latest start among its open events.
///
/// Ordered by position; `time` is the timestamp of that position, so the
/// order agrees with time order on any valid stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stamp {
    pub pos: Position,
    pub time: Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Bottom,
    Output { next: NodeId },
    Union { left: NodeId, right: NodeId },
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub kind: NodeKind,
    /// Label of a bottom or output node; unused for unions.
    pub pos: Position,
    pub max: Stamp,
    pub odepth: u8,
    /// For unions, the right child's stamp and output depth.
    pub right_max: Stamp,
    pub right_odepth: u8,
}

impl Node {
    pub fn is_union(&self) -> bool {
        matches!(self.kind, NodeKind::Union { .. })
    }
}

#[derive(Debug)]
struct Slot {
    node: Node,
    generation: u32,
    rc: u32,
    alive: bool,
}

/// Allocation and reclamation counters.
/// A start position and the marked positions after it.
pub type OpenEvent = (Position, Vec<Position>);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TecsStats {
    pub allocated: u64,
    pub freed_unreferenced: u64,
    pub freed_expired: u64,
    pub live: usize,
    pub peak_live: usize,
}

/// Counters from one or more enumerations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumStats {
    pub emitted: u64,
    pub visited: u64,
    /// Largest number of nodes visited between two emissions.
    pub max_gap: u64,
    /// Emissions preceded by more than `3 * (|D| + 2)` visits.
    pub delay_violations: u64,
}

impl EnumStats {
    pub fn absorb(&mut self, other: EnumStats) {
        self.emitted += other.emitted;
        self.visited += other.visited;
        self.max_gap = self.max_gap.max(other.max_gap);
        self.delay_violations += other.delay_violations;
    }
}

/// Reusable scratch space for [`Tecs::enumerate`].
#[derive(Debug, Default)]
pub struct EnumBuffers {
    stack: Vec<(NodeId, u32)>,
    chain: Vec<(Position, u32)>,
    data: Vec<Position>,
}

const NIL: u32 = u32::MAX;

/// A non-empty sequence of safe nodes; the head is a non-union node with the
/// largest maximum start, and the rest are strictly decreasing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnionList {
    nodes: SmallVec<[NodeId; 4]>,
}

impl UnionList {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn head(&self) -> NodeId {
        self.nodes[0]
    }
}

#[derive(Debug, Default)]
pub struct Tecs {
    slots: Vec<Slot>,
    free: Vec<u32>,
    /// Nodes whose count may have dropped to zero since the last sweep.
    zero: Vec<NodeId>,
    /// Creation order, for expiry pruning.
    created: VecDeque<NodeId>,
    track_creation: bool,
    stats: TecsStats,
}

impl Tecs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enables the creation-ordered list that [`Tecs::prune`] walks.
    pub fn with_pruning() -> Self {
        Tecs {
            track_creation: true,
            ..Self::default()
        }
    }

    pub fn stats(&self) -> TecsStats {
        self.stats
    }

    pub fn live(&self) -> usize {
        self.stats.live
    }

    pub fn is_live(&self, n: NodeId) -> bool {
        self.slots
            .get(n.idx as usize)
            .is_some_and(|s| s.alive && s.generation == n.generation)
    }

    /// # Panics
    /// On a stale handle.
    #[inline]
    pub fn node(&self, n: NodeId) -> &Node {
        let s = &self.slots[n.idx as usize];
        assert!(s.alive && s.generation == n.generation, "stale node handle {n:?}");
        &s.node
    }

    pub fn stamp(&self, n: NodeId) -> Stamp {
        self.node(n).max
    }

    /// Non-union, or a union of output depth 1 whose right child has output
    /// depth at most 2.
    pub fn is_safe(&self, n: NodeId) -> bool {
        let x = self.node(n);
        !x.is_union() || (x.odepth == 1 && x.right_odepth <= 2)
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        let id = match self.free.pop() {
            Some(idx) => {
                let s = &mut self.slots[idx as usize];
                s.node = node;
                s.rc = 0;
                s.alive = true;
                NodeId {
                    idx,
                    generation: s.generation,
                }
            }
            None => {
                let idx = u32::try_from(self.slots.len()).expect("node arena overflow");
                self.slots.push(Slot {
                    node,
                    generation: 0,
                    rc: 0,
                    alive: true,
                });
                NodeId { idx, generation: 0 }
            }
        };
        self.stats.allocated += 1;
        self.stats.live += 1;
        self.stats.peak_live = self.stats.peak_live.max(self.stats.live);
        self.zero.push(id);
        if self.track_creation {
            self.created.push_back(id);
        }
        id
    }

    /// Adds a strong reference, if the node is still live.
    pub fn retain(&mut self, n: NodeId) {
        if self.is_live(n) {
            self.slots[n.idx as usize].rc += 1;
        }
    }

    /// Drops a strong reference. The node is reclaimed by the next
    /// [`Tecs::collect`] if nothing else refers to it.
    pub fn release(&mut self, n: NodeId) {
        if self.is_live(n) {
            let s = &mut self.slots[n.idx as usize];
            debug_assert!(s.rc > 0, "release of unreferenced node");
            s.rc -= 1;
            if s.rc == 0 {
                self.zero.push(n);
            }
        }
    }

    fn free_node(&mut self, n: NodeId, expired: bool) {
        let mut stack = vec![n];
        let mut first = true;
        while let Some(m) = stack.pop() {
            if !self.is_live(m) {
                continue;
            }
            let s = &mut self.slots[m.idx as usize];
            if !(first && expired) && s.rc > 0 {
                continue;
            }
            first = false;
            s.alive = false;
            s.generation = s.generation.wrapping_add(1);
            let kind = s.node.kind;
            self.free.push(m.idx);
            self.stats.live -= 1;
            if expired && m == n {
                self.stats.freed_expired += 1;
            } else {
                self.stats.freed_unreferenced += 1;
            }
            let mut drop_ref = |c: NodeId, stack: &mut Vec<NodeId>| {
                if self.is_live(c) {
                    let cs = &mut self.slots[c.idx as usize];
                    cs.rc -= 1;
                    if cs.rc == 0 {
                        stack.push(c);
                    }
                }
            };
            match kind {
                NodeKind::Bottom => {}
                NodeKind::Output { next } => drop_ref(next, &mut stack),
                NodeKind::Union { left, right } => {
                    drop_ref(left, &mut stack);
                    drop_ref(right, &mut stack);
                }
            }
        }
    }

    /// Reclaims nodes without references. Returns how many were freed.
    pub fn collect(&mut self) -> usize {
        let before = self.stats.live;
        while let Some(n) = self.zero.pop() {
            if self.is_live(n) && self.slots[n.idx as usize].rc == 0 {
                self.free_node(n, false);
            }
        }
        before - self.stats.live
    }

    /// Frees every node, oldest first, whose maximum start time is below
    /// `min_time`, stopping at the first node still inside the window.
    /// Callers must first drop their own references to expired nodes.
    pub fn prune(&mut self, min_time: Time) -> usize {
        let before = self.stats.live;
        while let Some(&n) = self.created.front() {
            if self.is_live(n) {
                if self.node(n).max.time >= min_time {
                    break;
                }
                self.free_node(n, true);
            }
            self.created.pop_front();
        }
        self.collect();
        before - self.stats.live
    }

    /// `{(i, ∅)}`.
    pub fn bottom(&mut self, pos: Position, time: Time) -> NodeId {
        let max = Stamp { pos, time };
        self.alloc(Node {
            kind: NodeKind::Bottom,
            pos,
            max,
            odepth: 0,
            right_max: max,
            right_odepth: 0,
        })
    }

    /// `{(i, D ∪ {pos}) | (i, D) ∈ n}`.
    pub fn extend(&mut self, n: NodeId, pos: Position) -> NodeId {
        let max = self.stamp(n);
        self.retain(n);
        self.alloc(Node {
            kind: NodeKind::Output { next: n },
            pos,
            max,
            odepth: 0,
            right_max: max,
            right_odepth: 0,
        })
    }

    fn mk_union(&mut self, left: NodeId, lmeta: (Stamp, u8), right: NodeId, rmeta: (Stamp, u8)) -> NodeId {
        debug_assert!(lmeta.0 >= rmeta.0, "union would not be time-ordered");
        self.retain(left);
        self.retain(right);
        self.alloc(Node {
            kind: NodeKind::Union { left, right },
            pos: 0,
            max: lmeta.0,
            odepth: lmeta.1 + 1,
            right_max: rmeta.0,
            right_odepth: rmeta.1,
        })
    }

    fn meta(&self, n: NodeId) -> (Stamp, u8) {
        let x = self.node(n);
        (x.max, x.odepth)
    }

    /// Union of two safe nodes with equal maximum start and disjoint
    /// contents. Allocates at most three nodes and returns a safe one.
    pub fn union(&mut self, n1: NodeId, n2: NodeId) -> NodeId {
        let (a, b) = (*self.node(n1), *self.node(n2));
        assert_eq!(a.max, b.max, "union of nodes with different maximum start");
        assert!(self.is_safe(n1) && self.is_safe(n2), "union of unsafe nodes");
        match (a.kind, b.kind) {
            (k, _) if !matches!(k, NodeKind::Union { .. }) => {
                self.mk_union(n1, (a.max, a.odepth), n2, (b.max, b.odepth))
            }
            (_, k) if !matches!(k, NodeKind::Union { .. }) => {
                self.mk_union(n2, (b.max, b.odepth), n1, (a.max, a.odepth))
            }
            (NodeKind::Union { left: l1, right: r1 }, NodeKind::Union { left: l2, right: r2 }) => {
                let (m1, m2) = ((a.right_max, a.right_odepth), (b.right_max, b.right_odepth));
                let u2 = if m1.0 >= m2.0 {
                    self.mk_union(r1, m1, r2, m2)
                } else {
                    self.mk_union(r2, m2, r1, m1)
                };
                let u2m = self.meta(u2);
                let u1 = self.mk_union(l2, (b.max, b.odepth - 1), u2, u2m);
                let u1m = self.meta(u1);
                self.mk_union(l1, (a.max, a.odepth - 1), u1, u1m)
            }
            _ => unreachable!(),
        }
    }

    /// A list holding the non-union node `n`.
    pub fn ul_init(&mut self, n: NodeId) -> UnionList {
        assert!(!self.node(n).is_union(), "union-list head must be a non-union node");
        self.retain(n);
        UnionList {
            nodes: SmallVec::from_elem(n, 1),
        }
    }

    /// Inserts a safe node whose maximum start does not exceed the head's.
    pub fn ul_insert(&mut self, ul: &mut UnionList, n: NodeId) {
        let s = self.stamp(n);
        assert!(s <= self.stamp(ul.head()), "insertion above the union-list head");
        assert!(self.is_safe(n), "insertion of an unsafe node");
        for i in 1..ul.nodes.len() {
            let si = self.stamp(ul.nodes[i]);
            if si == s {
                let u = self.union(ul.nodes[i], n);
                self.retain(u);
                self.release(ul.nodes[i]);
                ul.nodes[i] = u;
                return;
            }
            if si < s {
                self.retain(n);
                ul.nodes.insert(i, n);
                return;
            }
        }
        self.retain(n);
        ul.nodes.push(n);
    }

    /// A single node for the union of the list. Allocates `len - 1` unions.
    pub fn merge(&mut self, ul: &UnionList) -> NodeId {
        let k = ul.nodes.len() - 1;
        let mut cur = ul.nodes[k];
        for i in (0..k).rev() {
            let n = ul.nodes[i];
            let (lm, rm) = (self.meta(n), self.meta(cur));
            cur = self.mk_union(n, lm, cur, rm);
        }
        cur
    }

    /// Drops tail entries whose maximum start time is below `min_time`.
    /// Returns false if the whole list expired (it is then empty).
    pub fn ul_truncate(&mut self, ul: &mut UnionList, min_time: Time) -> bool {
        while let Some(&n) = ul.nodes.last() {
            if self.stamp(n).time >= min_time {
                break;
            }
            self.release(n);
            ul.nodes.pop();
        }
        !ul.nodes.is_empty()
    }

    /// Releases every entry of a list.
    pub fn ul_release(&mut self, ul: UnionList) {
        for n in ul.nodes {
            self.release(n);
        }
    }

    /// Enumerates `([i, end], D)` for every `(i, D)` in `root` whose start
    /// time is at least `min_time`, stopping after `limit` emissions.
    /// Left children are explored first; right children only when their
    /// maximum start is inside the window.
    pub fn enumerate(
        &self,
        root: NodeId,
        end: Position,
        min_time: Option<Time>,
        limit: usize,
        buf: &mut EnumBuffers,
        mut emit: impl FnMut(ComplexEvent),
    ) -> EnumStats {
        let mut st = EnumStats::default();
        let inside = |s: Stamp| min_time.is_none_or(|m| s.time >= m);
        if limit == 0 || !inside(self.stamp(root)) {
            return st;
        }
        buf.stack.clear();
        buf.chain.clear();
        buf.stack.push((root, NIL));
        let mut gap = 0u64;
        'outer: while let Some((mut m, mut p)) = buf.stack.pop() {
            loop {
                gap += 1;
                let x = self.node(m);
                match x.kind {
                    NodeKind::Union { left, right } => {
                        if inside(x.right_max) {
                            buf.stack.push((right, p));
                        }
                        m = left;
                    }
                    NodeKind::Output { next } => {
                        buf.chain.push((x.pos, p));
                        p = (buf.chain.len() - 1) as u32;
                        m = next;
                    }
                    NodeKind::Bottom => {
                        debug_assert!(inside(x.max));
                        buf.data.clear();
                        let mut c = p;
                        while c != NIL {
                            let (pos, parent) = buf.chain[c as usize];
                            buf.data.push(pos);
                            c = parent;
                        }
                        let size = buf.data.len() as u64;
                        st.visited += gap;
                        st.max_gap = st.max_gap.max(gap);
                        if gap > 3 * (size + 2) {
                            st.delay_violations += 1;
                        }
                        gap = 0;
                        st.emitted += 1;
                        emit(ComplexEvent {
                            start: x.pos,
                            end,
                            data: buf.data.clone(),
                        });
                        if st.emitted as usize >= limit {
                            break 'outer;
                        }
                        continue 'outer;
                    }
                }
            }
        }
        st.visited += gap;
        st
    }

    /// Every full path from `n` as an open complex event, duplicates kept.
    /// Exponential; for tests and audits.
    pub fn open_events(&self, n: NodeId) -> Vec<OpenEvent> {
        let mut out = Vec::new();
        let mut stack = vec![(n, Vec::new())];
        while let Some((m, mut d)) = stack.pop() {
            let x = self.node(m);
            match x.kind {
                NodeKind::Bottom => {
                    d.sort_unstable();
                    out.push((x.pos, d));
                }
                NodeKind::Output { next } => {
                    d.push(x.pos);
                    stack.push((next, d));
                }
                NodeKind::Union { left, right } => {
                    if self.is_live(right) {
                        stack.push((right, d.clone()));
                    }
                    stack.push((left, d));
                }
            }
        }
        out
    }

    /// Checks time-ordering, 3-boundedness and cached child metadata on
    /// every live node. Nodes whose maximum start is below `min_time` may
    /// point at reclaimed children and are only checked locally.
    pub fn audit(&self, min_time: Option<Time>) -> Result<(), String> {
        for (i, s) in self.slots.iter().enumerate().filter(|(_, s)| s.alive) {
            let x = &s.node;
            let id = NodeId {
                idx: i as u32,
                generation: s.generation,
            };
            if x.odepth > 3 {
                return Err(format!("node {id:?} has output depth {}", x.odepth));
            }
            let current = min_time.is_none_or(|m| x.max.time >= m);
            let child = |c: NodeId, what: &str| -> Result<Option<Node>, String> {
                if self.is_live(c) {
                    Ok(Some(*self.node(c)))
                } else if current && what != "right" {
                    Err(format!("node {id:?} lost its {what} child"))
                } else {
                    Ok(None)
                }
            };
            match x.kind {
                NodeKind::Bottom => {
                    if x.odepth != 0 || x.max.pos != x.pos {
                        return Err(format!("bottom {id:?} has inconsistent labels"));
                    }
                }
                NodeKind::Output { next } => {
                    if let Some(c) = child(next, "next")? {
                        if c.max != x.max || x.odepth != 0 {
                            return Err(format!("output {id:?} disagrees with its successor"));
                        }
                    }
                }
                NodeKind::Union { left, right } => {
                    if x.max < x.right_max {
                        return Err(format!("union {id:?} is not time-ordered"));
                    }
                    if let Some(l) = child(left, "left")? {
                        if l.max != x.max || l.odepth + 1 != x.odepth {
                            return Err(format!("union {id:?} disagrees with its left child"));
                        }
                    }
                    if let Some(r) = child(right, "right")? {
                        if r.max != x.right_max || r.odepth != x.right_odepth {
                            return Err(format!("union {id:?} has stale right metadata"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks the ordering and safety rules of a union-list.
    pub fn audit_list(&self, ul: &UnionList) -> Result<(), String> {
        let Some(&head) = ul.nodes.first() else {
            return Err("empty union-list".into());
        };
        if self.node(head).is_union() {
            return Err("union-list head is a union node".into());
        }
        for w in ul.nodes.windows(2).skip(1) {
            if self.stamp(w[0]) <= self.stamp(w[1]) {
                return Err("union-list tail is not strictly decreasing".into());
            }
        }
        for &n in &ul.nodes {
            if self.stamp(n) > self.stamp(head) {
                return Err("union-list entry above its head".into());
            }
            if !self.is_safe(n) {
                return Err("union-list holds an unsafe node".into());
            }
        }
        Ok(())
    }

    /// Deterministic listing of the nodes reachable from `root`, numbered
    /// in depth-first order (left before right).
    pub fn dump(&self, root: NodeId) -> String {
        let mut ids: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if !self.is_live(n) || ids.contains_key(&n) {
                continue;
            }
            ids.insert(n, order.len());
            order.push(n);
            match self.node(n).kind {
                NodeKind::Bottom => {}
                NodeKind::Output { next } => stack.push(next),
                NodeKind::Union { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        let name = |n: NodeId| ids.get(&n).map_or_else(|| "expired".to_string(), |i| format!("n{i}"));
        let mut s = String::new();
        for &n in &order {
            let x = self.node(n);
            let _ = match x.kind {
                NodeKind::Bottom => writeln!(s, "{} bottom {} max={}", name(n), x.pos, x.max.pos),
                NodeKind::Output { next } => {
                    writeln!(s, "{} output {} max={} next={}", name(n), x.pos, x.max.pos, name(next))
                }
                NodeKind::Union { left, right } => writeln!(
                    s,
                    "{} union max={} left={} right={}",
                    name(n),
                    x.max.pos,
                    name(left),
                    name(right)
                ),
            };
        }
        s
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.idx, self.generation).cmp(&(other.idx, other.generation))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}.{}", self.idx, self.generation)
    }
}

#[cfg(test)]
mod tests;
