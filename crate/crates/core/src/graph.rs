//! Weighted communication digraphs over the leader (node 0) and the
//! followers (nodes 1..N), piecewise-constant switching schedules, and the
//! connectivity checks behind the jointly-connected condition.
//!
//! Adjacency convention: `adjacency[(i, j)]` is the weight `ā_ij` with which
//! node `i` listens to node `j`; the edge `j -> i` exists iff `ā_ij > 0`.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    adjacency: DMatrix<f64>,
}

/// One broken invariant of a [`Digraph`].
#[derive(Debug, Clone, PartialEq)]
pub enum GraphViolation {
    SelfLoop { node: usize },
    NegativeWeight { to: usize, from: usize, weight: f64 },
    NonFiniteWeight { to: usize, from: usize },
    LeaderReceives { from: usize },
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::SelfLoop { node } => write!(f, "self-loop at node {node}"),
            GraphViolation::NegativeWeight { to, from, weight } => {
                write!(f, "negative weight {weight} on edge {from} -> {to}")
            }
            GraphViolation::NonFiniteWeight { to, from } => {
                write!(f, "non-finite weight on edge {from} -> {to}")
            }
            GraphViolation::LeaderReceives { from } => {
                write!(f, "leader node 0 receives from node {from}")
            }
        }
    }
}

impl Digraph {
    /// Wraps a square adjacency matrix with at least two nodes. Weight
    /// invariants are not enforced here; see [`Digraph::validate`].
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() {
            return Err(Error::dim(
                "adjacency matrix columns",
                adjacency.nrows(),
                adjacency.ncols(),
            ));
        }
        if adjacency.nrows() < 2 {
            return Err(Error::param(
                "node_count",
                "a digraph needs the leader and at least one follower",
            ));
        }
        Ok(Digraph { adjacency })
    }

    /// Builds a digraph from `(from, to, weight)` triples.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = DMatrix::zeros(node_count, node_count);
        for &(from, to, weight) in edges {
            if from >= node_count || to >= node_count {
                return Err(Error::param(
                    "edges",
                    format!("edge {from} -> {to} references a node outside 0..{node_count}"),
                ));
            }
            adjacency[(to, from)] = weight;
        }
        Self::from_adjacency(adjacency)
    }

    /// Unit-weight edges given as `(from, to)` pairs.
    pub fn from_unit_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(f, t)| (f, t, 1.0)).collect();
        Self::from_edges(node_count, &weighted)
    }

    pub fn empty(node_count: usize) -> Result<Self> {
        Self::from_adjacency(DMatrix::zeros(node_count, node_count))
    }

    /// Total number of nodes including the leader.
    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn follower_count(&self) -> usize {
        self.node_count() - 1
    }

    /// `ā_ij`: weight with which node `i` receives from node `j`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[(to, from)] > 0.0
    }

    /// Neighbors `j` of node `i` with their weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.node_count())
            .map(move |j| (j, self.adjacency[(i, j)]))
            .filter(|&(_, w)| w > 0.0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&w| w > 0.0).count()
    }

    /// Every violated invariant; empty iff the graph is valid.
    pub fn validate(&self) -> Vec<GraphViolation> {
        let n = self.node_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.adjacency[(i, j)];
                if !w.is_finite() {
                    out.push(GraphViolation::NonFiniteWeight { to: i, from: j });
                    continue;
                }
                if w < 0.0 {
                    out.push(GraphViolation::NegativeWeight {
                        to: i,
                        from: j,
                        weight: w,
                    });
                }
                if i == j && w != 0.0 {
                    out.push(GraphViolation::SelfLoop { node: i });
                } else if i == 0 && w != 0.0 {
                    out.push(GraphViolation::LeaderReceives { from: j });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(violations))
        }
    }

    /// True iff every node is reachable from `root` along directed edges.
    ///
    /// Panics if `root` is not a node of the graph.
    pub fn has_spanning_tree_from(&self, root: usize) -> bool {
        let n = self.node_count();
        assert!(root < n, "root {root} out of range for {n} nodes");
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        let mut reached = 1;
        while let Some(j) = queue.pop_front() {
            for (i, seen_i) in seen.iter_mut().enumerate() {
                if !*seen_i && self.adjacency[(i, j)] > 0.0 {
                    *seen_i = true;
                    reached += 1;
                    queue.push_back(i);
                }
            }
        }
        reached == n
    }

    /// The follower-indexed matrix with `h_ii = Σ_{j=0}^{N} ā_ij` and
    /// `h_ij = -ā_ij`, for `i, j = 1..N`.
    pub fn h_matrix(&self) -> Result<DMatrix<f64>> {
        self.ensure_valid()?;
        let n = self.follower_count();
        let mut h = DMatrix::zeros(n, n);
        for i in 1..=n {
            let mut degree = 0.0;
            for j in 0..=n {
                let w = self.adjacency[(i, j)];
                degree += w;
                if j != 0 && j != i {
                    h[(i - 1, j - 1)] = -w;
                }
            }
            h[(i - 1, i - 1)] = degree;
        }
        Ok(h)
    }
}

/// Union of digraphs on a common node set. The edge set is the union of the
/// members' edge sets; weights are summed.
pub fn union(graphs: &[Digraph]) -> Result<Digraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::param("graphs", "union of an empty list"))?;
    let n = first.node_count();
    let mut adjacency = DMatrix::zeros(n, n);
    for g in graphs {
        if g.node_count() != n {
            return Err(Error::NodeCountMismatch {
                expected: n,
                found: g.node_count(),
            });
        }
        adjacency += &g.adjacency;
    }
    Digraph::from_adjacency(adjacency)
}

/// The switching index set: graphs addressed by 1-based index.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFamily {
    graphs: Vec<Digraph>,
}

impl GraphFamily {
    pub fn new(graphs: Vec<Digraph>) -> Result<Self> {
        let n = graphs
            .first()
            .ok_or_else(|| Error::param("graphs", "graph family is empty"))?
            .node_count();
        if let Some(bad) = graphs.iter().find(|g| g.node_count() != n) {
            return Err(Error::NodeCountMismatch {
                expected: n,
                found: bad.node_count(),
            });
        }
        Ok(GraphFamily { graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.graphs[0].node_count()
    }

    /// Graph with 1-based switching index `index`.
    pub fn get(&self, index: usize) -> Option<&Digraph> {
        index.checked_sub(1).and_then(|k| self.graphs.get(k))
    }

    pub fn graphs(&self) -> &[Digraph] {
        &self.graphs
    }
}

/// Piecewise-constant switching signal on `[0, end)`.
///
/// Interval `k` is `[switch_times[k], switch_times[k + 1])` (the last one ends
/// at `end`) and carries graph index `indices[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    switch_times: Vec<f64>,
    indices: Vec<usize>,
    dwell: f64,
    end: f64,
}

const TIME_SLACK: f64 = 1e-12;

impl SwitchingSchedule {
    /// Validates ordering and the dwell-time bound. The final interval may be
    /// truncated by `end` and is exempt from the dwell check.
    pub fn new(switch_times: Vec<f64>, indices: Vec<usize>, dwell: f64, end: f64) -> Result<Self> {
        if switch_times.is_empty() {
            return Err(Error::param("switch_times", "schedule has no intervals"));
        }
        if switch_times.len() != indices.len() {
            return Err(Error::dim("schedule indices", switch_times.len(), indices.len()));
        }
        if switch_times[0] != 0.0 {
            return Err(Error::param("switch_times", "first switching time must be 0"));
        }
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(Error::param("dwell", "dwell time must be positive"));
        }
        if indices.contains(&0) {
            return Err(Error::param("indices", "switching indices are 1-based"));
        }
        for w in switch_times.windows(2) {
            let gap = w[1] - w[0];
            if !(gap.is_finite() && gap >= dwell * (1.0 - 1e-9) - TIME_SLACK) {
                return Err(Error::param(
                    "switch_times",
                    format!("interval [{}, {}) is shorter than the dwell time {dwell}", w[0], w[1]),
                ));
            }
        }
        let last = *switch_times.last().unwrap();
        if !(end >= last) {
            return Err(Error::param(
                "end",
                format!("schedule end {end} precedes the last switching time {last}"),
            ));
        }
        Ok(SwitchingSchedule {
            switch_times,
            indices,
            dwell,
            end,
        })
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn interval_count(&self) -> usize {
        self.switch_times.len()
    }

    /// `(start, end, graph index)` of interval `k`.
    pub fn interval(&self, k: usize) -> (f64, f64, usize) {
        let start = self.switch_times[k];
        let end = self.switch_times.get(k + 1).copied().unwrap_or(self.end);
        (start, end, self.indices[k])
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.interval_count()).map(|k| self.interval(k))
    }

    /// σ(t) on left-closed intervals. Times past `end` keep the last index.
    pub fn index_at(&self, t: f64) -> usize {
        let k = self.switch_times.partition_point(|&s| s <= t);
        self.indices[k.saturating_sub(1)]
    }

    /// Switching instants strictly inside `(a, b)`.
    pub fn switches_within(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        let from = self.switch_times.partition_point(|&s| s <= a);
        self.switch_times[from..].iter().copied().take_while(move |&s| s < b)
    }

    /// Checks that every index names a graph of `family`.
    pub fn check_against(&self, family: &GraphFamily) -> Result<()> {
        match self.indices.iter().find(|&&k| k > family.len()) {
            Some(&k) => Err(Error::param(
                "indices",
                format!("index {k} outside the family 1..={}", family.len()),
            )),
            None => Ok(()),
        }
    }
}

/// A run of consecutive schedule intervals `first..=last` spanning
/// `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub first: usize,
    pub last: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConnectivity {
    pub connected: bool,
    /// Completed windows whose union graph has a spanning tree rooted at 0.
    pub windows: Vec<Window>,
    /// Trailing intervals cut off by the end of the schedule before their
    /// union became connected.
    pub incomplete_tail: Option<Window>,
}

/// Greedy left-to-right test of the jointly-connected condition: intervals
/// are accumulated until their union graph has a spanning tree rooted at the
/// leader, and the check fails as soon as a window's span reaches `epsilon`.
/// At least one complete window is required.
pub fn check_jointly_connected(
    family: &GraphFamily,
    schedule: &SwitchingSchedule,
    epsilon: f64,
) -> Result<JointConnectivity> {
    schedule.check_against(family)?;
    if !(epsilon > schedule.dwell()) {
        return Err(Error::param(
            "epsilon",
            format!("window {epsilon} must exceed the dwell time {}", schedule.dwell()),
        ));
    }
    let n = family.node_count();
    let mut windows = Vec::new();
    let mut first = 0;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for k in 0..schedule.interval_count() {
        let (_, end, index) = schedule.interval(k);
        let start = schedule.interval(first).0;
        acc += family.get(index).expect("checked above").adjacency();
        if end - start >= epsilon {
            return Ok(JointConnectivity {
                connected: false,
                windows,
                incomplete_tail: Some(Window {
                    first,
                    last: k,
                    start,
                    end,
                }),
            });
        }
        let joined = Digraph::from_adjacency(acc.clone())?;
        if joined.has_spanning_tree_from(0) {
            windows.push(Window {
                first,
                last: k,
                start,
                end,
            });
            first = k + 1;
            acc.fill(0.0);
        }
    }
    let incomplete_tail = (first < schedule.interval_count()).then(|| {
        let last = schedule.interval_count() - 1;
        Window {
            first,
            last,
            start: schedule.interval(first).0,
            end: schedule.interval(last).1,
        }
    });
    Ok(JointConnectivity {
        connected: !windows.is_empty(),
        windows,
        incomplete_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn chain(n: usize) -> Digraph {
        let edges: Vec<_> = (0..n - 1).map(|k| (k, k + 1)).collect();
        Digraph::from_unit_edges(n, &edges).unwrap()
    }

    /// Reachability by repeated relaxation, independent of the BFS above.
    fn reachable_by_closure(g: &Digraph, root: usize) -> bool {
        let n = g.node_count();
        let mut reach = vec![false; n];
        reach[root] = true;
        for _ in 0..n {
            for to in 0..n {
                for from in 0..n {
                    if reach[from] && g.weight(to, from) > 0.0 {
                        reach[to] = true;
                    }
                }
            }
        }
        reach.into_iter().all(|r| r)
    }

    #[test]
    fn validate_reports_each_rule() {
        let ok = Digraph::from_adjacency(dmatrix![0.0, 0.0; 1.0, 0.0]).unwrap();
        assert!(ok.validate().is_empty());

        let self_loop = Digraph::from_adjacency(dmatrix![1.0, 0.0; 1.0, 0.0]).unwrap();
        let v = self_loop.validate();
        assert_eq!(v, vec![GraphViolation::SelfLoop { node: 0 }]);
        assert_eq!(v[0].to_string(), "self-loop at node 0");

        let negative = Digraph::from_adjacency(dmatrix![0.0, 0.0; -1.0, 0.0]).unwrap();
        assert!(matches!(
            negative.validate()[..],
            [GraphViolation::NegativeWeight { to: 1, from: 0, .. }]
        ));

        let leader_listens = Digraph::from_adjacency(dmatrix![0.0, 2.0; 1.0, 0.0]).unwrap();
        assert_eq!(
            leader_listens.validate(),
            vec![GraphViolation::LeaderReceives { from: 1 }]
        );
    }

    #[test]
    fn union_examples() {
        let g = chain(3);
        let gg = union(&[g.clone(), g.clone()]).unwrap();
        assert_eq!(gg.edge_count(), g.edge_count());
        assert_eq!(gg.weight(1, 0), 2.0);

        let a = Digraph::from_unit_edges(3, &[(0, 1)]).unwrap();
        let b = Digraph::from_unit_edges(3, &[(1, 2)]).unwrap();
        let u = union(&[a, b]).unwrap();
        assert!(u.has_edge(0, 1) && u.has_edge(1, 2));
        assert_eq!(u.edge_count(), 2);

        let err = union(&[chain(3), chain(4)]).unwrap_err();
        assert!(matches!(err, Error::NodeCountMismatch { expected: 3, found: 4 }));
    }

    #[test]
    fn spanning_tree_examples() {
        let mut complete = DMatrix::from_element(3, 3, 1.0);
        complete.fill_diagonal(0.0);
        complete.row_mut(0).fill(0.0);
        assert!(Digraph::from_adjacency(complete).unwrap().has_spanning_tree_from(0));

        assert!(!Digraph::empty(2).unwrap().has_spanning_tree_from(0));

        let forward = chain(4);
        let reversed = Digraph::from_unit_edges(4, &[(1, 0), (2, 1), (3, 2)]).unwrap();
        assert_eq!(forward.has_spanning_tree_from(0), reachable_by_closure(&forward, 0));
        assert_eq!(reversed.has_spanning_tree_from(0), reachable_by_closure(&reversed, 0));
        assert!(forward.has_spanning_tree_from(0));
        assert!(!reversed.has_spanning_tree_from(0));
    }

    #[test]
    fn h_matrix_examples() {
        let single = Digraph::from_unit_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(single.h_matrix().unwrap(), dmatrix![1.0]);

        assert_eq!(chain(3).h_matrix().unwrap(), dmatrix![1.0, 0.0; -1.0, 1.0]);
        assert_eq!(Digraph::empty(3).unwrap().h_matrix().unwrap(), DMatrix::zeros(2, 2));

        let bad = Digraph::from_adjacency(dmatrix![0.0, 0.0; 0.0, 3.0]).unwrap();
        assert!(matches!(bad.h_matrix(), Err(Error::InvalidGraph(_))));
    }

    fn periodic(cycle: &[usize], periods: usize) -> SwitchingSchedule {
        let dwell = 1.0 / cycle.len() as f64;
        let mut times = Vec::new();
        let mut idx = Vec::new();
        for s in 0..periods {
            for (k, &c) in cycle.iter().enumerate() {
                times.push(s as f64 + k as f64 * dwell);
                idx.push(c);
            }
        }
        SwitchingSchedule::new(times, idx, dwell, periods as f64).unwrap()
    }

    #[test]
    fn joint_connectivity_examples() {
        let connected = GraphFamily::new(vec![chain(3)]).unwrap();
        let sched = periodic(&[1, 1], 3);
        let res = check_jointly_connected(&connected, &sched, 1.0).unwrap();
        assert!(res.connected);
        assert_eq!(res.windows.len(), sched.interval_count());
        assert!(res.windows.iter().all(|w| w.first == w.last));

        let edgeless = GraphFamily::new(vec![Digraph::empty(3).unwrap()]).unwrap();
        let res = check_jointly_connected(&edgeless, &periodic(&[1], 5), 2.0).unwrap();
        assert!(!res.connected);
        let res = check_jointly_connected(&edgeless, &periodic(&[1], 1), 2.0).unwrap();
        assert!(!res.connected);

        let split = GraphFamily::new(vec![
            Digraph::from_unit_edges(3, &[(0, 1)]).unwrap(),
            Digraph::from_unit_edges(3, &[(1, 2)]).unwrap(),
        ])
        .unwrap();
        let res = check_jointly_connected(&split, &periodic(&[1, 2], 4), 2.0).unwrap();
        assert!(res.connected);
        assert_eq!(res.windows.len(), 4);
        assert!(res.incomplete_tail.is_none());
        // a window must stay shorter than epsilon
        let res = check_jointly_connected(&split, &periodic(&[1, 2], 4), 1.01).unwrap();
        assert!(res.connected);
        let res = check_jointly_connected(&split, &periodic(&[1, 2], 4), 1.0).unwrap();
        assert!(!res.connected);
        assert!(check_jointly_connected(&split, &periodic(&[1, 2], 4), 0.5).is_err());
    }

    #[test]
    fn schedule_lookup_and_validation() {
        let s = periodic(&[1, 2, 3, 4], 2);
        assert_eq!(s.index_at(0.0), 1);
        assert_eq!(s.index_at(0.3), 2);
        assert_eq!(s.index_at(1.0), 1);
        assert_eq!(s.index_at(7.0), 4);
        assert_eq!(s.switches_within(0.0, 0.5).collect::<Vec<_>>(), vec![0.25]);
        assert!(SwitchingSchedule::new(vec![0.0, 0.1], vec![1, 2], 0.25, 1.0).is_err());
        assert!(SwitchingSchedule::new(vec![0.5], vec![1], 0.25, 1.0).is_err());
        assert!(SwitchingSchedule::new(vec![0.0], vec![0], 0.25, 1.0).is_err());
    }

    fn arb_graph(n: usize) -> impl Strategy<Value = Digraph> {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], n * n).prop_map(move |w| {
            let mut a = DMatrix::from_vec(n, n, w);
            a.fill_diagonal(0.0);
            a.row_mut(0).fill(0.0);
            Digraph::from_adjacency(a).unwrap()
        })
    }

    proptest! {
        #[test]
        fn h_row_sums_equal_leader_weights(g in arb_graph(5)) {
            let h = g.h_matrix().unwrap();
            for i in 1..5 {
                let row: f64 = h.row(i - 1).sum();
                prop_assert!((row - g.weight(i, 0)).abs() < 1e-12);
            }
        }

        #[test]
        fn union_commutes_and_associates(a in arb_graph(4), b in arb_graph(4), c in arb_graph(4)) {
            let support = |g: &Digraph| g.adjacency().map(|w| w > 0.0);
            let ab = union(&[a.clone(), b.clone()]).unwrap();
            let ba = union(&[b.clone(), a.clone()]).unwrap();
            prop_assert_eq!(support(&ab), support(&ba));
            let left = union(&[ab, c.clone()]).unwrap();
            let right = union(&[a, union(&[b, c]).unwrap()]).unwrap();
            prop_assert_eq!(support(&left), support(&right));
        }

        #[test]
        fn spanning_tree_monotone_under_union(gs in proptest::collection::vec(arb_graph(5), 1..5), extra in arb_graph(5)) {
            let base = union(&gs).unwrap();
            prop_assert_eq!(base.has_spanning_tree_from(0), reachable_by_closure(&base, 0));
            if base.has_spanning_tree_from(0) {
                let mut more = gs.clone();
                more.push(extra);
                prop_assert!(union(&more).unwrap().has_spanning_tree_from(0));
            }
        }

        #[test]
        fn individually_connected_implies_jointly_connected(
            cycle in proptest::collection::vec(1usize..=3, 1..5),
        ) {
            let mut family = Vec::new();
            for extra in 0..3 {
                let mut edges = vec![(0, 1), (1, 2), (2, 3)];
                if extra > 0 { edges.push((0, extra + 1)); }
                family.push(Digraph::from_unit_edges(4, &edges).unwrap());
            }
            let family = GraphFamily::new(family).unwrap();
            let sched = periodic(&cycle, 3);
            let res = check_jointly_connected(&family, &sched, 2.0 * sched.dwell()).unwrap();
            prop_assert!(res.connected);
        }
    }
}
