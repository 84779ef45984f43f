//! Static system model: processes, directed channels, failure patterns and
//! the residual-graph computations every other module builds on.
//!
//! All collections are ordered (`BTreeSet`/`BTreeMap`) so that every derived
//! value, including SCC output, is deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A process identifier. Processes are numbered densely from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    /// Zero-based index, for vector-backed per-process storage.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(i: usize) -> Self {
        ProcessId(i as u32 + 1)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// All process ids of an `n`-process system, in order.
pub fn processes(n: usize) -> impl Iterator<Item = ProcessId> {
    (1..=n as u32).map(ProcessId)
}

/// A directed channel `from -> to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub from: ProcessId,
    pub to: ProcessId,
}

impl Channel {
    pub fn new(from: ProcessId, to: ProcessId) -> Self {
        Channel { from, to }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

pub type ProcessSet = BTreeSet<ProcessId>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("a system needs at least one process")]
    NoProcesses,
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("unknown channel {0}")]
    UnknownChannel(Channel),
    #[error("channel {0} has a crash-prone endpoint")]
    ChannelTouchesCrashed(Channel),
    #[error("self-loop channel {0} is not modeled")]
    SelfLoop(Channel),
    #[error("a fail-prone system needs at least one failure pattern")]
    EmptyFailProneSystem,
    #[error("failure pattern #{0} duplicates an earlier pattern")]
    DuplicatePattern(usize),
}

/// Processes and channels that may fail in one execution.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FailurePattern {
    pub crashed: ProcessSet,
    pub dropped: BTreeSet<Channel>,
}

impl FailurePattern {
    /// Builds a pattern, rejecting dropped channels incident to crash-prone
    /// processes and self-loops.
    pub fn new(
        crashed: impl IntoIterator<Item = ProcessId>,
        dropped: impl IntoIterator<Item = Channel>,
    ) -> Result<Self, ModelError> {
        let crashed: ProcessSet = crashed.into_iter().collect();
        let dropped: BTreeSet<Channel> = dropped.into_iter().collect();
        for ch in &dropped {
            if ch.from == ch.to {
                return Err(ModelError::SelfLoop(*ch));
            }
            if crashed.contains(&ch.from) || crashed.contains(&ch.to) {
                return Err(ModelError::ChannelTouchesCrashed(*ch));
            }
        }
        Ok(FailurePattern { crashed, dropped })
    }

    /// The failure-free pattern.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        !self.crashed.contains(&p)
    }

    pub fn correct_processes(&self, n: usize) -> ProcessSet {
        processes(n).filter(|p| self.is_correct(*p)).collect()
    }

    fn check_against(&self, g: &NetworkGraph) -> Result<(), ModelError> {
        if let Some(p) = self.crashed.iter().find(|p| !g.vertices.contains(p)) {
            return Err(ModelError::UnknownProcess(*p));
        }
        if let Some(ch) = self.dropped.iter().find(|ch| !g.edges.contains(ch)) {
            return Err(ModelError::UnknownChannel(*ch));
        }
        Ok(())
    }
}

/// A non-empty, duplicate-free list of failure patterns over `n` processes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailProneSystem {
    n: usize,
    patterns: Vec<FailurePattern>,
}

impl FailProneSystem {
    pub fn new(n: usize, patterns: Vec<FailurePattern>) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::NoProcesses);
        }
        if patterns.is_empty() {
            return Err(ModelError::EmptyFailProneSystem);
        }
        let g = NetworkGraph::complete(n);
        let mut seen = BTreeSet::new();
        for (i, f) in patterns.iter().enumerate() {
            f.check_against(&g)?;
            if !seen.insert(f) {
                return Err(ModelError::DuplicatePattern(i));
            }
        }
        Ok(FailProneSystem { n, patterns })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn patterns(&self) -> &[FailurePattern] {
        &self.patterns
    }

    pub fn graph(&self) -> NetworkGraph {
        NetworkGraph::complete(self.n)
    }

    /// True if no pattern drops a channel between correct processes.
    pub fn disallows_channel_failures(&self) -> bool {
        self.patterns.iter().all(|f| f.dropped.is_empty())
    }
}

/// A directed graph over processes. The base network graph is complete
/// (without self-loops); residual graphs are arbitrary subgraphs of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub vertices: ProcessSet,
    pub edges: BTreeSet<Channel>,
}

impl NetworkGraph {
    pub fn complete(n: usize) -> Self {
        let vertices: ProcessSet = processes(n).collect();
        let edges = vertices
            .iter()
            .flat_map(|&a| vertices.iter().filter(move |&&b| b != a).map(move |&b| Channel::new(a, b)))
            .collect();
        NetworkGraph { vertices, edges }
    }

    pub fn from_parts(vertices: ProcessSet, edges: BTreeSet<Channel>) -> Self {
        NetworkGraph { vertices, edges }
    }

    fn successors(&self) -> BTreeMap<ProcessId, Vec<ProcessId>> {
        let mut succ: BTreeMap<ProcessId, Vec<ProcessId>> =
            self.vertices.iter().map(|&v| (v, Vec::new())).collect();
        for ch in &self.edges {
            succ.entry(ch.from).or_default().push(ch.to);
        }
        succ
    }

    /// Vertices reachable from `src` (including `src` itself if present).
    pub fn reachable_from(&self, src: ProcessId) -> ProcessSet {
        let mut seen = ProcessSet::new();
        if !self.vertices.contains(&src) {
            return seen;
        }
        let succ = self.successors();
        let mut queue = VecDeque::from([src]);
        seen.insert(src);
        while let Some(v) = queue.pop_front() {
            for &w in &succ[&v] {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Vertices from which `dst` can be reached (including `dst`).
    pub fn reaching(&self, dst: ProcessId) -> ProcessSet {
        let reversed = NetworkGraph {
            vertices: self.vertices.clone(),
            edges: self.edges.iter().map(|c| Channel::new(c.to, c.from)).collect(),
        };
        reversed.reachable_from(dst)
    }
}

/// `g` without the crashed processes of `f`, their incident channels, and
/// the dropped channels of `f`.
pub fn residual_graph(g: &NetworkGraph, f: &FailurePattern) -> Result<NetworkGraph, ModelError> {
    f.check_against(g)?;
    let vertices: ProcessSet = g.vertices.difference(&f.crashed).copied().collect();
    let edges = g
        .edges
        .iter()
        .filter(|ch| vertices.contains(&ch.from) && vertices.contains(&ch.to) && !f.dropped.contains(ch))
        .copied()
        .collect();
    Ok(NetworkGraph { vertices, edges })
}

/// SCC partition of `g`, each component sorted, components ordered by their
/// smallest member.
pub fn strongly_connected_components(g: &NetworkGraph) -> Vec<ProcessSet> {
    let mut pg = DiGraph::<ProcessId, ()>::new();
    let mut idx = BTreeMap::new();
    for &v in &g.vertices {
        idx.insert(v, pg.add_node(v));
    }
    for ch in &g.edges {
        if let (Some(&a), Some(&b)) = (idx.get(&ch.from), idx.get(&ch.to)) {
            pg.add_edge(a, b, ());
        }
    }
    let mut comps: Vec<ProcessSet> = tarjan_scc(&pg)
        .into_iter()
        .map(|c| c.into_iter().map(|n| pg[n]).collect())
        .collect();
    comps.sort_by_key(|c: &ProcessSet| *c.iter().next().expect("SCCs are non-empty"));
    comps
}

/// Reachability view of one residual graph, computed once and queried many
/// times by the quorum-system analyses.
#[derive(Clone, Debug)]
pub struct Residual {
    pub graph: NetworkGraph,
    reach: BTreeMap<ProcessId, ProcessSet>,
    components: Vec<ProcessSet>,
}

impl Residual {
    pub fn new(g: &NetworkGraph, f: &FailurePattern) -> Result<Self, ModelError> {
        let graph = residual_graph(g, f)?;
        let reach = graph.vertices.iter().map(|&v| (v, graph.reachable_from(v))).collect();
        let components = strongly_connected_components(&graph);
        Ok(Residual { graph, reach, components })
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        self.graph.vertices.contains(&p)
    }

    /// Directed path `from ~> to` in the residual graph; every present
    /// vertex reaches itself.
    pub fn reaches(&self, from: ProcessId, to: ProcessId) -> bool {
        self.reach.get(&from).is_some_and(|r| r.contains(&to))
    }

    pub fn components(&self) -> &[ProcessSet] {
        &self.components
    }

    pub fn component_of(&self, p: ProcessId) -> Option<&ProcessSet> {
        self.components.iter().find(|c| c.contains(&p))
    }

    /// Every correct process that can reach all of `target`.
    pub fn reaching_all(&self, target: &ProcessSet) -> ProcessSet {
        self.graph
            .vertices
            .iter()
            .filter(|&&p| target.iter().all(|&t| self.reaches(p, t)))
            .copied()
            .collect()
    }

    pub fn is_available(&self, q: &ProcessSet) -> bool {
        !q.is_empty()
            && q.iter().all(|&p| self.contains(p))
            && q.iter().all(|&a| q.iter().all(|&b| self.reaches(a, b)))
    }

    pub fn is_reachable(&self, w: &ProcessSet, r: &ProcessSet) -> bool {
        !w.is_empty()
            && !r.is_empty()
            && w.iter().chain(r.iter()).all(|&p| self.contains(p))
            && r.iter().all(|&from| w.iter().all(|&to| self.reaches(from, to)))
    }
}

/// `q` is correct under `f` and strongly connected in the residual graph.
/// A pattern that refers to processes or channels outside `g` yields `false`.
pub fn is_f_available(q: &ProcessSet, f: &FailurePattern, g: &NetworkGraph) -> bool {
    Residual::new(g, f).is_ok_and(|r| r.is_available(q))
}

/// Every member of `w` is reachable from every member of `r` in the
/// residual graph, and both sets are correct under `f`.
pub fn is_f_reachable(w: &ProcessSet, r: &ProcessSet, f: &FailurePattern, g: &NetworkGraph) -> bool {
    Residual::new(g, f).is_ok_and(|res| res.is_reachable(w, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn set(ids: &[u32]) -> ProcessSet {
        ids.iter().map(|&i| ProcessId(i)).collect()
    }

    // a=1, b=2, c=3, d=4
    const A: u32 = 1;
    const B: u32 = 2;
    const C: u32 = 3;
    const D: u32 = 4;

    /// Transitive closure by Floyd-Warshall, independent of the BFS/Tarjan
    /// code paths under test.
    fn closure(g: &NetworkGraph) -> BTreeSet<(ProcessId, ProcessId)> {
        let vs: Vec<_> = g.vertices.iter().copied().collect();
        let mut r: BTreeSet<(ProcessId, ProcessId)> = vs.iter().map(|&v| (v, v)).collect();
        r.extend(g.edges.iter().map(|c| (c.from, c.to)));
        for &k in &vs {
            for &i in &vs {
                for &j in &vs {
                    if r.contains(&(i, k)) && r.contains(&(k, j)) {
                        r.insert((i, j));
                    }
                }
            }
        }
        r
    }

    #[test]
    fn residual_of_first_pattern_keeps_three_channels() {
        let sys = fixtures::four_process_system();
        let res = residual_graph(&sys.graph(), &sys.patterns()[0]).unwrap();
        assert_eq!(res.vertices, set(&[A, B, C]));
        let expected: BTreeSet<_> = [(C, A), (A, B), (B, A)]
            .iter()
            .map(|&(x, y)| Channel::new(ProcessId(x), ProcessId(y)))
            .collect();
        assert_eq!(res.edges, expected);
    }

    #[test]
    fn residual_identity_and_vertex_deletion() {
        let g = NetworkGraph::complete(3);
        assert_eq!(residual_graph(&g, &FailurePattern::none()).unwrap(), g);
        let f = FailurePattern::new([ProcessId(3)], []).unwrap();
        assert_eq!(residual_graph(&g, &f).unwrap(), NetworkGraph::complete(2));
    }

    #[test]
    fn residual_rejects_unknown_references() {
        let g = NetworkGraph::complete(2);
        let f = FailurePattern::new([ProcessId(7)], []).unwrap();
        assert_eq!(residual_graph(&g, &f), Err(ModelError::UnknownProcess(ProcessId(7))));
    }

    #[test]
    fn pattern_rejects_channel_at_crashed_process() {
        let err = FailurePattern::new([ProcessId(1)], [Channel::new(ProcessId(1), ProcessId(2))]);
        assert!(matches!(err, Err(ModelError::ChannelTouchesCrashed(_))));
    }

    #[test]
    fn fail_prone_system_rejects_duplicates_and_empty() {
        assert_eq!(FailProneSystem::new(2, vec![]), Err(ModelError::EmptyFailProneSystem));
        let f = FailurePattern::none();
        assert_eq!(
            FailProneSystem::new(2, vec![f.clone(), f]),
            Err(ModelError::DuplicatePattern(1))
        );
    }

    #[test]
    fn scc_examples() {
        let sys = fixtures::four_process_system();
        let res = residual_graph(&sys.graph(), &sys.patterns()[0]).unwrap();
        // Oracle: {a,b} mutually reach each other, c reaches a but nothing reaches c.
        let cl = closure(&res);
        assert!(cl.contains(&(ProcessId(A), ProcessId(B))) && cl.contains(&(ProcessId(B), ProcessId(A))));
        assert!(!cl.contains(&(ProcessId(A), ProcessId(C))));
        assert_eq!(strongly_connected_components(&res), vec![set(&[A, B]), set(&[C])]);

        assert_eq!(strongly_connected_components(&NetworkGraph::complete(3)), vec![set(&[1, 2, 3])]);
        let edgeless = NetworkGraph::from_parts(set(&[1, 2]), BTreeSet::new());
        assert_eq!(strongly_connected_components(&edgeless), vec![set(&[1]), set(&[2])]);
    }

    #[test]
    fn availability_and_reachability_examples() {
        let sys = fixtures::four_process_system();
        let (g, f1) = (sys.graph(), &sys.patterns()[0]);
        assert!(is_f_available(&set(&[A, B]), f1, &g));
        assert!(!is_f_available(&set(&[A, C]), f1, &g));
        assert!(!is_f_available(&set(&[D]), f1, &g));
        assert!(is_f_available(&set(&[C]), f1, &g));

        assert!(is_f_reachable(&set(&[A, B]), &set(&[A, C]), f1, &g));
        assert!(!is_f_reachable(&set(&[C]), &set(&[A]), f1, &g));
        assert!(is_f_reachable(&set(&[A]), &set(&[A]), f1, &g));
    }

    fn arb_pattern(n: u32) -> impl Strategy<Value = FailurePattern> {
        (proptest::collection::btree_set(1..=n, 0..n as usize), proptest::collection::vec((1..=n, 1..=n), 0..12))
            .prop_map(|(crashed, chans)| {
                let crashed: ProcessSet = crashed.into_iter().map(ProcessId).collect();
                let dropped = chans
                    .into_iter()
                    .map(|(a, b)| Channel::new(ProcessId(a), ProcessId(b)))
                    .filter(|c| c.from != c.to && !crashed.contains(&c.from) && !crashed.contains(&c.to));
                FailurePattern::new(crashed.clone(), dropped).unwrap()
            })
    }

    proptest! {
        #[test]
        fn scc_is_partition_and_matches_closure(n in 1u32..=6, f in arb_pattern(6)) {
            let g = NetworkGraph::complete(n as usize);
            let f = FailurePattern::new(
                f.crashed.into_iter().filter(|p| p.0 <= n),
                f.dropped.into_iter().filter(|c| c.from.0 <= n && c.to.0 <= n),
            ).unwrap();
            let res = residual_graph(&g, &f).unwrap();
            let comps = strongly_connected_components(&res);
            let union: ProcessSet = comps.iter().flatten().copied().collect();
            prop_assert_eq!(&union, &res.vertices);
            prop_assert_eq!(comps.iter().map(|c| c.len()).sum::<usize>(), res.vertices.len());
            let cl = closure(&res);
            for a in &res.vertices {
                for b in &res.vertices {
                    let same = comps.iter().any(|c| c.contains(a) && c.contains(b));
                    prop_assert_eq!(same, cl.contains(&(*a, *b)) && cl.contains(&(*b, *a)));
                }
            }
        }

        #[test]
        fn residual_is_monotone(f in arb_pattern(5), extra in arb_pattern(5)) {
            let g = NetworkGraph::complete(5);
            let bigger = FailurePattern::new(
                f.crashed.union(&extra.crashed).copied(),
                f.dropped.union(&extra.dropped).copied().filter(|c| {
                    !f.crashed.contains(&c.from) && !f.crashed.contains(&c.to)
                        && !extra.crashed.contains(&c.from) && !extra.crashed.contains(&c.to)
                }),
            ).unwrap();
            let small = residual_graph(&g, &f).unwrap();
            let big = residual_graph(&g, &bigger).unwrap();
            prop_assert!(big.vertices.is_subset(&small.vertices));
            prop_assert!(big.edges.is_subset(&small.edges));
        }

        #[test]
        fn available_implies_self_reachable(f in arb_pattern(5), q in proptest::collection::btree_set(1u32..=5, 1..4)) {
            let g = NetworkGraph::complete(5);
            let q: ProcessSet = q.into_iter().map(ProcessId).collect();
            if is_f_available(&q, &f, &g) {
                prop_assert!(is_f_reachable(&q, &q, &f, &g));
            }
        }
    }
}
