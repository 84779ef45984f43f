//! Offline verifiers over recorded histories.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::history::OpId;

pub mod register;
pub mod safety;
pub mod snapshot;

pub use register::{check_linearizable_register, check_version_monotonicity, register_linearizable_by_search};
pub use safety::{check_consensus_safety, check_lattice_agreement, check_qaf, check_termination};
pub use snapshot::{check_snapshot_linearizable, snapshot_linearizable_by_search};

/// Largest history the exhaustive searches accept.
pub const SEARCH_LIMIT: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail { reason: String, witness: Vec<OpId> },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn fail(reason: impl Into<String>, witness: Vec<OpId>) -> Self {
        Verdict::Fail { reason: reason.into(), witness }
    }

    pub fn inconclusive(reason: impl Into<String>) -> Self {
        Verdict::Inconclusive { reason: reason.into() }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail { .. } => "FAIL",
            Verdict::Inconclusive { .. } => "INCONCLUSIVE",
        }
    }
}

/// A named verdict plus free-form notes about choices the checker made.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub check: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(check: impl Into<String>, verdict: Verdict) -> Self {
        Report { check: check.into(), verdict, notes: Vec::new() }
    }

    pub fn with_notes(mut self, notes: Vec<String>) -> Self {
        self.notes = notes;
        self
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12} {}", self.verdict.label(), self.check)?;
        match &self.verdict {
            Verdict::Pass => {}
            Verdict::Fail { reason, witness } => {
                write!(f, ": {reason}")?;
                if !witness.is_empty() {
                    let ids: Vec<String> = witness.iter().map(|o| o.to_string()).collect();
                    write!(f, " [{}]", ids.join(", "))?;
                }
            }
            Verdict::Inconclusive { reason } => write!(f, ": {reason}")?,
        }
        for note in &self.notes {
            write!(f, "\n             note: {note}")?;
        }
        Ok(())
    }
}

/// Overall exit status for a batch of reports: any FAIL wins, then any
/// INCONCLUSIVE.
pub fn worst<'a>(reports: impl IntoIterator<Item = &'a Report>) -> Verdict {
    let mut out = Verdict::Pass;
    for r in reports {
        match (&out, &r.verdict) {
            (Verdict::Fail { .. }, _) => {}
            (_, v @ Verdict::Fail { .. }) => out = v.clone(),
            (Verdict::Pass, v @ Verdict::Inconclusive { .. }) => out = v.clone(),
            _ => {}
        }
    }
    out
}

/// Directed graph over `0..n` with labelled edges.
#[derive(Clone, Debug)]
pub(crate) struct LabelledGraph<L> {
    adj: Vec<Vec<(usize, L)>>,
}

impl<L: Copy> LabelledGraph<L> {
    pub fn new(n: usize) -> Self {
        LabelledGraph { adj: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, from: usize, to: usize, label: L) {
        self.adj[from].push((to, label));
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.adj.len();
        let mut indeg = vec![0usize; n];
        for out in &self.adj {
            for &(t, _) in out {
                indeg[t] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &(t, _) in &self.adj[v] {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
        seen == n
    }

    /// Shortest cycle as a list of `(vertex, label of the edge leaving it)`.
    /// Ties go to the cycle through the smallest start vertex, then to the
    /// first-added edges, so the result is deterministic.
    pub fn shortest_cycle(&self) -> Option<Vec<(usize, L)>> {
        let n = self.adj.len();
        let mut best: Option<Vec<(usize, L)>> = None;
        for start in 0..n {
            let mut parent: Vec<Option<(usize, L)>> = vec![None; n];
            let mut dist = vec![usize::MAX; n];
            let mut queue = VecDeque::from([start]);
            dist[start] = 0;
            let mut closing = None;
            'bfs: while let Some(v) = queue.pop_front() {
                if best.as_ref().is_some_and(|b| dist[v] + 1 >= b.len()) {
                    break;
                }
                for &(t, label) in &self.adj[v] {
                    if t == start {
                        closing = Some((v, label));
                        break 'bfs;
                    }
                    if dist[t] == usize::MAX {
                        dist[t] = dist[v] + 1;
                        parent[t] = Some((v, label));
                        queue.push_back(t);
                    }
                }
            }
            let Some((last, label)) = closing else { continue };
            let mut cycle = vec![(last, label)];
            let mut v = last;
            while let Some((p, l)) = parent[v] {
                cycle.push((p, l));
                v = p;
            }
            cycle.reverse();
            if best.as_ref().is_none_or(|b| cycle.len() < b.len()) {
                best = Some(cycle);
            }
        }
        best
    }
}
