//! Generalized quorum systems: validation, search and termination components.
//!
//! A triple `(F, R, W)` is a generalized quorum system when every read quorum
//! intersects every write quorum, and for every failure pattern `f` some write
//! quorum is strongly connected among correct processes and reachable from
//! every member of some read quorum in the residual graph of `f`.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{FailProneSystem, FailurePattern, ModelError, NetworkGraph, ProcessSet, Residual};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GqsError {
    #[error("a quorum family needs at least one quorum")]
    EmptyFamily,
    #[error("quorum #{0} is empty")]
    EmptyQuorum(usize),
    #[error("quorum #{0} duplicates an earlier quorum")]
    DuplicateQuorum(usize),
    #[error("quorum #{0} mentions a process outside the system")]
    UnknownProcess(usize),
    #[error("no write quorum witnesses availability for pattern #{0}")]
    Unavailable(usize),
    #[error("available write quorums for pattern #{0} span several components")]
    Disconnected(usize),
    #[error("read quorum #{read} and write quorum #{write} do not intersect")]
    Inconsistent { read: usize, write: usize },
    #[error("pattern is not part of the fail-prone system")]
    UnknownPattern,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A non-empty, duplicate-free list of non-empty process sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct QuorumFamily(Vec<ProcessSet>);

impl QuorumFamily {
    pub fn new(quorums: Vec<ProcessSet>) -> Result<Self, GqsError> {
        if quorums.is_empty() {
            return Err(GqsError::EmptyFamily);
        }
        for (i, q) in quorums.iter().enumerate() {
            if q.is_empty() {
                return Err(GqsError::EmptyQuorum(i));
            }
            if quorums[..i].contains(q) {
                return Err(GqsError::DuplicateQuorum(i));
            }
        }
        Ok(QuorumFamily(quorums))
    }

    pub fn quorums(&self) -> &[ProcessSet] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProcessSet> {
        self.0.iter()
    }

    fn check_members(&self, g: &NetworkGraph) -> Result<(), GqsError> {
        match self.0.iter().position(|q| !q.is_subset(&g.vertices)) {
            Some(i) => Err(GqsError::UnknownProcess(i)),
            None => Ok(()),
        }
    }
}

/// Indices of the write and read quorum witnessing availability for a pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub write: usize,
    pub read: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GqsVerdict {
    /// First non-intersecting (read, write) pair, in family order.
    pub violation: Option<(usize, usize)>,
    /// Per pattern: the first witnessing (write, read) pair, if any.
    pub availability: Vec<Option<Witness>>,
    /// Per available pattern: the termination component `U_f`.
    pub u_components: BTreeMap<usize, ProcessSet>,
}

impl GqsVerdict {
    pub fn is_consistent(&self) -> bool {
        self.violation.is_none()
    }

    pub fn is_available(&self) -> bool {
        self.availability.iter().all(Option::is_some)
    }

    pub fn is_valid(&self) -> bool {
        self.is_consistent() && self.is_available()
    }
}

/// A validated `(F, R, W)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GeneralizedQuorumSystem {
    pub system: FailProneSystem,
    pub reads: QuorumFamily,
    pub writes: QuorumFamily,
}

impl GeneralizedQuorumSystem {
    pub fn new(system: FailProneSystem, reads: QuorumFamily, writes: QuorumFamily) -> Result<Self, GqsError> {
        let verdict = validate_gqs(&system, &reads, &writes, &system.graph())?;
        if let Some((read, write)) = verdict.violation {
            return Err(GqsError::Inconsistent { read, write });
        }
        if let Some(i) = verdict.availability.iter().position(Option::is_none) {
            return Err(GqsError::Unavailable(i));
        }
        Ok(GeneralizedQuorumSystem { system, reads, writes })
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// `U_f` for the pattern at `index`.
    pub fn termination_component(&self, index: usize) -> Result<ProcessSet, GqsError> {
        let f = self.system.patterns().get(index).ok_or(GqsError::UnknownPattern)?;
        compute_termination_component(f, self, &self.system.graph())
    }
}

fn first_witness(res: &Residual, reads: &QuorumFamily, writes: &QuorumFamily) -> Option<Witness> {
    writes.iter().enumerate().filter(|(_, w)| res.is_available(w)).find_map(|(wi, w)| {
        reads
            .iter()
            .position(|r| res.is_reachable(w, r))
            .map(|ri| Witness { write: wi, read: ri })
    })
}

/// Union of the write quorums that are available under the residual and
/// reachable from some read quorum, and the component containing it.
fn witness_union(res: &Residual, reads: &QuorumFamily, writes: &QuorumFamily) -> Option<Result<ProcessSet, ()>> {
    let union: ProcessSet = writes
        .iter()
        .filter(|w| res.is_available(w) && reads.iter().any(|r| res.is_reachable(w, r)))
        .flatten()
        .copied()
        .collect();
    let first = *union.iter().next()?;
    let comp = res.component_of(first).expect("available quorums are correct");
    Some(if union.is_subset(comp) { Ok(comp.clone()) } else { Err(()) })
}

/// Checks Consistency and Availability and computes `U_f` for every
/// pattern where it is defined.
pub fn validate_gqs(
    system: &FailProneSystem,
    reads: &QuorumFamily,
    writes: &QuorumFamily,
    g: &NetworkGraph,
) -> Result<GqsVerdict, GqsError> {
    reads.check_members(g)?;
    writes.check_members(g)?;
    let violation = reads.iter().enumerate().find_map(|(ri, r)| {
        writes.iter().position(|w| r.is_disjoint(w)).map(|wi| (ri, wi))
    });
    let mut availability = Vec::with_capacity(system.patterns().len());
    let mut u_components = BTreeMap::new();
    for (i, f) in system.patterns().iter().enumerate() {
        let res = Residual::new(g, f)?;
        let witness = first_witness(&res, reads, writes);
        if witness.is_some() {
            if let Some(Ok(u)) = witness_union(&res, reads, writes) {
                u_components.insert(i, u);
            }
        }
        availability.push(witness);
    }
    Ok(GqsVerdict { violation, availability, u_components })
}

/// `U_f`: the strongly connected component of the residual graph of `f`
/// containing every write quorum that witnesses availability for `f`.
pub fn compute_termination_component(
    f: &FailurePattern,
    gqs: &GeneralizedQuorumSystem,
    g: &NetworkGraph,
) -> Result<ProcessSet, GqsError> {
    let index = gqs.system.patterns().iter().position(|p| p == f).ok_or(GqsError::UnknownPattern)?;
    let res = Residual::new(g, f)?;
    match witness_union(&res, &gqs.reads, &gqs.writes) {
        None => Err(GqsError::Unavailable(index)),
        Some(Err(())) => Err(GqsError::Disconnected(index)),
        Some(Ok(u)) => Ok(u),
    }
}

/// Candidate `(W_f, R_f)` pairs for one pattern: each SCC of the residual
/// graph, paired with every correct process that reaches it.
fn candidates(res: &Residual) -> Vec<(ProcessSet, ProcessSet)> {
    res.components().iter().map(|c| (c.clone(), res.reaching_all(c))).collect()
}

/// Searches for a generalized quorum system over `system`.
///
/// Any GQS can be turned into one of this shape: replace each pattern's
/// witnessing write quorum by the SCC containing it and its read quorum by
/// the full set of processes reaching that SCC. Both replacements only grow
/// the sets, so intersections survive. It is therefore enough to pick one
/// SCC per pattern and backtrack on pairwise `W_f ∩ R_g ≠ ∅`. Worst-case
/// exponential in the number of patterns.
pub fn find_gqs(system: &FailProneSystem, g: &NetworkGraph) -> Option<GeneralizedQuorumSystem> {
    let per_pattern: Vec<Vec<(ProcessSet, ProcessSet)>> = system
        .patterns()
        .iter()
        .map(|f| Residual::new(g, f).map(|r| candidates(&r)))
        .collect::<Result<_, _>>()
        .ok()?;
    let mut chosen = Vec::with_capacity(per_pattern.len());
    if !backtrack(&per_pattern, &mut chosen) {
        return None;
    }
    let mut reads: Vec<ProcessSet> = Vec::new();
    let mut writes: Vec<ProcessSet> = Vec::new();
    for (i, &c) in chosen.iter().enumerate() {
        let (w, r) = &per_pattern[i][c];
        if !writes.contains(w) {
            writes.push(w.clone());
        }
        if !reads.contains(r) {
            reads.push(r.clone());
        }
    }
    let reads = QuorumFamily::new(reads).ok()?;
    let writes = QuorumFamily::new(writes).ok()?;
    Some(GeneralizedQuorumSystem { system: system.clone(), reads, writes })
}

fn backtrack(per_pattern: &[Vec<(ProcessSet, ProcessSet)>], chosen: &mut Vec<usize>) -> bool {
    let i = chosen.len();
    if i == per_pattern.len() {
        return true;
    }
    for (c, (w, r)) in per_pattern[i].iter().enumerate() {
        let compatible = chosen.iter().enumerate().all(|(j, &cj)| {
            let (wj, rj) = &per_pattern[j][cj];
            !w.is_disjoint(rj) && !wj.is_disjoint(r)
        });
        if compatible {
            chosen.push(c);
            if backtrack(per_pattern, chosen) {
                return true;
            }
            chosen.pop();
        }
    }
    false
}

/// Classical quorum system: no channel failures, Consistency, and per
/// pattern some read and write quorum made only of correct processes.
pub fn is_classical_qs(system: &FailProneSystem, reads: &QuorumFamily, writes: &QuorumFamily) -> bool {
    system.disallows_channel_failures()
        && reads.iter().all(|r| writes.iter().all(|w| !r.is_disjoint(w)))
        && system.patterns().iter().all(|f| {
            let ok = |q: &ProcessSet| q.iter().all(|p| f.is_correct(*p));
            reads.iter().any(ok) && writes.iter().any(ok)
        })
}
