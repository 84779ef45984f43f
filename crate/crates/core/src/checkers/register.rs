//! Register linearizability via the dependency graph built from recorded
//! versions, with an exhaustive linearization search for small histories.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{LabelledGraph, Report, Verdict, SEARCH_LIMIT};
use crate::history::{History, OpId, OpRecord, Operation, Response};
use crate::register::Version;

pub const CHECK_NAME: &str = "register-linearizability";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Rt,
    Wr,
    Ww,
    Rw,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Rt => "rt",
            EdgeKind::Wr => "wr",
            EdgeKind::Ww => "ww",
            EdgeKind::Rw => "rw",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Write,
    Read,
}

#[derive(Clone, Debug)]
struct RegOp<'a> {
    rec: &'a OpRecord,
    kind: Kind,
    value: i64,
    /// For reads: index of the observed write in the unfiltered write list,
    /// `None` for the initial value. Only its presence matters once
    /// `version` is resolved.
    source: Option<usize>,
    version: Version,
}

/// Operations and edges of the dependency graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub ops: Vec<OpId>,
    pub edges: Vec<(OpId, OpId, EdgeKind)>,
}

fn completed_value(rec: &OpRecord) -> Option<i64> {
    match rec.response() {
        Some(Response::Value { value }) => Some(*value),
        _ => None,
    }
}

/// Selects the operations that take part in the check and resolves each
/// read to the write it observed. Pending reads are dropped; a pending write
/// is kept only if some completed read returned it.
fn prepare<'a>(h: &'a History, notes: &mut Vec<String>) -> Result<Vec<RegOp<'a>>, Verdict> {
    let mut writes: Vec<RegOp<'a>> = Vec::new();
    let mut reads: Vec<RegOp<'a>> = Vec::new();
    let mut dropped = 0usize;
    let mut foreign = 0usize;
    for rec in &h.ops {
        match (&rec.op, rec.is_complete()) {
            (Operation::Write { .. }, false) if rec.version.is_none() => dropped += 1,
            (Operation::Write { value }, _) => {
                let Some(version) = rec.version else {
                    return Err(Verdict::inconclusive(format!("{} has no recorded version", rec.id)));
                };
                writes.push(RegOp { rec, kind: Kind::Write, value: *value, source: None, version });
            }
            (Operation::Read, true) => {
                let Some(value) = completed_value(rec) else {
                    return Err(Verdict::fail(format!("{} completed without a value", rec.id), vec![rec.id]));
                };
                let version = rec.version.unwrap_or(Version::INITIAL);
                reads.push(RegOp { rec, kind: Kind::Read, value, source: None, version });
            }
            (Operation::Read, false) => dropped += 1,
            _ => foreign += 1,
        }
    }
    if foreign > 0 {
        notes.push(format!("ignored {foreign} non-register operations"));
    }

    for w in &writes {
        if w.version.is_initial() {
            return Err(Verdict::fail(format!("{} committed the initial version", w.rec.id), vec![w.rec.id]));
        }
    }
    let mut by_version: BTreeMap<Version, usize> = BTreeMap::new();
    for (i, w) in writes.iter().enumerate() {
        if let Some(&j) = by_version.get(&w.version) {
            return Err(Verdict::fail(
                format!("{} and {} share version {}", writes[j].rec.id, w.rec.id, w.version),
                vec![writes[j].rec.id, w.rec.id],
            ));
        }
        by_version.insert(w.version, i);
    }

    for r in &mut reads {
        let recorded = r.rec.version;
        let by_record = match recorded {
            Some(v) if v.is_initial() && r.value == 0 => Some(None),
            Some(v) => by_version.get(&v).filter(|&&i| writes[i].value == r.value).map(|&i| Some(i)),
            None => None,
        };
        let source = match by_record {
            Some(s) => s,
            None => {
                let mut candidates: Vec<Option<usize>> =
                    writes.iter().enumerate().filter(|(_, w)| w.value == r.value).map(|(i, _)| Some(i)).collect();
                if r.value == 0 {
                    candidates.push(None);
                }
                match candidates.as_slice() {
                    [] => {
                        return Err(Verdict::fail(
                            format!("{} returned {} which no write wrote", r.rec.id, r.value),
                            vec![r.rec.id],
                        ));
                    }
                    [only] => {
                        let what = if recorded.is_some() { "disagrees with its recorded version" } else { "has no recorded version" };
                        notes.push(format!("{} {what}; source resolved from the returned value", r.rec.id));
                        *only
                    }
                    _ => {
                        return Err(Verdict::fail(
                            format!("{} returned {} which matches neither its version nor a unique write", r.rec.id, r.value),
                            vec![r.rec.id],
                        ));
                    }
                }
            }
        };
        r.source = source;
        r.version = source.map_or(Version::INITIAL, |i| writes[i].version);
    }

    let observed: HashSet<usize> = reads.iter().filter_map(|r| r.source).collect();
    let mut keep = vec![true; writes.len()];
    for (i, w) in writes.iter().enumerate() {
        if !w.rec.is_complete() && !observed.contains(&i) {
            keep[i] = false;
            dropped += 1;
        }
    }
    if dropped > 0 {
        notes.push(format!("dropped {dropped} pending operations that no read observed"));
    }

    let mut ops: Vec<RegOp<'a>> =
        writes.into_iter().zip(keep).filter_map(|(w, k)| k.then_some(w)).chain(reads).collect();
    ops.sort_by_key(|o| o.rec.invoke_order);
    Ok(ops)
}

fn build(ops: &[RegOp<'_>]) -> LabelledGraph<EdgeKind> {
    let n = ops.len();
    let mut g = LabelledGraph::new(n);
    let writer_of: BTreeMap<Version, usize> =
        ops.iter().enumerate().filter(|(_, o)| o.kind == Kind::Write).map(|(i, o)| (o.version, i)).collect();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let (oa, ob) = (&ops[a], &ops[b]);
            if oa.rec.precedes(ob.rec) {
                g.add(a, b, EdgeKind::Rt);
            }
            match (oa.kind, ob.kind) {
                (Kind::Write, Kind::Read) if ob.source.is_some() && writer_of.get(&ob.version) == Some(&a) => {
                    g.add(a, b, EdgeKind::Wr);
                }
                (Kind::Write, Kind::Write) if oa.version < ob.version => g.add(a, b, EdgeKind::Ww),
                (Kind::Read, Kind::Write) => {
                    let rw = match oa.source.and_then(|_| writer_of.get(&oa.version)) {
                        Some(&src) => ops[src].version < ob.version,
                        None => true,
                    };
                    if rw {
                        g.add(a, b, EdgeKind::Rw);
                    }
                }
                _ => {}
            }
        }
    }
    g
}

/// Dependency graph of the checked operations; `None` if the history is
/// rejected before graph construction.
pub fn dependency_graph(h: &History) -> Option<DependencyGraph> {
    let ops = prepare(h, &mut Vec::new()).ok()?;
    let g = build(&ops);
    let mut edges = Vec::with_capacity(g.edge_count());
    for (a, out) in g.adj.iter().enumerate() {
        for &(b, k) in out {
            edges.push((ops[a].rec.id, ops[b].rec.id, k));
        }
    }
    Some(DependencyGraph { ops: ops.iter().map(|o| o.rec.id).collect(), edges })
}

pub fn check_linearizable_register(h: &History) -> Report {
    let mut notes = Vec::new();
    let ops = match prepare(h, &mut notes) {
        Ok(ops) => ops,
        Err(Verdict::Inconclusive { reason }) => {
            let verdict = match register_linearizable_by_search(h) {
                Some(true) => Verdict::Pass,
                Some(false) => Verdict::fail("no linearization exists (exhaustive search)", vec![]),
                None => Verdict::inconclusive(format!("{reason}; history too large for exhaustive search")),
            };
            notes.push(format!("{reason}; used exhaustive search"));
            return Report::new(CHECK_NAME, verdict).with_notes(notes);
        }
        Err(v) => return Report::new(CHECK_NAME, v).with_notes(notes),
    };
    let g = build(&ops);
    let cycle = if g.is_acyclic() { None } else { g.shortest_cycle() };
    let verdict = match cycle {
        None => Verdict::Pass,
        Some(cycle) => {
            let mut path = String::new();
            for (v, k) in &cycle {
                path.push_str(&format!("{} -{k}-> ", ops[*v].rec.id));
            }
            path.push_str(&ops[cycle[0].0].rec.id.to_string());
            Verdict::fail(format!("dependency cycle {path}"), cycle.iter().map(|(v, _)| ops[*v].rec.id).collect())
        }
    };
    if ops.len() <= SEARCH_LIMIT {
        if let Some(found) = register_linearizable_by_search(h) {
            if found != verdict.is_pass() {
                let graph = verdict.label();
                return Report::new(
                    CHECK_NAME,
                    Verdict::inconclusive(format!("dependency graph says {graph} but exhaustive search disagrees")),
                )
                .with_notes(notes);
            }
        }
    }
    Report::new(CHECK_NAME, verdict).with_notes(notes)
}

/// Exhaustive search for a legal sequential order respecting real time,
/// using only returned values. Completed operations take part, plus pending
/// writes whose value some completed read returned. `None` when more than
/// [`SEARCH_LIMIT`] operations take part.
pub fn register_linearizable_by_search(h: &History) -> Option<bool> {
    let read_values: HashSet<i64> = h.completed().filter_map(completed_value).collect();
    let mut ops: Vec<(&OpRecord, Option<i64>)> = Vec::new();
    for rec in &h.ops {
        match &rec.op {
            Operation::Write { value } if rec.is_complete() || read_values.contains(value) => {
                ops.push((rec, Some(*value)));
            }
            Operation::Read if rec.is_complete() => ops.push((rec, None)),
            _ => {}
        }
    }
    if ops.len() > SEARCH_LIMIT {
        return None;
    }
    let preds: Vec<u32> = ops
        .iter()
        .map(|(b, _)| ops.iter().enumerate().filter(|(_, (a, _))| a.precedes(b)).fold(0, |m, (i, _)| m | 1 << i))
        .collect();
    let reads: Vec<Option<i64>> = ops.iter().map(|(r, w)| if w.is_some() { None } else { completed_value(r) }).collect();
    let full = (1u32 << ops.len()) - 1;
    let mut dead = HashSet::new();
    Some(search(0, 0, full, &ops, &preds, &reads, &mut dead))
}

fn search(
    mask: u32,
    current: i64,
    full: u32,
    ops: &[(&OpRecord, Option<i64>)],
    preds: &[u32],
    reads: &[Option<i64>],
    dead: &mut HashSet<(u32, i64)>,
) -> bool {
    if mask == full {
        return true;
    }
    if dead.contains(&(mask, current)) {
        return false;
    }
    for i in 0..ops.len() {
        let bit = 1 << i;
        if mask & bit != 0 || preds[i] & !mask != 0 {
            continue;
        }
        let next = match (ops[i].1, reads[i]) {
            (Some(w), _) => w,
            (None, Some(r)) if r == current => current,
            _ => continue,
        };
        if search(mask | bit, next, full, ops, preds, reads, dead) {
            return true;
        }
    }
    dead.insert((mask, current));
    false
}

/// Operations ordered by real time carry non-decreasing versions, strictly
/// increasing when the later one is a write.
pub fn check_version_monotonicity(h: &History) -> Report {
    const NAME: &str = "register-version-monotonicity";
    let ops: Vec<&OpRecord> =
        h.ops.iter().filter(|o| matches!(o.op, Operation::Write { .. } | Operation::Read) && o.version.is_some()).collect();
    for a in &ops {
        for b in &ops {
            if !a.precedes(b) {
                continue;
            }
            let (va, vb) = (a.version.unwrap(), b.version.unwrap());
            let is_write = matches!(b.op, Operation::Write { .. });
            if va > vb || (is_write && va == vb) {
                let rel = if is_write { "<" } else { "<=" };
                return Report::new(
                    NAME,
                    Verdict::fail(format!("{} precedes {} but {va} {rel} {vb} fails", a.id, b.id), vec![a.id, b.id]),
                );
            }
        }
    }
    Report::new(NAME, Verdict::Pass)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::history::Completion;
    use crate::model::ProcessId;

    /// Builds histories from `(process, op, invoke order, response order)`.
    pub(crate) struct Builder {
        ops: Vec<OpRecord>,
    }

    impl Builder {
        pub fn new() -> Self {
            Builder { ops: Vec::new() }
        }

        fn push(&mut self, p: u32, op: Operation, inv: u64, resp: Option<(u64, Response)>, ver: Option<Version>) -> &mut Self {
            let id = OpId(self.ops.len() as u64);
            self.ops.push(OpRecord {
                id,
                process: ProcessId(p),
                op,
                invoke_time: inv,
                invoke_order: inv,
                completion: resp.map(|(order, response)| Completion { time: order, order, response }),
                version: ver,
            });
            self
        }

        pub fn write(&mut self, p: u32, value: i64, inv: u64, resp: u64, ver: (u64, u32)) -> &mut Self {
            self.push(p, Operation::Write { value }, inv, Some((resp, Response::Ack)), Some(v(ver)))
        }

        pub fn pending_write(&mut self, p: u32, value: i64, inv: u64, ver: (u64, u32)) -> &mut Self {
            self.push(p, Operation::Write { value }, inv, None, Some(v(ver)))
        }

        pub fn read(&mut self, p: u32, value: i64, inv: u64, resp: u64, ver: (u64, u32)) -> &mut Self {
            self.push(p, Operation::Read, inv, Some((resp, Response::Value { value })), Some(v(ver)))
        }

        pub fn raw(&mut self, p: u32, op: Operation, inv: u64, resp: Option<(u64, Response)>) -> &mut Self {
            self.push(p, op, inv, resp, None)
        }

        pub fn history(&mut self) -> History {
            let mut ops = std::mem::take(&mut self.ops);
            ops.sort_by_key(|o| o.invoke_order);
            History::new(ops)
        }
    }

    fn v((c, p): (u64, u32)) -> Version {
        if c == 0 {
            Version::INITIAL
        } else {
            Version::new(c, ProcessId(p))
        }
    }

    #[test]
    fn sequential_write_then_read_passes() {
        let h = Builder::new().write(1, 5, 0, 1, (1, 1)).read(2, 5, 2, 3, (1, 1)).history();
        assert!(check_linearizable_register(&h).verdict.is_pass());
        assert_eq!(register_linearizable_by_search(&h), Some(true));
    }

    #[test]
    fn stale_read_after_write_is_a_cycle() {
        let h = Builder::new().write(1, 5, 0, 1, (1, 1)).read(2, 0, 2, 3, (0, 0)).history();
        let report = check_linearizable_register(&h);
        let Verdict::Fail { reason, witness } = &report.verdict else { panic!("{report}") };
        assert_eq!(witness, &vec![OpId(0), OpId(1)]);
        assert!(reason.contains("op0 -rt-> op1 -rw-> op0"), "{reason}");
        assert_eq!(register_linearizable_by_search(&h), Some(false));
    }

    #[test]
    fn concurrent_writes_may_be_read_in_version_order() {
        let h = Builder::new()
            .write(1, 1, 0, 4, (1, 1))
            .write(2, 2, 1, 5, (1, 2))
            .read(3, 2, 6, 7, (1, 2))
            .read(1, 2, 8, 9, (1, 2))
            .history();
        assert!(check_linearizable_register(&h).verdict.is_pass());
        assert!(dependency_graph(&h).unwrap().edges.contains(&(OpId(0), OpId(1), EdgeKind::Ww)));
    }

    #[test]
    fn new_old_inversion_fails() {
        let h = Builder::new()
            .write(1, 1, 0, 10, (1, 1))
            .read(2, 1, 1, 2, (1, 1))
            .read(3, 0, 3, 4, (0, 0))
            .history();
        let report = check_linearizable_register(&h);
        assert!(report.verdict.is_fail(), "{report}");
        assert_eq!(register_linearizable_by_search(&h), Some(false));
    }

    #[test]
    fn duplicate_versions_are_rejected() {
        let h = Builder::new().write(1, 1, 0, 1, (1, 1)).write(2, 2, 2, 3, (1, 1)).history();
        assert!(check_linearizable_register(&h).verdict.is_fail());
    }

    #[test]
    fn initial_version_on_a_write_is_rejected() {
        let h = Builder::new().write(1, 1, 0, 1, (0, 0)).history();
        assert!(check_linearizable_register(&h).verdict.is_fail());
    }

    #[test]
    fn read_of_unwritten_value_fails() {
        let h = Builder::new().write(1, 1, 0, 1, (1, 1)).read(2, 9, 2, 3, (1, 1)).history();
        let report = check_linearizable_register(&h);
        assert_eq!(report.verdict, Verdict::fail("op1 returned 9 which no write wrote", vec![OpId(1)]));
    }

    #[test]
    fn forged_value_is_resolved_and_cycles() {
        // Second read's value forged from 2 to 1 while its version still says 2.
        let h = Builder::new()
            .write(1, 1, 0, 1, (1, 1))
            .write(1, 2, 2, 3, (2, 1))
            .read(2, 1, 4, 5, (2, 1))
            .history();
        let report = check_linearizable_register(&h);
        assert!(report.verdict.is_fail(), "{report}");
        assert!(report.notes.iter().any(|n| n.contains("resolved from the returned value")));
    }

    #[test]
    fn pending_write_observed_by_a_read_is_kept() {
        let h = Builder::new().pending_write(1, 7, 0, (1, 1)).read(2, 7, 1, 2, (1, 1)).history();
        let report = check_linearizable_register(&h);
        assert!(report.verdict.is_pass(), "{report}");
        let g = dependency_graph(&h).unwrap();
        assert_eq!(g.ops.len(), 2);
    }

    #[test]
    fn unobserved_pending_ops_are_dropped() {
        let h = Builder::new()
            .write(1, 1, 0, 1, (1, 1))
            .pending_write(2, 7, 2, (2, 2))
            .raw(3, Operation::Read, 3, None)
            .history();
        let report = check_linearizable_register(&h);
        assert!(report.verdict.is_pass());
        assert!(report.notes.iter().any(|n| n.contains("dropped 2")));
    }

    #[test]
    fn missing_write_versions_fall_back_to_search() {
        let h = Builder::new()
            .raw(1, Operation::Write { value: 3 }, 0, Some((1, Response::Ack)))
            .raw(2, Operation::Read, 2, Some((3, Response::Value { value: 3 })))
            .history();
        let report = check_linearizable_register(&h);
        assert!(report.verdict.is_pass(), "{report}");
        assert!(report.notes.iter().any(|n| n.contains("exhaustive search")));
    }

    #[test]
    fn search_is_bounded() {
        let mut b = Builder::new();
        for i in 0..9 {
            b.write(1, i + 1, 2 * i as u64, 2 * i as u64 + 1, (i as u64 + 1, 1));
        }
        assert_eq!(register_linearizable_by_search(&b.history()), None);
    }

    #[test]
    fn monotonicity_detects_regression() {
        let ok = Builder::new().write(1, 1, 0, 1, (1, 1)).read(2, 1, 2, 3, (1, 1)).history();
        assert!(check_version_monotonicity(&ok).verdict.is_pass());
        let bad = Builder::new().write(1, 1, 0, 1, (2, 1)).write(2, 2, 2, 3, (1, 2)).history();
        assert!(check_version_monotonicity(&bad).verdict.is_fail());
        let same = Builder::new().read(1, 1, 0, 1, (1, 1)).write(2, 2, 2, 3, (1, 1)).history();
        assert!(check_version_monotonicity(&same).verdict.is_fail());
    }
}
