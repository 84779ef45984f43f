//! Snapshot linearizability. Every scan pins, per segment, which update it
//! observed; together with real time and per-writer order this gives a
//! constraint graph that is acyclic exactly when a legal order exists.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::{LabelledGraph, Report, Verdict, SEARCH_LIMIT};
use crate::history::{History, OpId, OpRecord, Operation, Response, Slot};

pub const CHECK_NAME: &str = "snapshot-linearizability";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Edge {
    Rt,
    Program,
    Observed,
    Overwritten,
    Dominates,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Edge::Rt => "rt",
            Edge::Program => "po",
            Edge::Observed => "seen-by",
            Edge::Overwritten => "before",
            Edge::Dominates => "dominated-by",
        })
    }
}

struct Update<'a> {
    rec: &'a OpRecord,
    segment: usize,
    seq: u64,
    value: i64,
}

struct Scan<'a> {
    rec: &'a OpRecord,
    slots: &'a [Slot],
}

fn leq(a: &[Slot], b: &[Slot]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.seq <= y.seq)
}

/// Updates numbered per writer (1-based) and completed scans. Pending
/// updates get the next number of their writer.
fn collect(h: &History) -> (Vec<Update<'_>>, Vec<Scan<'_>>, usize) {
    let mut counters: BTreeMap<usize, u64> = BTreeMap::new();
    let mut updates = Vec::new();
    let mut scans = Vec::new();
    let mut foreign = 0;
    for rec in &h.ops {
        match (&rec.op, rec.response()) {
            (Operation::SnapUpdate { value }, _) => {
                let segment = rec.process.index();
                let c = counters.entry(segment).or_default();
                *c += 1;
                updates.push(Update { rec, segment, seq: *c, value: *value });
            }
            (Operation::SnapScan, Some(Response::Scan { slots })) => scans.push(Scan { rec, slots }),
            (Operation::SnapScan, _) => {}
            _ => foreign += 1,
        }
    }
    (updates, scans, foreign)
}

pub fn check_snapshot_linearizable(h: &History) -> Report {
    let mut notes = Vec::new();
    let (updates, scans, foreign) = collect(h);
    if foreign > 0 {
        notes.push(format!("ignored {foreign} non-snapshot operations"));
    }
    let fail = |reason: String, witness: Vec<OpId>, notes: Vec<String>| {
        Report::new(CHECK_NAME, Verdict::fail(reason, witness)).with_notes(notes)
    };

    for u in &updates {
        if let Some(Response::SnapAck { seq }) = u.rec.response() {
            if *seq != u.seq {
                return fail(format!("{} acknowledged seq {seq} but is update #{} of its writer", u.rec.id, u.seq), vec![u.rec.id], notes);
            }
        }
    }
    let by_key: BTreeMap<(usize, u64), usize> = updates.iter().enumerate().map(|(i, u)| ((u.segment, u.seq), i)).collect();
    let width = scans.first().map_or(0, |s| s.slots.len());
    let mut observed: HashSet<usize> = HashSet::new();
    for s in &scans {
        if s.slots.len() != width {
            return fail(format!("{} returned {} segments, expected {width}", s.rec.id, s.slots.len()), vec![s.rec.id], notes);
        }
        for (seg, slot) in s.slots.iter().enumerate() {
            if slot.seq == 0 {
                if slot.value.is_some() {
                    return fail(format!("{} shows a value in untouched segment {seg}", s.rec.id), vec![s.rec.id], notes);
                }
                continue;
            }
            let Some(&u) = by_key.get(&(seg, slot.seq)) else {
                return fail(format!("{} shows update #{} of segment {seg}, which was never invoked", s.rec.id, slot.seq), vec![s.rec.id], notes);
            };
            if slot.value != Some(updates[u].value) {
                return fail(format!("{} shows a value in segment {seg} that {} did not write", s.rec.id, updates[u].rec.id), vec![s.rec.id, updates[u].rec.id], notes);
            }
            observed.insert(u);
        }
    }
    for (i, a) in scans.iter().enumerate() {
        for b in &scans[i + 1..] {
            if !leq(a.slots, b.slots) && !leq(b.slots, a.slots) {
                return fail(format!("scans {} and {} are incomparable", a.rec.id, b.rec.id), vec![a.rec.id, b.rec.id], notes);
            }
        }
    }

    // Vertices: kept updates, then scans.
    let kept: Vec<usize> = (0..updates.len()).filter(|&i| updates[i].rec.is_complete() || observed.contains(&i)).collect();
    let dropped = updates.len() - kept.len() + h.ops.iter().filter(|o| o.op == Operation::SnapScan && !o.is_complete()).count();
    if dropped > 0 {
        notes.push(format!("dropped {dropped} pending operations that no scan observed"));
    }
    let mut vertex_of_update = vec![usize::MAX; updates.len()];
    let mut recs: Vec<&OpRecord> = Vec::new();
    for &u in &kept {
        vertex_of_update[u] = recs.len();
        recs.push(updates[u].rec);
    }
    let first_scan = recs.len();
    recs.extend(scans.iter().map(|s| s.rec));

    let mut g = LabelledGraph::new(recs.len());
    for a in 0..recs.len() {
        for b in 0..recs.len() {
            if a != b && recs[a].precedes(recs[b]) {
                g.add(a, b, Edge::Rt);
            }
        }
    }
    let mut last_of_segment: BTreeMap<usize, usize> = BTreeMap::new();
    for &u in &kept {
        if let Some(prev) = last_of_segment.insert(updates[u].segment, u) {
            g.add(vertex_of_update[prev], vertex_of_update[u], Edge::Program);
        }
    }
    for (k, s) in scans.iter().enumerate() {
        let sv = first_scan + k;
        for (seg, slot) in s.slots.iter().enumerate() {
            if slot.seq > 0 {
                g.add(vertex_of_update[by_key[&(seg, slot.seq)]], sv, Edge::Observed);
            }
            if let Some(&next) = by_key.get(&(seg, slot.seq + 1)) {
                if vertex_of_update[next] != usize::MAX {
                    g.add(sv, vertex_of_update[next], Edge::Overwritten);
                }
            }
        }
        for (j, t) in scans.iter().enumerate() {
            if k != j && leq(s.slots, t.slots) && s.slots != t.slots {
                g.add(sv, first_scan + j, Edge::Dominates);
            }
        }
    }

    let cycle = if g.is_acyclic() { None } else { g.shortest_cycle() };
    let verdict = match cycle {
        None => Verdict::Pass,
        Some(cycle) => {
            let mut path = String::new();
            for (v, e) in &cycle {
                path.push_str(&format!("{} -{e}-> ", recs[*v].id));
            }
            path.push_str(&recs[cycle[0].0].id.to_string());
            Verdict::fail(format!("constraint cycle {path}"), cycle.iter().map(|(v, _)| recs[*v].id).collect())
        }
    };
    if recs.len() <= SEARCH_LIMIT {
        if let Some(found) = snapshot_linearizable_by_search(h) {
            if found != verdict.is_pass() {
                let graph = verdict.label();
                return Report::new(CHECK_NAME, Verdict::inconclusive(format!("constraint graph says {graph} but exhaustive search disagrees")))
                    .with_notes(notes);
            }
        }
    }
    Report::new(CHECK_NAME, verdict).with_notes(notes)
}

/// Exhaustive search over orders respecting real time, replaying the
/// sequential snapshot. Completed operations take part, plus pending updates
/// whose value appears in some scan. `None` above [`SEARCH_LIMIT`] operations.
pub fn snapshot_linearizable_by_search(h: &History) -> Option<bool> {
    let seen: HashSet<(usize, i64)> = h
        .completed()
        .filter_map(|o| match o.response() {
            Some(Response::Scan { slots }) => Some(slots),
            _ => None,
        })
        .flat_map(|slots| slots.iter().enumerate().filter_map(|(i, s)| s.value.map(|v| (i, v))))
        .collect();
    let ops: Vec<&OpRecord> = h
        .ops
        .iter()
        .filter(|o| match o.op {
            Operation::SnapUpdate { value } => o.is_complete() || seen.contains(&(o.process.index(), value)),
            Operation::SnapScan => o.is_complete(),
            _ => false,
        })
        .collect();
    if ops.len() > SEARCH_LIMIT {
        return None;
    }
    let width = ops
        .iter()
        .filter_map(|o| match o.response() {
            Some(Response::Scan { slots }) => Some(slots.len()),
            _ => None,
        })
        .chain(ops.iter().map(|o| o.process.index() + 1))
        .max()
        .unwrap_or(0);
    let preds: Vec<u32> =
        ops.iter().map(|b| ops.iter().enumerate().filter(|(_, a)| a.precedes(b)).fold(0, |m, (i, _)| m | 1 << i)).collect();
    let full = (1u32 << ops.len()) - 1;
    let mut state = vec![Slot { value: None, seq: 0 }; width];
    let mut dead = HashSet::new();
    Some(search(0, full, &ops, &preds, &mut state, &mut dead))
}

fn search(mask: u32, full: u32, ops: &[&OpRecord], preds: &[u32], state: &mut Vec<Slot>, dead: &mut HashSet<u32>) -> bool {
    if mask == full {
        return true;
    }
    if dead.contains(&mask) {
        return false;
    }
    for (i, op) in ops.iter().enumerate() {
        let bit = 1 << i;
        if mask & bit != 0 || preds[i] & !mask != 0 {
            continue;
        }
        match (&op.op, op.response()) {
            (Operation::SnapUpdate { value }, resp) => {
                let seg = op.process.index();
                let seq = state[seg].seq + 1;
                if let Some(Response::SnapAck { seq: acked }) = resp {
                    if *acked != seq {
                        continue;
                    }
                }
                let saved = std::mem::replace(&mut state[seg], Slot { value: Some(*value), seq });
                let ok = search(mask | bit, full, ops, preds, state, dead);
                state[seg] = saved;
                if ok {
                    return true;
                }
            }
            (Operation::SnapScan, Some(Response::Scan { slots }))
                if slots == state && search(mask | bit, full, ops, preds, state, dead) =>
            {
                return true;
            }
            _ => {}
        }
    }
    dead.insert(mask);
    false
}
