//! Agreement-style checks: consensus, lattice agreement, the quorum access
//! functions, and termination at a given process set.

use std::collections::BTreeSet;

use super::{Report, Verdict};
use crate::history::{History, LatticeSet, OpId, Operation, Response};
use crate::lattice::{comparable, is_below};
use crate::model::ProcessSet;
use crate::sim::RunOutcome;

pub fn check_consensus_safety(h: &History) -> Report {
    const NAME: &str = "consensus-safety";
    let proposals: BTreeSet<i64> = h
        .ops
        .iter()
        .filter_map(|o| match o.op {
            Operation::Propose { value } => Some(value),
            _ => None,
        })
        .collect();
    let mut first: Option<(OpId, i64)> = None;
    for o in h.completed() {
        let Some(Response::Decided { value }) = o.response() else { continue };
        if !proposals.contains(value) {
            return Report::new(NAME, Verdict::fail(format!("{} decided {value}, which nobody proposed", o.id), vec![o.id]));
        }
        match first {
            None => first = Some((o.id, *value)),
            Some((id, v)) if v != *value => {
                return Report::new(NAME, Verdict::fail(format!("{id} decided {v} but {} decided {value}", o.id), vec![id, o.id]));
            }
            Some(_) => {}
        }
    }
    Report::new(NAME, Verdict::Pass)
}

fn show(s: &LatticeSet) -> String {
    let items: Vec<String> = s.iter().map(u32::to_string).collect();
    format!("{{{}}}", items.join(","))
}

pub fn check_lattice_agreement(h: &History) -> Report {
    const NAME: &str = "lattice-agreement";
    let mut proposed = LatticeSet::new();
    let mut outputs: Vec<(OpId, &LatticeSet)> = Vec::new();
    let mut seen = ProcessSet::new();
    for o in &h.ops {
        let Operation::LaPropose { value } = &o.op else { continue };
        if !seen.insert(o.process) {
            return Report::new(NAME, Verdict::fail(format!("{} proposes a second time at {}", o.id, o.process), vec![o.id]));
        }
        proposed.extend(value);
        if let Some(Response::Lattice { value: y }) = o.response() {
            if !is_below(value, y) {
                return Report::new(NAME, Verdict::fail(format!("{} output {} misses its own input {}", o.id, show(y), show(value)), vec![o.id]));
            }
            outputs.push((o.id, y));
        }
    }
    for (id, y) in &outputs {
        if !is_below(y, &proposed) {
            return Report::new(NAME, Verdict::fail(format!("{id} output {} exceeds the join of all inputs {}", show(y), show(&proposed)), vec![*id]));
        }
    }
    for (i, (a, ya)) in outputs.iter().enumerate() {
        for (b, yb) in &outputs[i + 1..] {
            if !comparable(ya, yb) {
                return Report::new(NAME, Verdict::fail(format!("outputs of {a} {} and {b} {} are incomparable", show(ya), show(yb)), vec![*a, *b]));
            }
        }
    }
    Report::new(NAME, Verdict::Pass)
}

/// Every operation invoked at a member of `tset` returned. Finite runs stand
/// in for fair ones: a run that stopped quiescent or at its horizon counts,
/// a run that hit the event budget (or has no end record) is inconclusive.
pub fn check_termination(h: &History, tset: &ProcessSet, outcome: Option<&RunOutcome>) -> Report {
    const NAME: &str = "termination";
    let note = "fairness approximated by running to quiescence or the horizon".to_string();
    let verdict = match outcome {
        None => Verdict::inconclusive("trace has no run-end record"),
        Some(o) if o.exhausted => Verdict::inconclusive(format!("event budget exhausted after {} events", o.events)),
        Some(_) => {
            let stuck: Vec<OpId> = h.pending().filter(|o| tset.contains(&o.process)).map(|o| o.id).collect();
            if stuck.is_empty() {
                Verdict::Pass
            } else {
                let at: BTreeSet<String> =
                    h.pending().filter(|o| tset.contains(&o.process)).map(|o| o.process.to_string()).collect();
                let at: Vec<String> = at.into_iter().collect();
                Verdict::fail(format!("{} operations never returned at {}", stuck.len(), at.join(",")), stuck)
            }
        }
    };
    Report::new(NAME, verdict).with_notes(vec![note])
}

/// Validity and real-time ordering of raw `quorum_get`/`quorum_set` calls,
/// where each set's update is identified by its operation id. Also checks
/// that a get's clock cut-off is at least the threshold of every set that
/// finished before it started.
pub fn check_qaf(h: &History) -> Report {
    const NAME: &str = "qaf-properties";
    let sets: Vec<_> = h.ops.iter().filter(|o| o.op == Operation::QafSet).collect();
    for g in h.completed() {
        let Some(Response::QafStates { states, cutoff }) = g.response() else { continue };
        let g_done = g.completion.as_ref().map_or(0, |c| c.order);
        for state in states {
            for &id in state {
                let known = sets.iter().find(|s| s.id.0 == id);
                match known {
                    Some(s) if s.invoke_order < g_done => {}
                    _ => {
                        return Report::new(NAME, Verdict::fail(format!("{} returned update {id} that was not yet invoked", g.id), vec![g.id]));
                    }
                }
            }
        }
        for s in sets.iter().filter(|s| s.precedes(g)) {
            if !states.iter().any(|st| st.contains(&s.id.0)) {
                return Report::new(NAME, Verdict::fail(format!("{} missed {} which completed before it started", g.id, s.id), vec![s.id, g.id]));
            }
            if let Some(Response::QafSetDone { threshold }) = s.response() {
                if cutoff < threshold {
                    return Report::new(
                        NAME,
                        Verdict::fail(format!("{} used cut-off {cutoff} below the threshold {threshold} of {}", g.id, s.id), vec![s.id, g.id]),
                    );
                }
            }
        }
    }
    Report::new(NAME, Verdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::register::tests::Builder;
    use crate::model::ProcessId;
    use crate::sim::DrainReason;

    fn decided(b: &mut Builder, p: u32, proposal: i64, inv: u64, out: Option<(u64, i64)>) {
        b.raw(p, Operation::Propose { value: proposal }, inv, out.map(|(o, v)| (o, Response::Decided { value: v })));
    }

    #[test]
    fn consensus_examples() {
        let mut b = Builder::new();
        decided(&mut b, 1, 7, 0, Some((2, 7)));
        decided(&mut b, 2, 9, 1, Some((3, 7)));
        assert!(check_consensus_safety(&b.history()).verdict.is_pass());

        let mut b = Builder::new();
        decided(&mut b, 1, 7, 0, Some((2, 7)));
        decided(&mut b, 2, 9, 1, Some((3, 9)));
        assert!(check_consensus_safety(&b.history()).verdict.is_fail());

        let mut b = Builder::new();
        decided(&mut b, 1, 7, 0, Some((2, 3)));
        decided(&mut b, 2, 9, 1, None);
        assert!(check_consensus_safety(&b.history()).verdict.is_fail());
    }

    fn la(b: &mut Builder, p: u32, x: &[u32], inv: u64, y: Option<&[u32]>) {
        let set = |s: &[u32]| s.iter().copied().collect::<LatticeSet>();
        b.raw(p, Operation::LaPropose { value: set(x) }, inv, y.map(|y| (inv + 10, Response::Lattice { value: set(y) })));
    }

    #[test]
    fn lattice_examples() {
        let mut b = Builder::new();
        la(&mut b, 1, &[1], 0, Some(&[1]));
        la(&mut b, 2, &[2], 1, Some(&[1, 2]));
        assert!(check_lattice_agreement(&b.history()).verdict.is_pass());

        let mut b = Builder::new();
        la(&mut b, 1, &[1], 0, Some(&[1]));
        la(&mut b, 2, &[2], 1, Some(&[2]));
        let Verdict::Fail { reason, .. } = check_lattice_agreement(&b.history()).verdict else { panic!() };
        assert!(reason.contains("incomparable"));

        let mut b = Builder::new();
        la(&mut b, 1, &[1], 0, Some(&[1, 3]));
        la(&mut b, 2, &[2], 1, None);
        let Verdict::Fail { reason, .. } = check_lattice_agreement(&b.history()).verdict else { panic!() };
        assert!(reason.contains("exceeds"));

        let mut b = Builder::new();
        la(&mut b, 1, &[1], 0, Some(&[2]));
        la(&mut b, 2, &[2], 1, None);
        assert!(check_lattice_agreement(&b.history()).verdict.is_fail());
    }

    fn outcome(exhausted: bool) -> RunOutcome {
        RunOutcome { exhausted, drained_by: Some(DrainReason::Responded), end_time: 10, events: 99 }
    }

    #[test]
    fn termination_examples() {
        let mut b = Builder::new();
        b.raw(1, Operation::Read, 0, Some((1, Response::Value { value: 0 })));
        b.raw(3, Operation::Read, 2, None);
        let h = b.history();
        let ab: ProcessSet = [ProcessId(1), ProcessId(2)].into();
        assert!(check_termination(&h, &ab, Some(&outcome(false))).verdict.is_pass());
        assert!(check_termination(&h, &ProcessSet::new(), Some(&outcome(false))).verdict.is_pass());
        let c: ProcessSet = [ProcessId(3)].into();
        assert_eq!(check_termination(&h, &c, Some(&outcome(false))).verdict, Verdict::fail("1 operations never returned at p3", vec![OpId(1)]));
        assert_eq!(check_termination(&h, &c, Some(&outcome(true))).verdict.label(), "INCONCLUSIVE");
        assert_eq!(check_termination(&h, &c, None).verdict.label(), "INCONCLUSIVE");
    }

    #[test]
    fn qaf_real_time_and_validity() {
        let states = |xs: &[&[u64]], cutoff| Response::QafStates { states: xs.iter().map(|s| s.iter().copied().collect()).collect(), cutoff };
        let mut b = Builder::new();
        b.raw(1, Operation::QafSet, 0, Some((1, Response::QafSetDone { threshold: 2 })));
        b.raw(2, Operation::QafGet, 2, Some((3, states(&[&[0], &[]], 2))));
        assert!(check_qaf(&b.history()).verdict.is_pass());

        let mut b = Builder::new();
        b.raw(1, Operation::QafSet, 0, Some((1, Response::QafSetDone { threshold: 2 })));
        b.raw(2, Operation::QafGet, 2, Some((3, states(&[&[], &[]], 2))));
        assert!(check_qaf(&b.history()).verdict.is_fail());

        let mut b = Builder::new();
        b.raw(1, Operation::QafSet, 0, Some((1, Response::QafSetDone { threshold: 2 })));
        b.raw(2, Operation::QafGet, 2, Some((3, states(&[&[0]], 1))));
        assert!(check_qaf(&b.history()).verdict.is_fail());

        let mut b = Builder::new();
        b.raw(2, Operation::QafGet, 0, Some((1, states(&[&[1]], 0))));
        b.raw(1, Operation::QafSet, 2, None);
        assert!(check_qaf(&b.history()).verdict.is_fail());
    }
}
