//! Single-writer atomic snapshot built from one register per process.
//!
//! Segment `j` is a register written only by `p{j+1}`; it holds the owner's
//! latest value, the owner's update count and the scan the owner took just
//! before writing. A scan repeatedly collects all segments (reading them
//! concurrently). Two identical consecutive collects are returned as they
//! are. A writer seen moving twice during the scan has finished an update
//! whose embedded scan started after this one, so that scan is returned
//! instead.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::history::{OpId, Operation, Response, Slot};
use crate::model::ProcessId;
use crate::qaf::{QafError, QafVariant, Quorums};
use crate::register::{RegisterCore, RegisterError, RegisterEvent, RegisterMsg, RegisterValue};
use crate::sim::{Context, Destination, Outbox, Process};

/// Contents of one segment register.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord<T> {
    pub value: Option<T>,
    pub seq: u64,
    /// Scan taken by the owner before this write; absent only initially.
    pub scan: Option<Vec<Slot<T>>>,
}

impl<T: Clone> SegmentRecord<T> {
    fn slot(&self) -> Slot<T> {
        Slot { value: self.value.clone(), seq: self.seq }
    }
}

/// Batched register messages, tagged with the segment index.
pub type SnapshotMsg<T> = Vec<(u16, RegisterMsg<SegmentRecord<T>>)>;

type Parts<T> = Vec<(usize, Outbox<RegisterMsg<SegmentRecord<T>>>)>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("a snapshot operation is already in progress")]
    Busy,
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Qaf(#[from] QafError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotEvent<T> {
    Updated { seq: u64 },
    Scanned(Vec<Slot<T>>),
}

#[derive(Clone, Debug)]
struct Scan<T> {
    /// Value to store once the scan finishes, for the scan inside an update.
    pending_update: Option<T>,
    current: Vec<Option<SegmentRecord<T>>>,
    previous: Option<Vec<SegmentRecord<T>>>,
    moved: Vec<u32>,
    collects: u32,
}

#[derive(Clone, Debug)]
enum Phase<T> {
    Idle,
    Scanning(Scan<T>),
    Writing,
}

pub struct SnapshotCore<T: RegisterValue> {
    me: ProcessId,
    n: usize,
    segments: Vec<RegisterCore<SegmentRecord<T>>>,
    updates: u64,
    phase: Phase<T>,
}

impl<T: RegisterValue> SnapshotCore<T> {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        SnapshotCore {
            me,
            n,
            segments: (0..n).map(|_| RegisterCore::new(me, n, variant, quorums.clone())).collect(),
            updates: 0,
            phase: Phase::Idle,
        }
    }

    pub fn is_idle(&self) -> bool {
        matches!(self.phase, Phase::Idle)
    }

    /// Number of completed collects of the ongoing scan.
    pub fn collects(&self) -> u32 {
        match &self.phase {
            Phase::Scanning(s) => s.collects,
            _ => 0,
        }
    }

    pub fn uses_ticks(&self) -> bool {
        self.segments[0].qaf().variant() == QafVariant::Generalized
    }

    pub fn update(&mut self, value: T, out: &mut Outbox<SnapshotMsg<T>>) -> Result<(), SnapshotError> {
        self.start_scan(Some(value), out)
    }

    pub fn scan(&mut self, out: &mut Outbox<SnapshotMsg<T>>) -> Result<(), SnapshotError> {
        self.start_scan(None, out)
    }

    fn start_scan(&mut self, pending_update: Option<T>, out: &mut Outbox<SnapshotMsg<T>>) -> Result<(), SnapshotError> {
        if !self.is_idle() {
            return Err(SnapshotError::Busy);
        }
        let mut scan = Scan {
            pending_update,
            current: vec![None; self.n],
            previous: None,
            moved: vec![0; self.n],
            collects: 0,
        };
        let mut parts = Vec::new();
        self.collect(&mut scan, &mut parts)?;
        batch_into(parts, out);
        self.phase = Phase::Scanning(scan);
        Ok(())
    }

    /// Starts reading every segment.
    fn collect(&mut self, scan: &mut Scan<T>, parts: &mut Parts<T>) -> Result<(), SnapshotError> {
        scan.current = vec![None; self.n];
        for (j, seg) in self.segments.iter_mut().enumerate() {
            let mut o = Outbox::new();
            seg.read(&mut o)?;
            parts.push((j, o));
        }
        Ok(())
    }

    pub fn tick(&mut self, out: &mut Outbox<SnapshotMsg<T>>) {
        let parts = self
            .segments
            .iter_mut()
            .enumerate()
            .map(|(j, seg)| {
                let mut o = Outbox::new();
                seg.tick(&mut o);
                (j, o)
            })
            .collect();
        batch_into(parts, out);
    }

    pub fn handle(
        &mut self,
        from: ProcessId,
        msg: SnapshotMsg<T>,
        out: &mut Outbox<SnapshotMsg<T>>,
    ) -> Result<Vec<SnapshotEvent<T>>, SnapshotError> {
        let mut parts = Vec::new();
        let mut reg_events = Vec::new();
        for (j, m) in msg {
            let j = j as usize;
            if j >= self.n {
                continue;
            }
            let mut o = Outbox::new();
            let events = self.segments[j].handle(from, m, &mut o)?;
            parts.push((j, o));
            reg_events.extend(events.into_iter().map(|e| (j, e)));
        }
        let mut events = Vec::new();
        for (j, e) in reg_events {
            match (e, std::mem::replace(&mut self.phase, Phase::Idle)) {
                (RegisterEvent::Read { value, .. }, Phase::Scanning(mut scan)) => {
                    scan.current[j] = Some(value);
                    if scan.current.iter().any(Option::is_none) {
                        self.phase = Phase::Scanning(scan);
                        continue;
                    }
                    match self.evaluate(&mut scan) {
                        Some(result) => self.finish_scan(scan, result, &mut parts, &mut events)?,
                        None => {
                            self.collect(&mut scan, &mut parts)?;
                            self.phase = Phase::Scanning(scan);
                        }
                    }
                }
                (RegisterEvent::Wrote(_), Phase::Writing) if j == self.me.index() => {
                    events.push(SnapshotEvent::Updated { seq: self.updates });
                }
                (_, phase) => self.phase = phase,
            }
        }
        batch_into(parts, out);
        Ok(events)
    }

    /// Scan result once the latest collect allows one.
    fn evaluate(&self, scan: &mut Scan<T>) -> Option<Vec<Slot<T>>> {
        let current: Vec<SegmentRecord<T>> = scan.current.iter().map(|r| r.clone().expect("complete")).collect();
        scan.collects += 1;
        if let Some(previous) = &scan.previous {
            if previous.iter().zip(&current).all(|(a, b)| a.seq == b.seq) {
                return Some(current.iter().map(SegmentRecord::slot).collect());
            }
            for j in 0..self.n {
                if previous[j].seq != current[j].seq {
                    scan.moved[j] += 1;
                    if scan.moved[j] >= 2 {
                        return Some(current[j].scan.clone().expect("a moved segment carries its scan"));
                    }
                }
            }
        }
        scan.previous = Some(current);
        None
    }

    fn finish_scan(
        &mut self,
        scan: Scan<T>,
        result: Vec<Slot<T>>,
        parts: &mut Parts<T>,
        events: &mut Vec<SnapshotEvent<T>>,
    ) -> Result<(), SnapshotError> {
        match scan.pending_update {
            None => events.push(SnapshotEvent::Scanned(result)),
            Some(value) => {
                self.updates += 1;
                let record = SegmentRecord { value: Some(value), seq: self.updates, scan: Some(result) };
                let mut o = Outbox::new();
                self.segments[self.me.index()].write(record, &mut o)?;
                parts.push((self.me.index(), o));
                self.phase = Phase::Writing;
            }
        }
        Ok(())
    }
}

/// Groups per-segment outboxes into one batch per destination.
fn batch_into<T: RegisterValue>(parts: Parts<T>, out: &mut Outbox<SnapshotMsg<T>>) {
    let mut by_dest: BTreeMap<Destination, SnapshotMsg<T>> = BTreeMap::new();
    for (j, o) in parts {
        for (d, m) in o {
            by_dest.entry(d).or_default().push((j as u16, m));
        }
    }
    for (d, batch) in by_dest {
        match d {
            Destination::All => out.to_all(batch),
            Destination::To(p) => out.to(p, batch),
        }
    }
}

/// Snapshot object process over integer segments.
pub struct SnapshotProcess {
    core: SnapshotCore<i64>,
    current: Option<OpId>,
}

impl SnapshotProcess {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        SnapshotProcess { core: SnapshotCore::new(me, n, variant, quorums), current: None }
    }
}

impl Process for SnapshotProcess {
    type Msg = SnapshotMsg<i64>;

    fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<Self::Msg>) {
        let mut out = Outbox::new();
        let started = match operation {
            Operation::SnapUpdate { value } => self.core.update(*value, &mut out),
            Operation::SnapScan => self.core.scan(&mut out),
            other => {
                ctx.record(json!({ "event": "unsupported-operation", "op": other }));
                return;
            }
        };
        match started {
            Ok(()) => self.current = Some(op),
            Err(e) => ctx.record(json!({ "event": "protocol-error", "error": e.to_string() })),
        }
        ctx.send_outbox(out, |m| m);
    }

    fn on_message(&mut self, origin: ProcessId, msg: Self::Msg, ctx: &mut Context<Self::Msg>) {
        let mut out = Outbox::new();
        match self.core.handle(origin, msg, &mut out) {
            Ok(events) => {
                for e in events {
                    let Some(op) = self.current.take() else { continue };
                    match e {
                        SnapshotEvent::Updated { seq } => ctx.respond(op, Response::SnapAck { seq }),
                        SnapshotEvent::Scanned(slots) => ctx.respond(op, Response::Scan { slots }),
                    }
                }
            }
            Err(e) => ctx.record(json!({ "event": "protocol-error", "error": e.to_string() })),
        }
        ctx.send_outbox(out, |m| m);
    }

    fn on_tick(&mut self, ctx: &mut Context<Self::Msg>) {
        let mut out = Outbox::new();
        self.core.tick(&mut out);
        ctx.send_outbox(out, |m| m);
    }

    fn uses_ticks(&self) -> bool {
        self.core.uses_ticks()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::History;
    use crate::sim::{run, SimConfig, Timing, TraceLevel, WorkloadEntry};

    fn entry(at: u64, who: u32, op: Operation) -> WorkloadEntry {
        WorkloadEntry { at, process: ProcessId(who), op }
    }

    fn run_snapshot(n: usize, seed: u64, wl: &[WorkloadEntry]) -> History {
        let q = Arc::new(Quorums::everyone(n));
        let mut cfg = SimConfig::new(n, Timing::Async, seed);
        cfg.trace_level = TraceLevel::Ops;
        let trace = run(&cfg, |me| SnapshotProcess::new(me, n, QafVariant::Generalized, q.clone()), wl).unwrap();
        assert!(!trace.outcome.exhausted);
        assert!(trace.history.ops.iter().all(|o| o.is_complete()));
        trace.history
    }

    fn slots(h: &History, i: usize) -> Vec<Slot> {
        match h.ops[i].response() {
            Some(Response::Scan { slots }) => slots.clone(),
            other => panic!("expected a scan, got {other:?}"),
        }
    }

    #[test]
    fn update_then_scan_shows_value() {
        let wl = [entry(0, 2, Operation::SnapUpdate { value: 4 }), entry(0, 2, Operation::SnapScan)];
        let h = run_snapshot(3, 1, &wl);
        let s = slots(&h, 1);
        assert_eq!(s[1], Slot { value: Some(4), seq: 1 });
        assert_eq!(s[0], Slot { value: None, seq: 0 });
    }

    #[test]
    fn second_update_has_sequence_two() {
        let wl = [
            entry(0, 1, Operation::SnapUpdate { value: 1 }),
            entry(0, 1, Operation::SnapUpdate { value: 2 }),
            entry(0, 3, Operation::SnapScan),
        ];
        let h = run_snapshot(3, 5, &wl);
        assert_eq!(h.get(OpId(1)).unwrap().response(), Some(&Response::SnapAck { seq: 2 }));
    }

    #[test]
    fn idle_scan_needs_two_collects() {
        let q = Arc::new(Quorums::everyone(2));
        let mut core: SnapshotCore<i64> = SnapshotCore::new(ProcessId(1), 2, QafVariant::Generalized, q);
        let mut out = Outbox::new();
        core.scan(&mut out).unwrap();
        assert_eq!(core.collects(), 0);
        assert!(matches!(core.scan(&mut out), Err(SnapshotError::Busy)));
    }

    #[test]
    fn concurrent_scans_are_ordered_by_containment() {
        for seed in 0..8 {
            let wl = [
                entry(0, 1, Operation::SnapUpdate { value: 10 }),
                entry(0, 2, Operation::SnapUpdate { value: 20 }),
                entry(0, 3, Operation::SnapScan),
                entry(3, 1, Operation::SnapUpdate { value: 11 }),
                entry(5, 3, Operation::SnapScan),
                entry(2, 2, Operation::SnapScan),
            ];
            let h = run_snapshot(3, seed, &wl);
            let scans: Vec<Vec<u64>> = h
                .ops
                .iter()
                .filter_map(|o| match o.response() {
                    Some(Response::Scan { slots }) => Some(slots.iter().map(|s| s.seq).collect()),
                    _ => None,
                })
                .collect();
            for a in &scans {
                for b in &scans {
                    let le = a.iter().zip(b).all(|(x, y)| x <= y);
                    let ge = a.iter().zip(b).all(|(x, y)| x >= y);
                    assert!(le || ge, "seed {seed}: {a:?} vs {b:?}");
                }
            }
        }
    }
}
