//! Single-shot lattice agreement on top of the snapshot: store the proposal
//! in the caller's segment, scan, and return the join of everything seen.

use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

use crate::history::{LatticeSet, OpId, Operation, Response, Slot};
use crate::model::ProcessId;
use crate::qaf::{QafVariant, Quorums};
use crate::snapshot::{SnapshotCore, SnapshotError, SnapshotEvent, SnapshotMsg};
use crate::sim::{Context, Outbox, Process};

/// Join of the non-empty slots of a scan (sets under union).
pub fn join_slots<'a>(slots: impl IntoIterator<Item = &'a Slot<LatticeSet>>) -> LatticeSet {
    slots.into_iter().filter_map(|s| s.value.as_ref()).flatten().copied().collect()
}

pub fn is_below(a: &LatticeSet, b: &LatticeSet) -> bool {
    a.is_subset(b)
}

pub fn comparable(a: &LatticeSet, b: &LatticeSet) -> bool {
    is_below(a, b) || is_below(b, a)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("this process already proposed")]
    AlreadyProposed,
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Fresh,
    Storing,
    Scanning,
    Done,
}

pub struct LatticeCore {
    snapshot: SnapshotCore<LatticeSet>,
    stage: Stage,
}

impl LatticeCore {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        LatticeCore { snapshot: SnapshotCore::new(me, n, variant, quorums), stage: Stage::Fresh }
    }

    pub fn propose(&mut self, x: LatticeSet, out: &mut Outbox<SnapshotMsg<LatticeSet>>) -> Result<(), LatticeError> {
        if self.stage != Stage::Fresh {
            return Err(LatticeError::AlreadyProposed);
        }
        self.snapshot.update(x, out)?;
        self.stage = Stage::Storing;
        Ok(())
    }

    pub fn tick(&mut self, out: &mut Outbox<SnapshotMsg<LatticeSet>>) {
        self.snapshot.tick(out);
    }

    pub fn uses_ticks(&self) -> bool {
        self.snapshot.uses_ticks()
    }

    /// Returns the output once the proposal completes.
    pub fn handle(
        &mut self,
        from: ProcessId,
        msg: SnapshotMsg<LatticeSet>,
        out: &mut Outbox<SnapshotMsg<LatticeSet>>,
    ) -> Result<Option<LatticeSet>, LatticeError> {
        let mut output = None;
        for event in self.snapshot.handle(from, msg, out)? {
            match (event, self.stage) {
                (SnapshotEvent::Updated { .. }, Stage::Storing) => {
                    self.snapshot.scan(out)?;
                    self.stage = Stage::Scanning;
                }
                (SnapshotEvent::Scanned(slots), Stage::Scanning) => {
                    self.stage = Stage::Done;
                    output = Some(join_slots(&slots));
                }
                _ => {}
            }
        }
        Ok(output)
    }
}

pub struct LatticeProcess {
    core: LatticeCore,
    current: Option<OpId>,
}

impl LatticeProcess {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        LatticeProcess { core: LatticeCore::new(me, n, variant, quorums), current: None }
    }
}

impl Process for LatticeProcess {
    type Msg = SnapshotMsg<LatticeSet>;

    fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<Self::Msg>) {
        let Operation::LaPropose { value } = operation else {
            ctx.record(json!({ "event": "unsupported-operation", "op": operation }));
            return;
        };
        let mut out = Outbox::new();
        match self.core.propose(value.clone(), &mut out) {
            Ok(()) => self.current = Some(op),
            Err(e) => ctx.record(json!({ "event": "protocol-error", "error": e.to_string() })),
        }
        ctx.send_outbox(out, |m| m);
    }

    fn on_message(&mut self, origin: ProcessId, msg: Self::Msg, ctx: &mut Context<Self::Msg>) {
        let mut out = Outbox::new();
        match self.core.handle(origin, msg, &mut out) {
            Ok(Some(value)) => {
                if let Some(op) = self.current.take() {
                    ctx.respond(op, Response::Lattice { value });
                }
            }
            Ok(None) => {}
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
