//! Quorum access functions over an opaque replicated state.
//!
//! [`QafCore`] is a per-process component: callers feed it invocations and
//! received messages and it fills an [`Outbox`] and reports completions. Two
//! variants exist. The classical one answers explicit requests. The
//! generalized one works with unidirectional connectivity: every process
//! periodically pushes its state stamped with a logical clock, `quorum_get`
//! first fixes a clock cut-off from a write quorum, and `quorum_set` waits
//! until a read quorum reports a clock at least as high as the one at which
//! a write quorum applied the update.

use std::collections::BTreeSet;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::gqs::{GeneralizedQuorumSystem, QuorumFamily};
use crate::history::{OpId, Operation, Response};
use crate::model::ProcessId;
use crate::sim::{Context, Outbox, Process};

/// Deterministic replicated state machine driven by the access functions.
pub trait StateMachine {
    type State: Clone + Debug + PartialEq + Serialize;
    type Update: Clone + Debug + Serialize;

    fn initial() -> Self::State;
    fn apply(update: &Self::Update, state: &Self::State) -> Self::State;
}

/// Process set as a bitmask (bit `i` is `p{i+1}`).
pub type Mask = u64;

pub fn mask_of<'a>(set: impl IntoIterator<Item = &'a ProcessId>) -> Mask {
    set.into_iter().fold(0, |m, p| m | (1 << p.index()))
}

pub fn mask_members(mask: Mask) -> impl Iterator<Item = ProcessId> {
    (0..64).filter(move |i| mask & (1 << i) != 0).map(ProcessId::from_index)
}

/// Read and write quorum families in bitmask form, in family order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quorums {
    reads: Vec<Mask>,
    writes: Vec<Mask>,
}

impl Quorums {
    pub fn new(reads: &QuorumFamily, writes: &QuorumFamily) -> Self {
        Quorums {
            reads: reads.iter().map(mask_of).collect(),
            writes: writes.iter().map(mask_of).collect(),
        }
    }

    pub fn of(gqs: &GeneralizedQuorumSystem) -> Self {
        Self::new(&gqs.reads, &gqs.writes)
    }

    /// Every process is both the only read and the only write quorum.
    pub fn everyone(n: usize) -> Self {
        let all = if n == 64 { Mask::MAX } else { (1 << n) - 1 };
        Quorums { reads: vec![all], writes: vec![all] }
    }

    /// First read quorum (in family order) contained in `mask`.
    pub fn read_within(&self, mask: Mask) -> Option<Mask> {
        self.reads.iter().copied().find(|&r| r & !mask == 0)
    }

    /// First write quorum (in family order) contained in `mask`.
    pub fn write_within(&self, mask: Mask) -> Option<Mask> {
        self.writes.iter().copied().find(|&w| w & !mask == 0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QafVariant {
    Classical,
    #[default]
    Generalized,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QafMessage<S, U> {
    ClockReq { k: u64 },
    ClockResp { k: u64, clock: u64 },
    /// Generalized variant: pushed state, no request id.
    GetResp { state: S, clock: u64 },
    SetReq { k: u64, update: U },
    /// Generalized variant carries the responder's clock.
    SetResp { k: u64, clock: u64 },
    GetReq { k: u64 },
    /// Classical reply to `GetReq`.
    ClassicGetResp { k: u64, state: S },
    /// Classical reply to `SetReq`.
    ClassicSetResp { k: u64 },
}

impl<S, U> QafMessage<S, U> {
    pub fn kind(&self) -> &'static str {
        match self {
            QafMessage::ClockReq { .. } => "CLOCK_REQ",
            QafMessage::ClockResp { .. } => "CLOCK_RESP",
            QafMessage::GetResp { .. } => "GET_RESP",
            QafMessage::SetReq { .. } => "SET_REQ",
            QafMessage::SetResp { .. } => "SET_RESP",
            QafMessage::GetReq { .. } => "GET_REQ",
            QafMessage::ClassicGetResp { .. } => "GET_RESP",
            QafMessage::ClassicSetResp { .. } => "SET_RESP",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QafError {
    #[error("{kind} is not part of the {variant:?} protocol")]
    WrongVariant { kind: &'static str, variant: QafVariant },
    #[error("a quorum_get is already outstanding")]
    GetOutstanding,
    #[error("a quorum_set is already outstanding")]
    SetOutstanding,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QafDone<S> {
    /// States of the read quorum members (sorted by process) and the clock
    /// cut-off used (0 for the classical variant).
    Get { states: Vec<(ProcessId, S)>, cutoff: u64 },
    /// Clock threshold the set waited for (0 for the classical variant).
    Set { threshold: u64 },
}

#[derive(Clone, Debug)]
enum GetProgress<S> {
    Clocks { k: u64, clocks: Vec<Option<u64>> },
    Fresh { cutoff: u64 },
    Classic { k: u64, states: Vec<Option<S>> },
}

#[derive(Clone, Debug)]
enum SetProgress {
    Acks { k: u64, clocks: Vec<Option<u64>> },
    Fresh { threshold: u64 },
    Classic { k: u64, heard: Mask },
}

/// Message type of a core over machine `M`.
pub type Msg<M> = QafMessage<<M as StateMachine>::State, <M as StateMachine>::Update>;

pub struct QafCore<M: StateMachine> {
    me: ProcessId,
    n: usize,
    variant: QafVariant,
    quorums: Arc<Quorums>,
    state: M::State,
    seq: u64,
    clock: u64,
    /// Latest pushed (state, clock) per sender, highest clock wins.
    latest: Vec<Option<(M::State, u64)>>,
    get: Option<GetProgress<M::State>>,
    set: Option<SetProgress>,
}

impl<M: StateMachine> QafCore<M> {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        QafCore {
            me,
            n,
            variant,
            quorums,
            state: M::initial(),
            seq: 0,
            clock: 0,
            latest: vec![None; n],
            get: None,
            set: None,
        }
    }

    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn state(&self) -> &M::State {
        &self.state
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn variant(&self) -> QafVariant {
        self.variant
    }

    /// Clock of the latest pushed state cached for `from`.
    pub fn cached_clock(&self, from: ProcessId) -> Option<u64> {
        self.latest[from.index()].as_ref().map(|(_, c)| *c)
    }

    pub fn is_idle(&self) -> bool {
        self.get.is_none() && self.set.is_none()
    }

    pub fn quorum_get(&mut self, out: &mut Outbox<Msg<M>>) -> Result<(), QafError> {
        if self.get.is_some() {
            return Err(QafError::GetOutstanding);
        }
        self.seq += 1;
        let k = self.seq;
        match self.variant {
            QafVariant::Generalized => {
                out.to_all(QafMessage::ClockReq { k });
                self.get = Some(GetProgress::Clocks { k, clocks: vec![None; self.n] });
            }
            QafVariant::Classical => {
                out.to_all(QafMessage::GetReq { k });
                self.get = Some(GetProgress::Classic { k, states: vec![None; self.n] });
            }
        }
        Ok(())
    }

    pub fn quorum_set(&mut self, update: M::Update, out: &mut Outbox<Msg<M>>) -> Result<(), QafError> {
        if self.set.is_some() {
            return Err(QafError::SetOutstanding);
        }
        self.seq += 1;
        let k = self.seq;
        out.to_all(QafMessage::SetReq { k, update });
        self.set = Some(match self.variant {
            QafVariant::Generalized => SetProgress::Acks { k, clocks: vec![None; self.n] },
            QafVariant::Classical => SetProgress::Classic { k, heard: 0 },
        });
        Ok(())
    }

    /// Periodic step of the generalized variant: advance the clock and push
    /// the current state to everyone.
    pub fn tick(&mut self, out: &mut Outbox<Msg<M>>) {
        if self.variant == QafVariant::Generalized {
            self.clock += 1;
            out.to_all(QafMessage::GetResp { state: self.state.clone(), clock: self.clock });
        }
    }

    pub fn handle(
        &mut self,
        from: ProcessId,
        msg: Msg<M>,
        out: &mut Outbox<Msg<M>>,
    ) -> Result<Vec<QafDone<M::State>>, QafError> {
        let generalized = self.variant == QafVariant::Generalized;
        let wrong = |kind| Err(QafError::WrongVariant { kind, variant: self.variant });
        let mut done = Vec::new();
        match msg {
            QafMessage::SetReq { k, update } => {
                self.state = M::apply(&update, &self.state);
                if generalized {
                    self.clock += 1;
                    out.to(from, QafMessage::SetResp { k, clock: self.clock });
                } else {
                    out.to(from, QafMessage::ClassicSetResp { k });
                }
            }
            QafMessage::ClockReq { k } if generalized => {
                out.to(from, QafMessage::ClockResp { k, clock: self.clock });
            }
            QafMessage::ClockResp { k, clock } if generalized => {
                if let Some(GetProgress::Clocks { k: want, clocks }) = &mut self.get {
                    if *want == k {
                        clocks[from.index()] = Some(clock);
                        if let Some(cutoff) = max_over_write_quorum(&self.quorums, clocks) {
                            self.get = Some(GetProgress::Fresh { cutoff });
                        }
                    }
                }
            }
            QafMessage::SetResp { k, clock } if generalized => {
                if let Some(SetProgress::Acks { k: want, clocks }) = &mut self.set {
                    if *want == k {
                        clocks[from.index()] = Some(clock);
                        if let Some(threshold) = max_over_write_quorum(&self.quorums, clocks) {
                            self.set = Some(SetProgress::Fresh { threshold });
                        }
                    }
                }
            }
            QafMessage::GetResp { state, clock } if generalized => {
                let slot = &mut self.latest[from.index()];
                if slot.as_ref().is_none_or(|(_, c)| clock > *c) {
                    *slot = Some((state, clock));
                }
            }
            QafMessage::GetReq { k } if !generalized => {
                out.to(from, QafMessage::ClassicGetResp { k, state: self.state.clone() });
            }
            QafMessage::ClassicGetResp { k, state } if !generalized => {
                if let Some(GetProgress::Classic { k: want, states }) = &mut self.get {
                    if *want == k {
                        states[from.index()] = Some(state);
                        let heard = states
                            .iter()
                            .enumerate()
                            .filter(|(_, s)| s.is_some())
                            .fold(0, |m, (i, _)| m | (1 << i));
                        if let Some(r) = self.quorums.read_within(heard) {
                            let states = mask_members(r).map(|p| (p, states[p.index()].clone().expect("heard"))).collect();
                            self.get = None;
                            done.push(QafDone::Get { states, cutoff: 0 });
                        }
                    }
                }
            }
            QafMessage::ClassicSetResp { k } if !generalized => {
                if let Some(SetProgress::Classic { k: want, heard }) = &mut self.set {
                    if *want == k {
                        *heard |= 1 << from.index();
                        if self.quorums.write_within(*heard).is_some() {
                            self.set = None;
                            done.push(QafDone::Set { threshold: 0 });
                        }
                    }
                }
            }
            other => return wrong(other.kind()),
        }
        if generalized {
            self.complete_fresh(&mut done);
        }
        Ok(done)
    }

    /// Read quorum whose cached clocks all reach `bound`.
    fn fresh_read_quorum(&self, bound: u64) -> Option<Mask> {
        let fresh = self
            .latest
            .iter()
            .enumerate()
            .filter(|(_, e)| e.as_ref().is_some_and(|(_, c)| *c >= bound))
            .fold(0, |m, (i, _)| m | (1 << i));
        self.quorums.read_within(fresh)
    }

    fn complete_fresh(&mut self, done: &mut Vec<QafDone<M::State>>) {
        if let Some(GetProgress::Fresh { cutoff }) = self.get {
            if let Some(r) = self.fresh_read_quorum(cutoff) {
                let states = mask_members(r)
                    .map(|p| (p, self.latest[p.index()].as_ref().expect("fresh").0.clone()))
                    .collect();
                self.get = None;
                done.push(QafDone::Get { states, cutoff });
            }
        }
        if let Some(SetProgress::Fresh { threshold }) = self.set {
            if self.fresh_read_quorum(threshold).is_some() {
                self.set = None;
                done.push(QafDone::Set { threshold });
            }
        }
    }
}

/// Highest clock among the members of the first write quorum that has
/// fully answered.
fn max_over_write_quorum(quorums: &Quorums, clocks: &[Option<u64>]) -> Option<u64> {
    let heard = clocks.iter().enumerate().filter(|(_, c)| c.is_some()).fold(0, |m, (i, _)| m | (1 << i));
    let w = quorums.write_within(heard)?;
    mask_members(w).map(|p| clocks[p.index()].expect("heard")).max()
}

/// State machine whose state is the set of update ids applied so far.
#[derive(Clone, Copy, Debug)]
pub struct UpdateLog;

impl StateMachine for UpdateLog {
    type State = BTreeSet<u64>;
    type Update = u64;

    fn initial() -> Self::State {
        BTreeSet::new()
    }

    fn apply(update: &u64, state: &Self::State) -> Self::State {
        let mut next = state.clone();
        next.insert(*update);
        next
    }
}

/// Process exposing the raw access functions: `QafSet` applies an update
/// named by its own op id, `QafGet` returns the logged update ids of a read
/// quorum.
pub struct QafProcess {
    core: QafCore<UpdateLog>,
    get_op: Option<OpId>,
    set_op: Option<OpId>,
}

impl QafProcess {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        QafProcess { core: QafCore::new(me, n, variant, quorums), get_op: None, set_op: None }
    }

    pub fn core(&self) -> &QafCore<UpdateLog> {
        &self.core
    }

    fn finish(&mut self, done: Vec<QafDone<BTreeSet<u64>>>, ctx: &mut Context<Msg<UpdateLog>>) {
        for d in done {
            match d {
                QafDone::Get { states, cutoff } => {
                    if let Some(op) = self.get_op.take() {
                        let states = states.into_iter().map(|(_, s)| s).collect();
                        ctx.respond(op, Response::QafStates { states, cutoff });
                    }
                }
                QafDone::Set { threshold } => {
                    if let Some(op) = self.set_op.take() {
                        ctx.respond(op, Response::QafSetDone { threshold });
                    }
                }
            }
        }
    }
}

impl Process for QafProcess {
    type Msg = Msg<UpdateLog>;

    fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<Self::Msg>) {
        let mut out = Outbox::new();
        let started = match operation {
            Operation::QafGet => self.core.quorum_get(&mut out).map(|_| self.get_op = Some(op)),
            Operation::QafSet => self.core.quorum_set(op.0, &mut out).map(|_| self.set_op = Some(op)),
            other => {
                ctx.record(json!({ "event": "unsupported-operation", "op": other }));
                return;
            }
        };
        if let Err(e) = started {
            ctx.record(json!({ "event": "protocol-error", "error": e.to_string() }));
        }
        ctx.send_outbox(out, |m| m);
    }

    fn on_message(&mut self, origin: ProcessId, msg: Self::Msg, ctx: &mut Context<Self::Msg>) {
        let kind = msg.kind();
        let mut out = Outbox::new();
        match self.core.handle(origin, msg, &mut out) {
            Ok(done) => {
                let (clock, seq) = (self.core.clock(), self.core.seq());
                ctx.note(|| json!({ "handled": kind, "from": origin, "clock": clock, "seq": seq }));
                self.finish(done, ctx);
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
        self.core.variant() == QafVariant::Generalized
    }
}

/// Quorum families restricted to what a process needs, shared by every
/// process of a run.
pub fn shared_quorums(reads: &QuorumFamily, writes: &QuorumFamily) -> Arc<Quorums> {
    Arc::new(Quorums::new(reads, writes))
}
