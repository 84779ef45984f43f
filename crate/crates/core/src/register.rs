//! Multi-writer multi-reader atomic register over the quorum access
//! functions.
//!
//! A write reads a quorum's states, picks a version one above the highest
//! counter seen and stores the value with a conditional overwrite. A read
//! picks the highest-versioned state and writes it back before returning.

use std::fmt::{self, Debug};
use std::marker::PhantomData;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::history::{OpId, Operation, Response};
use crate::model::ProcessId;
use crate::qaf::{Msg, QafCore, QafDone, QafError, QafVariant, Quorums, StateMachine};
use crate::sim::{Context, Outbox, Process};

/// Write version, ordered by counter and then writer id. `pid` 0 is
/// reserved for the initial version.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub counter: u64,
    pub pid: u32,
}

impl Version {
    pub const INITIAL: Version = Version { counter: 0, pid: 0 };

    pub fn new(counter: u64, writer: ProcessId) -> Self {
        Version { counter, pid: writer.0 }
    }

    pub fn is_initial(self) -> bool {
        self == Self::INITIAL
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.counter, self.pid)
    }
}

/// Replica state: a value and the version that wrote it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterState<V> {
    pub val: V,
    pub ver: Version,
}

/// Replace the replica state if `version` is newer than the stored one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalOverwrite<V> {
    pub value: V,
    pub version: Version,
}

/// Values a register can hold. The default value is the initial one.
pub trait RegisterValue: Clone + Debug + Default + PartialEq + Serialize {}

impl<T: Clone + Debug + Default + PartialEq + Serialize> RegisterValue for T {}

#[derive(Clone, Copy, Debug)]
pub struct RegisterMachine<V>(PhantomData<V>);

impl<V: RegisterValue> StateMachine for RegisterMachine<V> {
    type State = RegisterState<V>;
    type Update = ConditionalOverwrite<V>;

    fn initial() -> Self::State {
        RegisterState::default()
    }

    fn apply(update: &Self::Update, state: &Self::State) -> Self::State {
        if update.version > state.ver {
            RegisterState { val: update.value.clone(), ver: update.version }
        } else {
            state.clone()
        }
    }
}

pub type RegisterMsg<V> = Msg<RegisterMachine<V>>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegisterError {
    #[error("a register operation is already in progress")]
    Busy,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegisterEvent<V> {
    /// A write fixed its version and is now storing it.
    VersionChosen(Version),
    Wrote(Version),
    Read { value: V, version: Version },
}

#[derive(Clone, Debug)]
enum Phase<V> {
    Idle,
    WriteGet { value: V },
    WriteSet { version: Version },
    ReadGet,
    ReadSet { value: V, version: Version },
}

/// Register replica and client logic at one process.
pub struct RegisterCore<V: RegisterValue> {
    qaf: QafCore<RegisterMachine<V>>,
    phase: Phase<V>,
}

impl<V: RegisterValue> RegisterCore<V> {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        RegisterCore { qaf: QafCore::new(me, n, variant, quorums), phase: Phase::Idle }
    }

    pub fn qaf(&self) -> &QafCore<RegisterMachine<V>> {
        &self.qaf
    }

    pub fn is_idle(&self) -> bool {
        matches!(self.phase, Phase::Idle)
    }

    pub fn write(&mut self, value: V, out: &mut Outbox<RegisterMsg<V>>) -> Result<(), RegisterError> {
        self.begin(Phase::WriteGet { value }, out)
    }

    pub fn read(&mut self, out: &mut Outbox<RegisterMsg<V>>) -> Result<(), RegisterError> {
        self.begin(Phase::ReadGet, out)
    }

    fn begin(&mut self, phase: Phase<V>, out: &mut Outbox<RegisterMsg<V>>) -> Result<(), RegisterError> {
        if !self.is_idle() {
            return Err(RegisterError::Busy);
        }
        self.qaf.quorum_get(out).map_err(|_| RegisterError::Busy)?;
        self.phase = phase;
        Ok(())
    }

    pub fn tick(&mut self, out: &mut Outbox<RegisterMsg<V>>) {
        self.qaf.tick(out);
    }

    pub fn handle(
        &mut self,
        from: ProcessId,
        msg: RegisterMsg<V>,
        out: &mut Outbox<RegisterMsg<V>>,
    ) -> Result<Vec<RegisterEvent<V>>, QafError> {
        let mut events = Vec::new();
        for done in self.qaf.handle(from, msg, out)? {
            match (std::mem::replace(&mut self.phase, Phase::Idle), done) {
                (Phase::WriteGet { value }, QafDone::Get { states, .. }) => {
                    let top = states.iter().map(|(_, s)| s.ver.counter).max().unwrap_or(0);
                    let version = Version::new(top + 1, self.qaf.me());
                    events.push(RegisterEvent::VersionChosen(version));
                    self.qaf.quorum_set(ConditionalOverwrite { value, version }, out)?;
                    self.phase = Phase::WriteSet { version };
                }
                (Phase::ReadGet, QafDone::Get { states, .. }) => {
                    let newest = states.into_iter().map(|(_, s)| s).max_by_key(|s| s.ver).expect("quorums are non-empty");
                    let (value, version) = (newest.val, newest.ver);
                    self.qaf.quorum_set(ConditionalOverwrite { value: value.clone(), version }, out)?;
                    self.phase = Phase::ReadSet { value, version };
                }
                (Phase::WriteSet { version }, QafDone::Set { .. }) => events.push(RegisterEvent::Wrote(version)),
                (Phase::ReadSet { value, version }, QafDone::Set { .. }) => {
                    events.push(RegisterEvent::Read { value, version })
                }
                (phase, _) => self.phase = phase,
            }
        }
        Ok(events)
    }
}

/// Register object process: `Write`/`Read` operations on an integer
/// register whose initial value is 0.
pub struct RegisterProcess {
    core: RegisterCore<i64>,
    current: Option<OpId>,
}

impl RegisterProcess {
    pub fn new(me: ProcessId, n: usize, variant: QafVariant, quorums: Arc<Quorums>) -> Self {
        RegisterProcess { core: RegisterCore::new(me, n, variant, quorums), current: None }
    }
}

impl Process for RegisterProcess {
    type Msg = RegisterMsg<i64>;

    fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<Self::Msg>) {
        let mut out = Outbox::new();
        let started = match operation {
            Operation::Write { value } => self.core.write(*value, &mut out),
            Operation::Read => self.core.read(&mut out),
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
        let kind = msg.kind();
        match self.core.handle(origin, msg, &mut out) {
            Ok(events) => {
                let clock = self.core.qaf().clock();
                ctx.note(|| json!({ "handled": kind, "from": origin, "clock": clock }));
                for event in events {
                    let Some(op) = self.current else { continue };
                    match event {
                        RegisterEvent::VersionChosen(v) => ctx.record_version(op, v),
                        RegisterEvent::Wrote(v) => {
                            ctx.record_version(op, v);
                            ctx.respond(op, Response::Ack);
                            self.current = None;
                        }
                        RegisterEvent::Read { value, version } => {
                            ctx.record_version(op, version);
                            ctx.respond(op, Response::Value { value });
                            self.current = None;
                        }
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
        self.core.qaf().variant() == QafVariant::Generalized
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{four_process_reads, four_process_system, four_process_writes};
    use crate::history::History;
    use crate::qaf::shared_quorums;
    use crate::sim::{run, SimConfig, Timing, TraceLevel, WorkloadEntry};

    fn entry(at: u64, who: u32, op: Operation) -> WorkloadEntry {
        WorkloadEntry { at, process: ProcessId(who), op }
    }

    fn run_everyone(n: usize, seed: u64, wl: &[WorkloadEntry]) -> History {
        let q = Arc::new(Quorums::everyone(n));
        let mut cfg = SimConfig::new(n, Timing::Async, seed);
        cfg.trace_level = TraceLevel::Ops;
        let trace = run(&cfg, |me| RegisterProcess::new(me, n, QafVariant::Generalized, q.clone()), wl).unwrap();
        assert!(!trace.outcome.exhausted);
        trace.history
    }

    #[test]
    fn conditional_overwrite_only_moves_forward() {
        type M = RegisterMachine<i64>;
        let s = RegisterState { val: 3, ver: Version { counter: 2, pid: 1 } };
        let older = ConditionalOverwrite { value: 9, version: Version { counter: 1, pid: 4 } };
        let newer = ConditionalOverwrite { value: 9, version: Version { counter: 2, pid: 2 } };
        assert_eq!(M::apply(&older, &s), s);
        assert_eq!(M::apply(&newer, &s), RegisterState { val: 9, ver: newer.version });
        assert!(M::initial().ver.is_initial());
    }

    #[test]
    fn versions_order_by_counter_then_writer() {
        assert!(Version::new(1, ProcessId(4)) < Version::new(2, ProcessId(1)));
        assert!(Version::new(2, ProcessId(1)) < Version::new(2, ProcessId(2)));
        assert!(Version::INITIAL < Version::new(1, ProcessId(1)));
    }

    #[test]
    fn first_write_gets_version_one() {
        let h = run_everyone(1, 0, &[entry(0, 1, Operation::Write { value: 5 })]);
        assert_eq!(h.ops[0].version, Some(Version::new(1, ProcessId(1))));
    }

    #[test]
    fn sequential_writes_increment_counter() {
        let wl = [entry(0, 1, Operation::Write { value: 1 }), entry(200, 2, Operation::Write { value: 2 })];
        let h = run_everyone(3, 4, &wl);
        assert!(h.ops[0].precedes(&h.ops[1]));
        assert_eq!(h.ops[0].version, Some(Version::new(1, ProcessId(1))));
        assert_eq!(h.ops[1].version, Some(Version::new(2, ProcessId(2))));
    }

    #[test]
    fn reads_see_initial_then_written_value() {
        let wl = [
            entry(0, 2, Operation::Read),
            entry(100, 1, Operation::Write { value: 7 }),
            entry(400, 3, Operation::Read),
        ];
        let h = run_everyone(3, 2, &wl);
        assert_eq!(h.ops[0].response(), Some(&Response::Value { value: 0 }));
        assert_eq!(h.ops[0].version, Some(Version::INITIAL));
        assert!(h.ops[1].precedes(&h.ops[2]));
        assert_eq!(h.ops[2].response(), Some(&Response::Value { value: 7 }));
    }

    #[test]
    fn concurrent_writes_get_distinct_versions() {
        for seed in 0..10 {
            let wl = [entry(0, 1, Operation::Write { value: 1 }), entry(0, 2, Operation::Write { value: 2 })];
            let h = run_everyone(3, seed, &wl);
            assert_ne!(h.ops[0].version, h.ops[1].version);
        }
    }

    #[test]
    fn operations_at_termination_component_complete_under_first_pattern() {
        let system = four_process_system();
        let q = shared_quorums(&four_process_reads(), &four_process_writes());
        let mut cfg = SimConfig::new(4, Timing::Async, 17).with_pattern_at_start(system.patterns()[0].clone());
        cfg.await_set = Some([ProcessId(1), ProcessId(2)].into());
        let wl = [
            entry(0, 1, Operation::Write { value: 3 }),
            entry(0, 2, Operation::Read),
            entry(1, 1, Operation::Read),
            entry(1, 3, Operation::Write { value: 4 }),
        ];
        let trace = run(&cfg, |me| RegisterProcess::new(me, 4, QafVariant::Generalized, q.clone()), &wl).unwrap();
        let at_ab = trace.history.ops.iter().filter(|o| o.process.0 <= 2);
        assert!(at_ab.clone().count() == 3 && at_ab.clone().all(|o| o.is_complete()));
    }
}
