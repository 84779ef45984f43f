//! Seeded discrete-event simulator.
//!
//! Processes are event-driven automata (see [`Process`]). Every message is
//! wrapped in an [`Envelope`] and flooded: the first time a process receives
//! an envelope it delivers the payload (if addressed to it) and forwards the
//! envelope to every out-neighbour not yet on the envelope's hop set. Faults
//! follow a [`FailureSchedule`] that must stay within the configured
//! [`FailurePattern`].

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::history::{Completion, History, OpId, OpRecord, Operation, Response};
use crate::model::{processes, Channel, FailurePattern, NetworkGraph, ProcessId, ProcessSet};
use crate::register::Version;

pub type Time = u64;

/// Largest supported process count (hop sets are 64-bit masks).
pub const MAX_PROCESSES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Timing {
    Async,
    PartialSync { gst: Time, delta: Time },
}

impl Timing {
    pub fn gst(&self) -> Option<Time> {
        match self {
            Timing::Async => None,
            Timing::PartialSync { gst, .. } => Some(*gst),
        }
    }
}

/// How per-hop delays are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayModel {
    /// Seeded draws: exponential-like with mean `mean_delay` in asynchronous
    /// mode and before GST, uniform in `[1, delta]` after GST.
    #[default]
    Random,
    /// Every hop takes exactly `mean_delay` (asynchronous, pre-GST) or
    /// `delta` (post-GST).
    Pinned,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceLevel {
    /// Operations, faults, protocol records and run markers only.
    Ops,
    /// Everything, including sends, deliveries, drops, timers and ticks.
    #[default]
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashAt {
    pub process: ProcessId,
    pub at: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisconnectAt {
    pub channel: Channel,
    pub at: Time,
}

/// When the failures permitted by a pattern actually happen.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureSchedule {
    #[serde(default)]
    pub crashes: Vec<CrashAt>,
    #[serde(default)]
    pub disconnects: Vec<DisconnectAt>,
}

impl FailureSchedule {
    /// Every failure in `pattern` happens at time `at`.
    pub fn all_at(pattern: &FailurePattern, at: Time) -> Self {
        FailureSchedule {
            crashes: pattern.crashed.iter().map(|&process| CrashAt { process, at }).collect(),
            disconnects: pattern.dropped.iter().map(|&channel| DisconnectAt { channel, at }).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub n: usize,
    pub graph: NetworkGraph,
    pub timing: Timing,
    pub delay: DelayModel,
    pub mean_delay: Time,
    /// Upper bound (in permille) of the per-process clock slowdown applied
    /// to timers started before GST.
    pub max_drift_permille: u32,
    /// Occasionally stretch asynchronous and pre-GST delays tenfold.
    pub adversarial: bool,
    pub pattern: FailurePattern,
    pub schedule: FailureSchedule,
    pub seed: u64,
    pub tick_interval: Time,
    pub max_events: u64,
    /// Stop ticks and timers once this time is reached.
    pub horizon: Option<Time>,
    /// Processes whose workload operations must respond before the run
    /// starts draining. `None` means every process.
    pub await_set: Option<ProcessSet>,
    pub trace_level: TraceLevel,
    /// Extra fields for the run-start event.
    pub label: Value,
}

impl SimConfig {
    pub fn new(n: usize, timing: Timing, seed: u64) -> Self {
        SimConfig {
            n,
            graph: NetworkGraph::complete(n),
            timing,
            delay: DelayModel::Random,
            mean_delay: 4,
            max_drift_permille: 3000,
            adversarial: false,
            pattern: FailurePattern::none(),
            schedule: FailureSchedule::default(),
            seed,
            tick_interval: 2,
            max_events: 2_000_000,
            horizon: None,
            await_set: None,
            trace_level: TraceLevel::Full,
            label: Value::Null,
        }
    }

    /// Use `pattern` with all of its failures taking effect at time 0.
    pub fn with_pattern_at_start(mut self, pattern: FailurePattern) -> Self {
        self.schedule = FailureSchedule::all_at(&pattern, 0);
        self.pattern = pattern;
        self
    }

    fn validate(&self, workload: &[WorkloadEntry]) -> Result<(), SimError> {
        if self.n == 0 || self.n > MAX_PROCESSES {
            return Err(SimError::ProcessCount(self.n));
        }
        let known = |p: ProcessId| p.0 >= 1 && p.index() < self.n;
        if let Timing::PartialSync { delta: 0, .. } = self.timing {
            return Err(SimError::ZeroDelta);
        }
        if self.tick_interval == 0 {
            return Err(SimError::ZeroTickInterval);
        }
        if self.mean_delay == 0 {
            return Err(SimError::ZeroMeanDelay);
        }
        if self.max_drift_permille < 1000 {
            return Err(SimError::DriftBelowOne(self.max_drift_permille));
        }
        if let Some(p) = self.graph.vertices.iter().copied().find(|&p| !known(p)) {
            return Err(SimError::UnknownProcess(p));
        }
        for c in &self.pattern.crashed {
            if !known(*c) {
                return Err(SimError::UnknownProcess(*c));
            }
        }
        for ch in &self.pattern.dropped {
            if !known(ch.from) || !known(ch.to) {
                return Err(SimError::UnknownChannel(*ch));
            }
        }
        for c in &self.schedule.crashes {
            if !self.pattern.crashed.contains(&c.process) {
                return Err(SimError::CrashOutsidePattern(c.process));
            }
        }
        for d in &self.schedule.disconnects {
            if !self.pattern.dropped.contains(&d.channel) {
                return Err(SimError::DisconnectOutsidePattern(d.channel));
            }
        }
        if let Some(w) = workload.iter().find(|w| !known(w.process)) {
            return Err(SimError::UnknownProcess(w.process));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("process count {0} outside 1..=64")]
    ProcessCount(usize),
    #[error("delta must be positive")]
    ZeroDelta,
    #[error("tick interval must be positive")]
    ZeroTickInterval,
    #[error("mean delay must be positive")]
    ZeroMeanDelay,
    #[error("drift bound {0} permille is below 1000")]
    DriftBelowOne(u32),
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("unknown channel {0}")]
    UnknownChannel(Channel),
    #[error("schedule crashes {0}, which the pattern does not allow")]
    CrashOutsidePattern(ProcessId),
    #[error("schedule disconnects {0}, which the pattern does not allow")]
    DisconnectOutsidePattern(Channel),
}

/// One operation to invoke at `process` no earlier than `at`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadEntry {
    pub at: Time,
    pub process: ProcessId,
    pub op: Operation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Destination {
    All,
    To(ProcessId),
}

impl Destination {
    pub fn includes(self, p: ProcessId) -> bool {
        match self {
            Destination::All => true,
            Destination::To(q) => q == p,
        }
    }
}

/// Set of processes as a 64-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct HopSet(u64);

impl HopSet {
    pub fn single(p: ProcessId) -> Self {
        HopSet(1 << p.index())
    }

    pub fn contains(self, p: ProcessId) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn with(self, p: ProcessId) -> Self {
        HopSet(self.0 | (1 << p.index()))
    }

    pub fn members(self) -> impl Iterator<Item = ProcessId> {
        (0..64).filter(move |i| self.0 & (1 << i) != 0).map(ProcessId::from_index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvelopeId {
    pub origin: ProcessId,
    pub seq: u64,
}

#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub id: EnvelopeId,
    pub dest: Destination,
    pub hops: HopSet,
    pub payload: M,
}

/// Processes the forwarding rule sends an envelope to next: out-neighbours
/// of `p` that are neither `p` nor already on the hop set.
pub fn flood_forward(p: ProcessId, hops: HopSet, out_neighbors: &[ProcessId]) -> Vec<ProcessId> {
    out_neighbors.iter().copied().filter(|&q| q != p && !hops.contains(q)).collect()
}

/// What a process does with one received envelope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub deliver: bool,
    pub forward_to: Vec<ProcessId>,
    pub hops: HopSet,
}

/// Per-process duplicate filter for flooded envelopes.
#[derive(Clone, Debug)]
pub struct FloodRouter {
    me: ProcessId,
    seen: HashSet<EnvelopeId>,
}

impl FloodRouter {
    pub fn new(me: ProcessId) -> Self {
        FloodRouter { me, seen: HashSet::new() }
    }

    /// Registers an envelope this process originates.
    pub fn originate(&mut self, id: EnvelopeId) {
        self.seen.insert(id);
    }

    /// `None` for duplicates. A unicast envelope is not forwarded further by
    /// its destination.
    pub fn receive<M>(&mut self, env: &Envelope<M>, out_neighbors: &[ProcessId]) -> Option<Receipt> {
        if !self.seen.insert(env.id) {
            return None;
        }
        let deliver = env.dest.includes(self.me);
        let hops = env.hops.with(self.me);
        let forward_to = match env.dest {
            Destination::To(q) if q == self.me => Vec::new(),
            _ => flood_forward(self.me, hops, out_neighbors),
        };
        Some(Receipt { deliver, forward_to, hops })
    }
}

/// Messages produced by a protocol component, to be wrapped by its owner.
#[derive(Clone, Debug)]
pub struct Outbox<M> {
    msgs: Vec<(Destination, M)>,
}

impl<M> Default for Outbox<M> {
    fn default() -> Self {
        Outbox { msgs: Vec::new() }
    }
}

impl<M> Outbox<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn to_all(&mut self, m: M) {
        self.msgs.push((Destination::All, m));
    }

    pub fn to(&mut self, p: ProcessId, m: M) {
        self.msgs.push((Destination::To(p), m));
    }

    pub fn is_empty(&self) -> bool {
        self.msgs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.msgs.len()
    }

    pub fn messages(&self) -> &[(Destination, M)] {
        &self.msgs
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, (Destination, M)> {
        self.msgs.drain(..)
    }
}

impl<M> IntoIterator for Outbox<M> {
    type Item = (Destination, M);
    type IntoIter = std::vec::IntoIter<(Destination, M)>;
    fn into_iter(self) -> Self::IntoIter {
        self.msgs.into_iter()
    }
}

/// Handler-side view of the simulator.
pub struct Context<M> {
    me: ProcessId,
    now: Time,
    n: usize,
    full: bool,
    sends: Vec<(Destination, M)>,
    timers: Vec<(&'static str, Time)>,
    responses: Vec<(OpId, Response)>,
    versions: Vec<(OpId, Version)>,
    records: Vec<Value>,
}

impl<M> Context<M> {
    fn new(me: ProcessId, now: Time, n: usize, full: bool) -> Self {
        Context {
            me,
            now,
            n,
            full,
            sends: Vec::new(),
            timers: Vec::new(),
            responses: Vec::new(),
            versions: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn send(&mut self, to: ProcessId, m: M) {
        self.sends.push((Destination::To(to), m));
    }

    pub fn broadcast(&mut self, m: M) {
        self.sends.push((Destination::All, m));
    }

    pub fn send_outbox<N>(&mut self, outbox: Outbox<N>, wrap: impl Fn(N) -> M) {
        self.sends.extend(outbox.into_iter().map(|(d, m)| (d, wrap(m))));
    }

    /// (Re)starts the named timer.
    pub fn start_timer(&mut self, name: &'static str, duration: Time) {
        self.timers.push((name, duration));
    }

    pub fn respond(&mut self, op: OpId, response: Response) {
        self.responses.push((op, response));
    }

    /// Attaches a register version to a pending or completing operation.
    pub fn record_version(&mut self, op: OpId, version: Version) {
        self.versions.push((op, version));
    }

    /// Protocol milestone kept at every trace level.
    pub fn record(&mut self, payload: Value) {
        self.records.push(payload);
    }

    /// Debug detail kept only in full traces.
    pub fn note(&mut self, payload: impl FnOnce() -> Value) {
        if self.full {
            self.records.push(json!({ "detail": payload() }));
        }
    }
}

/// An event-driven process automaton.
pub trait Process {
    type Msg: Clone + fmt::Debug + Serialize;

    fn on_start(&mut self, _ctx: &mut Context<Self::Msg>) {}

    fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<Self::Msg>);

    fn on_message(&mut self, origin: ProcessId, msg: Self::Msg, ctx: &mut Context<Self::Msg>);

    fn on_timer(&mut self, _name: &'static str, _ctx: &mut Context<Self::Msg>) {}

    fn on_tick(&mut self, _ctx: &mut Context<Self::Msg>) {}

    /// Whether the simulator should call [`Process::on_tick`] periodically.
    fn uses_ticks(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    RunStart,
    OpInvoke,
    OpResponse,
    OpVersion,
    Send,
    Deliver,
    Drop,
    Crash,
    Disconnect,
    TimerExpiry,
    PeriodicTick,
    Note,
    RunEnd,
}

/// One line of a JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: Time,
    pub kind: EventKind,
    pub subject: String,
    pub payload: Value,
    #[serde(rename = "op-id")]
    pub op_id: Option<u64>,
    pub version: Option<Version>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrainReason {
    /// Every awaited workload operation responded or was abandoned.
    Responded,
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// The event budget ran out before the queue emptied.
    pub exhausted: bool,
    pub drained_by: Option<DrainReason>,
    pub end_time: Time,
    pub events: u64,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub history: History,
    pub outcome: RunOutcome,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        events_to_jsonl(&self.events)
    }

    /// Milestones recorded with [`Context::record`] whose payload has
    /// `"event": label`, as (time, process, payload).
    pub fn records<'a>(&'a self, label: &'a str) -> impl Iterator<Item = (Time, ProcessId, &'a Value)> + 'a {
        self.events.iter().filter_map(move |e| {
            if e.kind != EventKind::Note || e.payload.get("event").and_then(Value::as_str) != Some(label) {
                return None;
            }
            Some((e.time, parse_process(&e.subject)?, &e.payload))
        })
    }
}

pub fn events_to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

/// Parses `p<N>` subjects.
pub fn parse_process(s: &str) -> Option<ProcessId> {
    let id: u32 = s.strip_prefix('p')?.parse().ok()?;
    (id >= 1).then_some(ProcessId(id))
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A trace read back from JSON lines.
#[derive(Clone, Debug)]
pub struct ParsedTrace {
    pub events: Vec<TraceEvent>,
    pub history: History,
    /// `None` when the run-end line is missing (truncated trace).
    pub outcome: Option<RunOutcome>,
    pub run_start: Option<Value>,
    /// The text ended mid-line and the partial line was ignored.
    pub partial_tail: bool,
}

pub fn parse_jsonl(text: &str) -> Result<ParsedTrace, TraceError> {
    let mut events = Vec::new();
    let mut partial_tail = false;
    let last = text.lines().count().saturating_sub(1);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceEvent>(line) {
            Ok(e) => events.push(e),
            Err(_) if i == last && !text.ends_with('\n') => partial_tail = true,
            Err(source) => return Err(TraceError::Json { line: i + 1, source }),
        }
    }
    let history = history_from_events(&events)?;
    let outcome = match events.iter().rev().find(|e| e.kind == EventKind::RunEnd) {
        Some(e) => Some(
            serde_json::from_value(e.payload.clone())
                .map_err(|source| TraceError::Json { line: events.len(), source })?,
        ),
        None => None,
    };
    let run_start = events.iter().find(|e| e.kind == EventKind::RunStart).map(|e| e.payload.clone());
    Ok(ParsedTrace { events, history, outcome, run_start, partial_tail })
}

/// Rebuilds the operation history from op-invoke, op-version and
/// op-response events.
pub fn history_from_events(events: &[TraceEvent]) -> Result<History, TraceError> {
    let mut ops: Vec<OpRecord> = Vec::new();
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    let mut order = 0u64;
    for (line, e) in events.iter().enumerate().map(|(i, e)| (i + 1, e)) {
        let malformed = |reason: &str| TraceError::Malformed { line, reason: reason.to_string() };
        match e.kind {
            EventKind::OpInvoke => {
                let id = e.op_id.ok_or_else(|| malformed("op-invoke without op-id"))?;
                let process = parse_process(&e.subject).ok_or_else(|| malformed("bad process subject"))?;
                let op: Operation =
                    serde_json::from_value(e.payload.clone()).map_err(|source| TraceError::Json { line, source })?;
                if index.insert(id, ops.len()).is_some() {
                    return Err(malformed("operation invoked twice"));
                }
                ops.push(OpRecord {
                    id: OpId(id),
                    process,
                    op,
                    invoke_time: e.time,
                    invoke_order: order,
                    completion: None,
                    version: None,
                });
                order += 1;
            }
            EventKind::OpVersion => {
                let id = e.op_id.ok_or_else(|| malformed("op-version without op-id"))?;
                let i = *index.get(&id).ok_or_else(|| malformed("version for unknown operation"))?;
                ops[i].version = Some(e.version.ok_or_else(|| malformed("op-version without version"))?);
            }
            EventKind::OpResponse => {
                let id = e.op_id.ok_or_else(|| malformed("op-response without op-id"))?;
                let i = *index.get(&id).ok_or_else(|| malformed("response for unknown operation"))?;
                let response: Response =
                    serde_json::from_value(e.payload.clone()).map_err(|source| TraceError::Json { line, source })?;
                if ops[i].completion.is_some() {
                    return Err(malformed("operation responded twice"));
                }
                if let Some(v) = e.version {
                    ops[i].version = Some(v);
                }
                ops[i].completion = Some(Completion { time: e.time, order, response });
                order += 1;
            }
            _ => {}
        }
    }
    Ok(History::new(ops))
}

#[derive(Clone, Debug)]
enum Pending<M> {
    Crash(ProcessId),
    Disconnect(Channel),
    Start(ProcessId),
    Invoke(usize),
    Deliver { to: ProcessId, from: ProcessId, env: Rc<Envelope<M>> },
    Timer { p: ProcessId, name: &'static str, generation: u64 },
    Tick(ProcessId),
}

impl<M> Pending<M> {
    fn rank(&self) -> u8 {
        match self {
            Pending::Crash(_) => 0,
            Pending::Disconnect(_) => 1,
            Pending::Start(_) => 2,
            Pending::Invoke(_) => 3,
            Pending::Deliver { .. } => 4,
            Pending::Timer { .. } => 5,
            Pending::Tick(_) => 6,
        }
    }
}

struct Scheduled<M> {
    key: (Time, u8, u64, u64),
    event: Pending<M>,
}

impl<M> PartialEq for Scheduled<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<M> Eq for Scheduled<M> {}
impl<M> PartialOrd for Scheduled<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for Scheduled<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EntryState {
    Scheduled,
    Backlogged,
    Running,
    Responded,
    Abandoned,
}

struct Sim<'a, P: Process> {
    cfg: &'a SimConfig,
    workload: &'a [WorkloadEntry],
    procs: Vec<P>,
    routers: Vec<FloodRouter>,
    next_seq: Vec<u64>,
    neighbors: Vec<Vec<ProcessId>>,
    crash_at: Vec<Option<Time>>,
    disconnect_at: BTreeMap<Channel, Time>,
    drift_permille: Vec<u32>,
    timer_generation: Vec<BTreeMap<&'static str, u64>>,
    queue: BinaryHeap<Reverse<Scheduled<P::Msg>>>,
    inserted: u64,
    rng: ChaCha8Rng,
    now: Time,
    processed: u64,
    entry_state: Vec<EntryState>,
    entry_record: Vec<Option<usize>>,
    busy: Vec<Option<usize>>,
    backlog: Vec<VecDeque<usize>>,
    outstanding: usize,
    drained_by: Option<DrainReason>,
    events: Vec<TraceEvent>,
    ops: Vec<OpRecord>,
    order: u64,
}

/// Runs one simulation to completion.
pub fn run<P, F>(config: &SimConfig, mut factory: F, workload: &[WorkloadEntry]) -> Result<Trace, SimError>
where
    P: Process,
    F: FnMut(ProcessId) -> P,
{
    config.validate(workload)?;
    let n = config.n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let drift_permille = processes(n)
        .map(|_| match config.timing {
            Timing::PartialSync { .. } => rng.random_range(1000..=config.max_drift_permille),
            Timing::Async => 1000,
        })
        .collect();
    let neighbors = processes(n)
        .map(|p| config.graph.edges.iter().filter(|c| c.from == p).map(|c| c.to).collect())
        .collect();
    let mut crash_at = vec![None; n];
    for c in &config.schedule.crashes {
        let slot: &mut Option<Time> = &mut crash_at[c.process.index()];
        *slot = Some(slot.map_or(c.at, |t: Time| t.min(c.at)));
    }
    let mut disconnect_at = BTreeMap::new();
    for d in &config.schedule.disconnects {
        let t = disconnect_at.entry(d.channel).or_insert(d.at);
        *t = (*t).min(d.at);
    }
    let awaited = |p: ProcessId| config.await_set.as_ref().is_none_or(|s| s.contains(&p));
    let mut sim = Sim {
        cfg: config,
        workload,
        procs: processes(n).map(&mut factory).collect(),
        routers: processes(n).map(FloodRouter::new).collect(),
        next_seq: vec![0; n],
        neighbors,
        crash_at,
        disconnect_at,
        drift_permille,
        timer_generation: vec![BTreeMap::new(); n],
        queue: BinaryHeap::new(),
        inserted: 0,
        rng,
        now: 0,
        processed: 0,
        entry_state: vec![EntryState::Scheduled; workload.len()],
        entry_record: vec![None; workload.len()],
        busy: vec![None; n],
        backlog: vec![VecDeque::new(); n],
        outstanding: workload.iter().filter(|w| awaited(w.process)).count(),
        drained_by: None,
        events: Vec::new(),
        ops: Vec::new(),
        order: 0,
    };
    sim.execute();
    let outcome = RunOutcome {
        exhausted: !sim.queue.is_empty(),
        drained_by: sim.drained_by,
        end_time: sim.now,
        events: sim.processed,
    };
    sim.log(EventKind::RunEnd, String::new(), serde_json::to_value(&outcome).expect("outcome serializes"), None, None);
    Ok(Trace { events: sim.events, history: History::new(sim.ops), outcome })
}

impl<P: Process> Sim<'_, P> {
    fn full(&self) -> bool {
        self.cfg.trace_level == TraceLevel::Full
    }

    fn log(&mut self, kind: EventKind, subject: String, payload: Value, op_id: Option<u64>, version: Option<Version>) {
        self.events.push(TraceEvent { time: self.now, kind, subject, payload, op_id, version });
    }

    fn schedule(&mut self, at: Time, event: Pending<P::Msg>) {
        let subject = match &event {
            Pending::Crash(p) | Pending::Start(p) | Pending::Tick(p) => p.0 as u64,
            Pending::Timer { p, .. } => p.0 as u64,
            Pending::Deliver { to, .. } => to.0 as u64,
            Pending::Disconnect(c) => ((c.from.0 as u64) << 32) | c.to.0 as u64,
            Pending::Invoke(i) => self.workload[*i].process.0 as u64,
        };
        let key = (at, event.rank(), subject, self.inserted);
        self.inserted += 1;
        self.queue.push(Reverse(Scheduled { key, event }));
    }

    fn alive(&self, p: ProcessId) -> bool {
        self.crash_at[p.index()].is_none_or(|t| self.now < t)
    }

    fn awaited(&self, p: ProcessId) -> bool {
        self.cfg.await_set.as_ref().is_none_or(|s| s.contains(&p))
    }

    fn execute(&mut self) {
        let mut label = json!({
            "n": self.cfg.n,
            "seed": self.cfg.seed,
            "timing": self.cfg.timing,
            "pattern": self.cfg.pattern,
        });
        if let (Value::Object(m), Value::Object(extra)) = (&mut label, &self.cfg.label) {
            m.extend(extra.clone());
        }
        self.log(EventKind::RunStart, String::new(), label, None, None);

        for c in self.cfg.schedule.crashes.clone() {
            self.schedule(c.at, Pending::Crash(c.process));
        }
        for d in self.cfg.schedule.disconnects.clone() {
            self.schedule(d.at, Pending::Disconnect(d.channel));
        }
        for p in processes(self.cfg.n) {
            self.schedule(0, Pending::Start(p));
            if self.procs[p.index()].uses_ticks() {
                self.schedule(self.cfg.tick_interval, Pending::Tick(p));
            }
        }
        for (i, w) in self.workload.iter().enumerate() {
            self.schedule(w.at, Pending::Invoke(i));
        }

        while let Some(Reverse(next)) = self.queue.peek() {
            if self.processed >= self.cfg.max_events {
                return;
            }
            let at = next.key.0;
            if self.drained_by.is_none() {
                if let Some(h) = self.cfg.horizon {
                    if at >= h {
                        self.drained_by = Some(DrainReason::Horizon);
                    }
                }
            }
            let Reverse(Scheduled { event, .. }) = self.queue.pop().expect("peeked");
            self.now = at;
            self.processed += 1;
            self.dispatch(event);
            if self.drained_by.is_none() && !self.workload.is_empty() && self.outstanding == 0 {
                self.drained_by = Some(DrainReason::Responded);
            }
        }
    }

    fn dispatch(&mut self, event: Pending<P::Msg>) {
        match event {
            Pending::Crash(p) => {
                if self.crash_at[p.index()] == Some(self.now) {
                    self.log(EventKind::Crash, p.to_string(), Value::Null, None, None);
                    self.abandon_all(p);
                }
            }
            Pending::Disconnect(c) => {
                if self.disconnect_at.get(&c) == Some(&self.now) {
                    self.log(EventKind::Disconnect, c.to_string(), Value::Null, None, None);
                }
            }
            Pending::Start(p) => {
                if self.alive(p) {
                    self.step(p, |proc, ctx| proc.on_start(ctx));
                }
            }
            Pending::Invoke(i) => self.arrive(i),
            Pending::Deliver { to, from, env } => self.deliver(to, from, env),
            Pending::Timer { p, name, generation } => {
                let current = self.timer_generation[p.index()].get(name).copied();
                if self.drained_by.is_some() || !self.alive(p) || current != Some(generation) {
                    return;
                }
                if self.full() {
                    self.log(EventKind::TimerExpiry, p.to_string(), json!({ "timer": name }), None, None);
                }
                self.step(p, |proc, ctx| proc.on_timer(name, ctx));
            }
            Pending::Tick(p) => {
                if self.drained_by.is_some() || !self.alive(p) {
                    return;
                }
                if self.full() {
                    self.log(EventKind::PeriodicTick, p.to_string(), Value::Null, None, None);
                }
                self.step(p, |proc, ctx| proc.on_tick(ctx));
                let next = self.now + self.cfg.tick_interval;
                self.schedule(next, Pending::Tick(p));
            }
        }
    }

    fn settle(&mut self, i: usize, state: EntryState) {
        let before = self.entry_state[i];
        self.entry_state[i] = state;
        let open = matches!(before, EntryState::Scheduled | EntryState::Backlogged | EntryState::Running);
        if open && self.awaited(self.workload[i].process) {
            self.outstanding -= 1;
        }
    }

    fn abandon_all(&mut self, p: ProcessId) {
        for i in 0..self.workload.len() {
            if self.workload[i].process == p
                && matches!(self.entry_state[i], EntryState::Scheduled | EntryState::Backlogged | EntryState::Running)
            {
                self.settle(i, EntryState::Abandoned);
            }
        }
        self.backlog[p.index()].clear();
    }

    fn arrive(&mut self, i: usize) {
        let p = self.workload[i].process;
        if self.entry_state[i] != EntryState::Scheduled {
            return;
        }
        if !self.alive(p) || self.drained_by == Some(DrainReason::Horizon) {
            self.settle(i, EntryState::Abandoned);
            return;
        }
        if self.busy[p.index()].is_some() {
            self.entry_state[i] = EntryState::Backlogged;
            self.backlog[p.index()].push_back(i);
        } else {
            self.invoke(i);
        }
    }

    fn invoke(&mut self, i: usize) {
        let entry = &self.workload[i];
        let (p, op) = (entry.process, entry.op.clone());
        self.entry_state[i] = EntryState::Running;
        self.busy[p.index()] = Some(i);
        self.entry_record[i] = Some(self.ops.len());
        self.ops.push(OpRecord {
            id: OpId(i as u64),
            process: p,
            op: op.clone(),
            invoke_time: self.now,
            invoke_order: self.order,
            completion: None,
            version: None,
        });
        self.order += 1;
        let payload = serde_json::to_value(&op).expect("operations serialize");
        self.log(EventKind::OpInvoke, p.to_string(), payload, Some(i as u64), None);
        self.step(p, |proc, ctx| proc.on_invoke(OpId(i as u64), &op, ctx));
    }

    fn deliver(&mut self, to: ProcessId, from: ProcessId, env: Rc<Envelope<P::Msg>>) {
        if !self.alive(to) {
            if self.full() {
                let payload = json!({ "from": from, "id": env.id, "reason": "crashed" });
                self.log(EventKind::Drop, to.to_string(), payload, None, None);
            }
            return;
        }
        if from == to {
            // Local delivery of an envelope this process originated.
            if self.full() {
                self.log(EventKind::Deliver, to.to_string(), json!({ "from": from, "id": env.id }), None, None);
            }
            let msg = env.payload.clone();
            self.step(to, |proc, ctx| proc.on_message(env.id.origin, msg, ctx));
            return;
        }
        let receipt = self.routers[to.index()].receive(&env, &self.neighbors[to.index()]);
        if self.full() {
            let payload = json!({ "from": from, "id": env.id, "fresh": receipt.is_some() });
            self.log(EventKind::Deliver, to.to_string(), payload, None, None);
        }
        let Some(receipt) = receipt else {
            return;
        };
        if !receipt.forward_to.is_empty() {
            let fwd = Rc::new(Envelope { id: env.id, dest: env.dest, hops: receipt.hops, payload: env.payload.clone() });
            for q in receipt.forward_to {
                self.transmit(to, q, fwd.clone());
            }
        }
        if receipt.deliver {
            let msg = env.payload.clone();
            self.step(to, |proc, ctx| proc.on_message(env.id.origin, msg, ctx));
        }
    }

    fn transmit(&mut self, from: ProcessId, to: ProcessId, env: Rc<Envelope<P::Msg>>) {
        let channel = Channel::new(from, to);
        if let Some(&t) = self.disconnect_at.get(&channel) {
            if t <= self.now {
                if self.full() {
                    let payload = json!({ "to": to, "id": env.id, "reason": "disconnected" });
                    self.log(EventKind::Drop, channel.to_string(), payload, None, None);
                }
                return;
            }
        }
        let delay = self.draw_delay();
        if self.full() {
            let payload = json!({
                "id": env.id,
                "dest": env.dest,
                "hops": env.hops.members().collect::<Vec<_>>(),
                "arrives": self.now + delay,
                "msg": env.payload,
            });
            self.log(EventKind::Send, channel.to_string(), payload, None, None);
        }
        self.schedule(self.now + delay, Pending::Deliver { to, from, env });
    }

    fn draw_delay(&mut self) -> Time {
        let post_gst = match self.cfg.timing {
            Timing::PartialSync { gst, delta } if self.now >= gst => Some(delta),
            _ => None,
        };
        match (post_gst, self.cfg.delay) {
            (Some(delta), DelayModel::Pinned) => delta,
            (Some(delta), DelayModel::Random) => self.rng.random_range(1..=delta),
            (None, DelayModel::Pinned) => self.cfg.mean_delay,
            (None, DelayModel::Random) => {
                let u: f64 = self.rng.random();
                let mean = self.cfg.mean_delay as f64;
                let mut d = 1 + (-(1.0 - u).ln() * (mean - 1.0).max(0.5)).floor() as Time;
                if self.cfg.adversarial && self.rng.random_ratio(1, 8) {
                    d *= 10;
                }
                d
            }
        }
    }

    fn timer_duration(&self, p: ProcessId, duration: Time) -> Time {
        match self.cfg.timing {
            Timing::PartialSync { gst, .. } if self.now < gst => {
                let drift = self.drift_permille[p.index()] as u128;
                (duration as u128 * drift).div_ceil(1000) as Time
            }
            _ => duration,
        }
    }

    /// Runs one handler and applies its effects.
    fn step(&mut self, p: ProcessId, handler: impl FnOnce(&mut P, &mut Context<P::Msg>)) {
        let mut ctx = Context::new(p, self.now, self.cfg.n, self.full());
        handler(&mut self.procs[p.index()], &mut ctx);
        self.apply(p, ctx);
    }

    fn apply(&mut self, p: ProcessId, ctx: Context<P::Msg>) {
        let Context { sends, timers, responses, versions, records, .. } = ctx;
        for payload in records {
            self.log(EventKind::Note, p.to_string(), payload, None, None);
        }
        for (dest, payload) in sends {
            let seq = self.next_seq[p.index()];
            self.next_seq[p.index()] += 1;
            let id = EnvelopeId { origin: p, seq };
            self.routers[p.index()].originate(id);
            let env = Rc::new(Envelope { id, dest, hops: HopSet::single(p), payload });
            if dest.includes(p) {
                self.schedule(self.now, Pending::Deliver { to: p, from: p, env: env.clone() });
            }
            if dest != Destination::To(p) {
                for q in flood_forward(p, env.hops, &self.neighbors[p.index()].clone()) {
                    self.transmit(p, q, env.clone());
                }
            }
        }
        for (name, duration) in timers {
            let generation = {
                let g = self.timer_generation[p.index()].entry(name).or_insert(0);
                *g += 1;
                *g
            };
            let at = self.now + self.timer_duration(p, duration);
            self.schedule(at, Pending::Timer { p, name, generation });
        }
        for (op, version) in versions {
            if let Some(r) = self.entry_record.get(op.0 as usize).copied().flatten() {
                self.ops[r].version = Some(version);
                self.log(EventKind::OpVersion, p.to_string(), Value::Null, Some(op.0), Some(version));
            }
        }
        let mut next = None;
        for (op, response) in responses {
            let i = op.0 as usize;
            if self.busy[p.index()] != Some(i) {
                continue;
            }
            let r = self.entry_record[i].expect("running operation has a record");
            self.ops[r].completion = Some(Completion { time: self.now, order: self.order, response: response.clone() });
            self.order += 1;
            let version = self.ops[r].version;
            let payload = serde_json::to_value(&response).expect("responses serialize");
            self.log(EventKind::OpResponse, p.to_string(), payload, Some(op.0), version);
            self.busy[p.index()] = None;
            self.settle(i, EntryState::Responded);
            next = self.backlog[p.index()].pop_front();
        }
        if let Some(i) = next {
            self.invoke(i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Echo automaton: broadcasts on `Write`, answers `Read` with the number
    /// of messages received so far, and logs timers.
    #[derive(Default)]
    struct Echo {
        received: Vec<(ProcessId, i64)>,
        pending_read: Option<OpId>,
    }

    impl Process for Echo {
        type Msg = i64;

        fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<i64>) {
            match operation {
                Operation::Write { value } => {
                    ctx.broadcast(*value);
                    ctx.respond(op, Response::Ack);
                }
                Operation::Read => {
                    if self.received.is_empty() {
                        self.pending_read = Some(op);
                    } else {
                        ctx.respond(op, Response::Value { value: self.received.len() as i64 });
                    }
                }
                _ => unreachable!(),
            }
        }

        fn on_message(&mut self, origin: ProcessId, msg: i64, ctx: &mut Context<i64>) {
            self.received.push((origin, msg));
            if let Some(op) = self.pending_read.take() {
                ctx.respond(op, Response::Value { value: self.received.len() as i64 });
            }
        }

        fn on_timer(&mut self, name: &'static str, ctx: &mut Context<i64>) {
            ctx.record(json!({ "event": "timer", "name": name }));
        }
    }

    fn entry(at: Time, p: u32, op: Operation) -> WorkloadEntry {
        WorkloadEntry { at, process: ProcessId(p), op }
    }

    fn deliveries_to(trace: &Trace, p: u32) -> usize {
        trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Deliver && e.subject == format!("p{p}"))
            .count()
    }

    #[test]
    fn single_process_runs_sequentially() {
        let cfg = SimConfig::new(1, Timing::Async, 1);
        let wl = [entry(0, 1, Operation::Write { value: 5 }), entry(0, 1, Operation::Read)];
        let trace = run(&cfg, |_| Echo::default(), &wl).unwrap();
        assert_eq!(trace.history.len(), 2);
        assert!(trace.history.ops[0].precedes(&trace.history.ops[1]));
        assert_eq!(trace.history.ops[1].response(), Some(&Response::Value { value: 1 }));
        assert!(!trace.outcome.exhausted);
        assert_eq!(trace.outcome.drained_by, Some(DrainReason::Responded));
    }

    #[test]
    fn flooding_crosses_a_line_in_two_hops() {
        let mut cfg = SimConfig::new(3, Timing::Async, 7);
        let edges = [Channel::new(ProcessId(1), ProcessId(2)), Channel::new(ProcessId(2), ProcessId(3))];
        cfg.graph = NetworkGraph::from_parts(processes(3).collect(), edges.into_iter().collect());
        cfg.delay = DelayModel::Pinned;
        cfg.mean_delay = 3;
        let wl = [entry(0, 1, Operation::Write { value: 9 }), entry(0, 3, Operation::Read)];
        let trace = run(&cfg, |_| Echo::default(), &wl).unwrap();
        let read = &trace.history.ops[1];
        assert_eq!(read.response(), Some(&Response::Value { value: 1 }));
        assert_eq!(read.completion.as_ref().unwrap().time, 6);
    }

    #[test]
    fn router_drops_duplicates_and_skips_hops() {
        let me = ProcessId(2);
        let mut router = FloodRouter::new(me);
        let env = Envelope {
            id: EnvelopeId { origin: ProcessId(1), seq: 0 },
            dest: Destination::All,
            hops: HopSet::single(ProcessId(1)).with(ProcessId(3)),
            payload: (),
        };
        let neighbors: Vec<_> = processes(4).collect();
        let receipt = router.receive(&env, &neighbors).unwrap();
        assert!(receipt.deliver);
        assert_eq!(receipt.forward_to, vec![ProcessId(4)]);
        assert!(receipt.hops.contains(me));
        assert!(router.receive(&env, &neighbors).is_none());
    }

    #[test]
    fn unicast_is_delivered_only_at_its_destination() {
        let mut router = FloodRouter::new(ProcessId(2));
        let env = Envelope {
            id: EnvelopeId { origin: ProcessId(1), seq: 3 },
            dest: Destination::To(ProcessId(3)),
            hops: HopSet::single(ProcessId(1)),
            payload: (),
        };
        let neighbors: Vec<_> = processes(3).collect();
        let receipt = router.receive(&env, &neighbors).unwrap();
        assert!(!receipt.deliver);
        assert_eq!(receipt.forward_to, vec![ProcessId(3)]);
    }

    #[test]
    fn disconnected_channel_drops_and_flooding_routes_around() {
        let pattern = FailurePattern::new([], [Channel::new(ProcessId(1), ProcessId(3))]).unwrap();
        let mut cfg = SimConfig::new(3, Timing::Async, 3).with_pattern_at_start(pattern);
        cfg.delay = DelayModel::Pinned;
        let wl = [entry(0, 1, Operation::Write { value: 1 }), entry(0, 3, Operation::Read)];
        let trace = run(&cfg, |_| Echo::default(), &wl).unwrap();
        assert!(trace.events.iter().any(|e| e.kind == EventKind::Drop && e.subject == "p1->p3"));
        // Reaches p3 through p2 only.
        assert_eq!(trace.history.ops[1].completion.as_ref().unwrap().time, 8);
        assert_eq!(deliveries_to(&trace, 3), 1);
    }

    #[test]
    fn schedule_must_follow_pattern() {
        let mut cfg = SimConfig::new(2, Timing::Async, 0);
        cfg.schedule.crashes.push(CrashAt { process: ProcessId(1), at: 3 });
        assert_eq!(run(&cfg, |_| Echo::default(), &[]).unwrap_err(), SimError::CrashOutsidePattern(ProcessId(1)));
        cfg.schedule = FailureSchedule::default();
        cfg.timing = Timing::PartialSync { gst: 0, delta: 0 };
        assert_eq!(run(&cfg, |_| Echo::default(), &[]).unwrap_err(), SimError::ZeroDelta);
    }

    #[test]
    fn post_gst_delivery_within_delta() {
        let mut cfg = SimConfig::new(4, Timing::PartialSync { gst: 10, delta: 3 }, 11);
        cfg.mean_delay = 20;
        let wl: Vec<_> = (0..20).map(|i| entry(i * 2, (i % 4) as u32 + 1, Operation::Write { value: i as i64 })).collect();
        let trace = run(&cfg, |_| Echo::default(), &wl).unwrap();
        for e in trace.events.iter().filter(|e| e.kind == EventKind::Send) {
            let arrives = e.payload["arrives"].as_u64().unwrap();
            if e.time >= 10 {
                assert!(arrives <= e.time + 3 && arrives > e.time);
            }
        }
    }

    /// Starts one timer on start and, optionally, restarts it.
    struct Timed {
        duration: Time,
        restart_at_start: bool,
    }

    impl Process for Timed {
        type Msg = ();
        fn on_start(&mut self, ctx: &mut Context<()>) {
            ctx.start_timer("t", self.duration);
            if self.restart_at_start {
                ctx.start_timer("t", self.duration * 2);
            }
        }
        fn on_invoke(&mut self, _: OpId, _: &Operation, _: &mut Context<()>) {}
        fn on_message(&mut self, _: ProcessId, _: (), _: &mut Context<()>) {}
        fn on_timer(&mut self, name: &'static str, ctx: &mut Context<()>) {
            ctx.record(json!({ "event": "timer", "name": name }));
        }
    }

    fn timer_times(trace: &Trace) -> Vec<Time> {
        trace.records("timer").map(|(t, _, _)| t).collect()
    }

    #[test]
    fn timers_fire_restart_and_stop_at_crash() {
        let cfg = SimConfig::new(1, Timing::PartialSync { gst: 0, delta: 1 }, 0);
        let fire = |cfg: &SimConfig, restart| {
            run(cfg, |_| Timed { duration: 5, restart_at_start: restart }, &[]).unwrap()
        };
        assert_eq!(timer_times(&fire(&cfg, false)), vec![5]);
        assert_eq!(timer_times(&fire(&cfg, true)), vec![10]);

        let pattern = FailurePattern::new([ProcessId(1)], []).unwrap();
        let mut crashed = cfg.clone();
        crashed.pattern = pattern;
        crashed.schedule.crashes.push(CrashAt { process: ProcessId(1), at: 3 });
        assert!(timer_times(&fire(&crashed, false)).is_empty());
    }

    #[test]
    fn pre_gst_timers_are_stretched_by_drift() {
        let cfg = SimConfig::new(1, Timing::PartialSync { gst: 1000, delta: 1 }, 5);
        let trace = run(&cfg, |_| Timed { duration: 10, restart_at_start: false }, &[]).unwrap();
        let drift = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            rng.random_range(1000..=cfg.max_drift_permille) as u64
        };
        assert_eq!(timer_times(&trace), vec![(10 * drift).div_ceil(1000)]);
        assert!(timer_times(&trace)[0] >= 10);
    }

    #[test]
    fn identical_configs_give_identical_traces() {
        let mut cfg = SimConfig::new(4, Timing::Async, 42);
        cfg.adversarial = true;
        let wl: Vec<_> = (0..12).map(|i| entry(i, (i % 4) as u32 + 1, Operation::Write { value: i as i64 })).collect();
        let a = run(&cfg, |_| Echo::default(), &wl).unwrap().to_jsonl();
        let b = run(&cfg, |_| Echo::default(), &wl).unwrap().to_jsonl();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(a, run(&cfg, |_| Echo::default(), &wl).unwrap().to_jsonl());
    }

    #[test]
    fn every_send_on_a_correct_channel_arrives() {
        let pattern = FailurePattern::new([ProcessId(4)], [Channel::new(ProcessId(1), ProcessId(2))]).unwrap();
        let mut cfg = SimConfig::new(4, Timing::Async, 9).with_pattern_at_start(pattern);
        cfg.schedule.crashes[0].at = 6;
        cfg.adversarial = true;
        let wl: Vec<_> = (0..12).map(|i| entry(i, (i % 3) as u32 + 1, Operation::Write { value: i as i64 })).collect();
        let trace = run(&cfg, |_| Echo::default(), &wl).unwrap();
        assert!(!trace.outcome.exhausted);
        let sends: Vec<_> = trace.events.iter().filter(|e| e.kind == EventKind::Send).collect();
        assert!(!sends.is_empty());
        for s in sends {
            let (from, to) = s.subject.split_once("->").unwrap();
            let arrived = trace.events.iter().any(|d| {
                matches!(d.kind, EventKind::Deliver | EventKind::Drop)
                    && d.subject == to
                    && d.payload["id"] == s.payload["id"]
                    && d.payload["from"].as_u64() == parse_process(from).map(|p| p.0 as u64)
            });
            assert!(arrived, "send {s:?} never arrived");
            assert_ne!(s.subject, "p1->p2");
        }
    }

    #[test]
    fn history_round_trips_through_jsonl() {
        let cfg = SimConfig::new(3, Timing::Async, 8);
        let wl = [entry(0, 1, Operation::Write { value: 2 }), entry(1, 2, Operation::Read), entry(1, 3, Operation::Read)];
        let trace = run(&cfg, |_| Echo::default(), &wl).unwrap();
        let parsed = parse_jsonl(&trace.to_jsonl()).unwrap();
        assert_eq!(parsed.history, trace.history);
        assert_eq!(parsed.outcome, Some(trace.outcome.clone()));
        assert!(!parsed.partial_tail);

        let text = trace.to_jsonl();
        let cut = parse_jsonl(&text[..text.len() - 20]).unwrap();
        assert!(cut.partial_tail);
        assert_eq!(cut.outcome, None);
        let mut broken = text.clone();
        broken.insert_str(0, "{not json\n");
        assert!(matches!(parse_jsonl(&broken), Err(TraceError::Json { line: 1, .. })));
    }

    #[test]
    fn empty_workload_with_horizon_stops_cleanly() {
        struct Ticker(u64);
        impl Process for Ticker {
            type Msg = u64;
            fn on_invoke(&mut self, _: OpId, _: &Operation, _: &mut Context<u64>) {}
            fn on_message(&mut self, _: ProcessId, _: u64, _: &mut Context<u64>) {}
            fn on_tick(&mut self, ctx: &mut Context<u64>) {
                self.0 += 1;
                ctx.broadcast(self.0);
            }
            fn uses_ticks(&self) -> bool {
                true
            }
        }
        let mut cfg = SimConfig::new(3, Timing::Async, 1);
        cfg.horizon = Some(50);
        let trace = run(&cfg, |_| Ticker(0), &[]).unwrap();
        assert!(!trace.outcome.exhausted);
        assert_eq!(trace.outcome.drained_by, Some(DrainReason::Horizon));
        assert!(trace.events.iter().filter(|e| e.kind == EventKind::PeriodicTick).all(|e| e.time < 50));
    }
}
