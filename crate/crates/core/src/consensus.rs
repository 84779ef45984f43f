//! Partially synchronous single-decree consensus with rotating leaders.
//!
//! Processes move through views on a timer whose duration grows linearly
//! with the view number. On entering a view a process reports its accepted
//! value to the view's leader (1B). Once the leader hears from a read
//! quorum it proposes (2A) the value accepted in the highest view, or its
//! own input. Acceptors echo the proposal to everyone (2B), and a process
//! decides when a write quorum has echoed the same value in its view.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::history::{OpId, Operation, Response};
use crate::model::ProcessId;
use crate::qaf::{mask_members, Mask, Quorums};
use crate::sim::{Context, Outbox, Process, Time, Trace};

pub type View = u64;

pub const VIEW_TIMER: &str = "view_timer";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("views start at 1")]
    ViewZero,
    #[error("this process already proposed")]
    AlreadyProposed,
}

/// Leader of `view`: processes take turns in id order.
pub fn leader(view: View, n: usize) -> Result<ProcessId, ConsensusError> {
    if view == 0 {
        return Err(ConsensusError::ViewZero);
    }
    Ok(ProcessId(((view - 1) % n as u64) as u32 + 1))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ConsensusMessage {
    #[serde(rename = "1B")]
    OneB { view: View, aview: View, val: Option<i64> },
    #[serde(rename = "2A")]
    TwoA { view: View, value: i64 },
    #[serde(rename = "2B")]
    TwoB { view: View, value: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Enter,
    Propose,
    Accept,
    Decide,
}

/// Per-process consensus state. Messages for views above the current one
/// are kept until the process gets there; lower views are discarded.
#[derive(Clone, Debug)]
pub struct ConsensusCore {
    me: ProcessId,
    n: usize,
    quorums: Arc<Quorums>,
    view_constant: Time,
    view: View,
    aview: View,
    val: Option<i64>,
    my_val: Option<i64>,
    phase: Phase,
    one_b: BTreeMap<View, BTreeMap<ProcessId, (View, Option<i64>)>>,
    two_a: BTreeMap<View, i64>,
    two_b: BTreeMap<View, BTreeMap<i64, Mask>>,
}

impl ConsensusCore {
    pub fn new(me: ProcessId, n: usize, quorums: Arc<Quorums>, view_constant: Time) -> Self {
        ConsensusCore {
            me,
            n,
            quorums,
            view_constant,
            view: 0,
            aview: 0,
            val: None,
            my_val: None,
            phase: Phase::Enter,
            one_b: BTreeMap::new(),
            two_a: BTreeMap::new(),
            two_b: BTreeMap::new(),
        }
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn aview(&self) -> View {
        self.aview
    }

    pub fn val(&self) -> Option<i64> {
        self.val
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn my_val(&self) -> Option<i64> {
        self.my_val
    }

    fn leads_current_view(&self) -> bool {
        self.view > 0 && leader(self.view, self.n).ok() == Some(self.me)
    }

    /// Moves to the next view and returns the timer duration for it.
    /// Returns the decided value if buffered messages complete a decision.
    pub fn enter_next_view(&mut self, out: &mut Outbox<ConsensusMessage>) -> (Time, Option<i64>) {
        self.view += 1;
        let view = self.view;
        self.one_b = self.one_b.split_off(&view);
        self.two_a = self.two_a.split_off(&view);
        self.two_b = self.two_b.split_off(&view);
        let to = leader(view, self.n).expect("view is positive");
        out.to(to, ConsensusMessage::OneB { view, aview: self.aview, val: self.val });
        self.phase = Phase::Enter;
        let decided = self.replay_buffered(out);
        (view * self.view_constant, decided)
    }

    fn replay_buffered(&mut self, out: &mut Outbox<ConsensusMessage>) -> Option<i64> {
        if let Some(&value) = self.two_a.get(&self.view) {
            self.accept(value, out);
        }
        if self.leads_current_view() {
            self.try_propose(out);
        }
        self.try_decide()
    }

    /// Records the caller's input. Returns the decision if already known.
    pub fn propose(&mut self, x: i64, out: &mut Outbox<ConsensusMessage>) -> Result<Option<i64>, ConsensusError> {
        if self.my_val.is_some() {
            return Err(ConsensusError::AlreadyProposed);
        }
        self.my_val = Some(x);
        if self.phase == Phase::Decide {
            return Ok(self.val);
        }
        if self.leads_current_view() {
            self.try_propose(out);
        }
        Ok(None)
    }

    /// Handles one message; returns the value if this step decided.
    pub fn handle(&mut self, from: ProcessId, msg: ConsensusMessage, out: &mut Outbox<ConsensusMessage>) -> Option<i64> {
        match msg {
            ConsensusMessage::OneB { view, aview, val } => {
                if view < self.view {
                    return None;
                }
                self.one_b.entry(view).or_default().insert(from, (aview, val));
                if view == self.view && self.leads_current_view() {
                    self.try_propose(out);
                }
                None
            }
            ConsensusMessage::TwoA { view, value } => {
                if view > self.view {
                    self.two_a.insert(view, value);
                } else if view == self.view {
                    self.accept(value, out);
                }
                None
            }
            ConsensusMessage::TwoB { view, value } => {
                if view < self.view {
                    return None;
                }
                *self.two_b.entry(view).or_default().entry(value).or_default() |= 1 << from.index();
                if view == self.view {
                    self.try_decide()
                } else {
                    None
                }
            }
        }
    }

    fn try_propose(&mut self, out: &mut Outbox<ConsensusMessage>) {
        if self.phase != Phase::Enter {
            return;
        }
        let Some(reports) = self.one_b.get(&self.view) else { return };
        let heard = reports.keys().fold(0, |m, p| m | (1 << p.index()));
        let Some(r) = self.quorums.read_within(heard) else { return };
        let newest = mask_members(r)
            .filter_map(|p| {
                let (aview, val) = reports[&p];
                val.map(|v| (aview, v))
            })
            .max_by_key(|(aview, _)| *aview);
        let value = match (newest, self.my_val) {
            (Some((_, v)), _) => v,
            (None, Some(mine)) => mine,
            (None, None) => return,
        };
        out.to_all(ConsensusMessage::TwoA { view: self.view, value });
        self.phase = Phase::Propose;
    }

    fn accept(&mut self, value: i64, out: &mut Outbox<ConsensusMessage>) {
        if !matches!(self.phase, Phase::Enter | Phase::Propose) {
            return;
        }
        self.val = Some(value);
        self.aview = self.view;
        out.to_all(ConsensusMessage::TwoB { view: self.view, value });
        self.phase = Phase::Accept;
    }

    fn try_decide(&mut self) -> Option<i64> {
        if self.phase == Phase::Decide {
            return None;
        }
        let echoes = self.two_b.get(&self.view)?;
        let (&value, _) = echoes.iter().find(|(_, &mask)| self.quorums.write_within(mask).is_some())?;
        self.val = Some(value);
        self.aview = self.view;
        self.phase = Phase::Decide;
        Some(value)
    }
}

pub struct ConsensusProcess {
    core: ConsensusCore,
    pending: Option<OpId>,
}

impl ConsensusProcess {
    pub fn new(me: ProcessId, n: usize, quorums: Arc<Quorums>, view_constant: Time) -> Self {
        ConsensusProcess { core: ConsensusCore::new(me, n, quorums, view_constant), pending: None }
    }

    pub fn core(&self) -> &ConsensusCore {
        &self.core
    }

    fn next_view(&mut self, ctx: &mut Context<ConsensusMessage>) {
        let mut out = Outbox::new();
        let (duration, decided) = self.core.enter_next_view(&mut out);
        ctx.start_timer(VIEW_TIMER, duration);
        ctx.record(json!({ "event": "view", "view": self.core.view() }));
        ctx.send_outbox(out, |m| m);
        self.decided(decided, ctx);
    }

    fn decided(&mut self, value: Option<i64>, ctx: &mut Context<ConsensusMessage>) {
        let Some(value) = value else { return };
        ctx.record(json!({ "event": "decide", "view": self.core.view(), "value": value }));
        if let Some(op) = self.pending.take() {
            ctx.respond(op, Response::Decided { value });
        }
    }
}

impl Process for ConsensusProcess {
    type Msg = ConsensusMessage;

    fn on_start(&mut self, ctx: &mut Context<ConsensusMessage>) {
        self.next_view(ctx);
    }

    fn on_timer(&mut self, name: &'static str, ctx: &mut Context<ConsensusMessage>) {
        if name == VIEW_TIMER {
            self.next_view(ctx);
        }
    }

    fn on_invoke(&mut self, op: OpId, operation: &Operation, ctx: &mut Context<ConsensusMessage>) {
        let Operation::Propose { value } = operation else {
            ctx.record(json!({ "event": "unsupported-operation", "op": operation }));
            return;
        };
        let mut out = Outbox::new();
        match self.core.propose(*value, &mut out) {
            Ok(Some(decided)) => ctx.respond(op, Response::Decided { value: decided }),
            Ok(None) => self.pending = Some(op),
            Err(e) => ctx.record(json!({ "event": "protocol-error", "error": e.to_string() })),
        }
        ctx.send_outbox(out, |m| m);
    }

    fn on_message(&mut self, origin: ProcessId, msg: ConsensusMessage, ctx: &mut Context<ConsensusMessage>) {
        let mut out = Outbox::new();
        let decided = self.core.handle(origin, msg, &mut out);
        ctx.send_outbox(out, |m| m);
        self.decided(decided, ctx);
    }
}

/// Times at which each process entered each view, from a trace's view
/// records.
pub fn view_entries(trace: &Trace) -> BTreeMap<ProcessId, BTreeMap<View, Time>> {
    let mut out: BTreeMap<ProcessId, BTreeMap<View, Time>> = BTreeMap::new();
    for (time, p, payload) in trace.records("view") {
        if let Some(v) = payload.get("view").and_then(|v| v.as_u64()) {
            out.entry(p).or_default().insert(v, time);
        }
    }
    out
}

/// Length of the common part of the processes' stays in `view`, or `None`
/// if some process has not both entered and left it.
pub fn overlap_in_view(entries: &BTreeMap<ProcessId, BTreeMap<View, Time>>, view: View) -> Option<i64> {
    let mut latest_start = 0i64;
    let mut earliest_end = i64::MAX;
    for views in entries.values() {
        latest_start = latest_start.max(*views.get(&view)? as i64);
        earliest_end = earliest_end.min(*views.get(&(view + 1))? as i64);
    }
    Some(earliest_end - latest_start)
}

/// First view from which every later view gives all processes a common
/// stay of at least `min_overlap`.
///
/// Once a process enters a view at or after `gst`, its timers run exactly,
/// so its entry into view `v` is `base + C·v(v-1)/2` for a per-process
/// constant `base`. The overlap in `v` is then `C·v - (max base - min base)`.
pub fn synchronized_view(
    entries: &BTreeMap<ProcessId, BTreeMap<View, Time>>,
    gst: Time,
    view_constant: Time,
    min_overlap: Time,
) -> Option<View> {
    let c = view_constant as i128;
    let mut first_views = Vec::new();
    let mut bases = Vec::new();
    for views in entries.values() {
        let (&v, &t) = views.iter().find(|(_, &t)| t >= gst)?;
        first_views.push(v);
        bases.push(t as i128 - c * (v as i128) * (v as i128 - 1) / 2);
    }
    let spread = bases.iter().max()? - bases.iter().min()?;
    let needed = (min_overlap as i128 + spread + c - 1) / c;
    Some((*first_views.iter().max()?).max(needed.max(1) as View))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Destination;

    fn core(me: u32, n: usize) -> ConsensusCore {
        ConsensusCore::new(ProcessId(me), n, Arc::new(Quorums::everyone(n)), 10)
    }

    #[test]
    fn leaders_rotate() {
        assert_eq!(leader(1, 4), Ok(ProcessId(1)));
        assert_eq!(leader(4, 4), Ok(ProcessId(4)));
        assert_eq!(leader(5, 4), Ok(ProcessId(1)));
        assert_eq!(leader(0, 4), Err(ConsensusError::ViewZero));
    }

    #[test]
    fn entering_views_grows_timer_and_reports_to_leader() {
        let mut c = core(2, 4);
        let mut out = Outbox::new();
        assert_eq!(c.enter_next_view(&mut out).0, 10);
        assert_eq!(
            out.messages(),
            &[(Destination::To(ProcessId(1)), ConsensusMessage::OneB { view: 1, aview: 0, val: None })]
        );
        c.enter_next_view(&mut out);
        c.enter_next_view(&mut out);
        assert_eq!(c.enter_next_view(&mut out).0, 40);
        assert_eq!(c.phase(), Phase::Enter);
    }

    #[test]
    fn leader_without_values_waits_for_its_input() {
        let mut c = core(1, 2);
        let mut out = Outbox::new();
        c.enter_next_view(&mut out);
        out.drain();
        c.handle(ProcessId(1), ConsensusMessage::OneB { view: 1, aview: 0, val: None }, &mut out);
        c.handle(ProcessId(2), ConsensusMessage::OneB { view: 1, aview: 0, val: None }, &mut out);
        assert!(out.is_empty());
        assert_eq!(c.phase(), Phase::Enter);
        c.propose(5, &mut out).unwrap();
        assert_eq!(out.messages(), &[(Destination::All, ConsensusMessage::TwoA { view: 1, value: 5 })]);
        assert_eq!(c.phase(), Phase::Propose);
    }

    #[test]
    fn leader_picks_value_of_highest_accepted_view() {
        let mut c = core(1, 3);
        let mut out = Outbox::new();
        for _ in 0..4 {
            c.enter_next_view(&mut out);
        }
        out.drain();
        c.propose(1, &mut out).unwrap();
        c.handle(ProcessId(1), ConsensusMessage::OneB { view: 4, aview: 0, val: None }, &mut out);
        c.handle(ProcessId(2), ConsensusMessage::OneB { view: 4, aview: 2, val: Some(7) }, &mut out);
        c.handle(ProcessId(3), ConsensusMessage::OneB { view: 4, aview: 3, val: Some(9) }, &mut out);
        assert_eq!(out.messages(), &[(Destination::All, ConsensusMessage::TwoA { view: 4, value: 9 })]);
    }

    #[test]
    fn write_quorum_of_echoes_decides() {
        let mut c = core(2, 2);
        let mut out = Outbox::new();
        c.enter_next_view(&mut out);
        c.handle(ProcessId(1), ConsensusMessage::TwoA { view: 1, value: 3 }, &mut out);
        assert_eq!(c.phase(), Phase::Accept);
        assert_eq!(c.handle(ProcessId(1), ConsensusMessage::TwoB { view: 1, value: 3 }, &mut out), None);
        assert_eq!(c.handle(ProcessId(2), ConsensusMessage::TwoB { view: 1, value: 3 }, &mut out), Some(3));
        assert_eq!((c.phase(), c.val(), c.aview()), (Phase::Decide, Some(3), 1));
    }

    #[test]
    fn stale_messages_are_ignored_and_future_ones_kept() {
        let mut c = core(2, 2);
        let mut out = Outbox::new();
        c.enter_next_view(&mut out);
        c.enter_next_view(&mut out);
        c.handle(ProcessId(1), ConsensusMessage::TwoA { view: 1, value: 3 }, &mut out);
        assert_eq!(c.val(), None);
        c.handle(ProcessId(1), ConsensusMessage::TwoA { view: 3, value: 4 }, &mut out);
        assert_eq!(c.val(), None);
        c.enter_next_view(&mut out);
        assert_eq!((c.val(), c.aview(), c.phase()), (Some(4), 3, Phase::Accept));
    }

    #[test]
    fn synchronized_view_from_closed_form_timelines() {
        // Two processes, C = 10: bases 0 and 7 (spread 7).
        let c = 10;
        let timeline = |base: u64| (1..40u64).map(|v| (v, base + c * v * (v - 1) / 2)).collect::<BTreeMap<_, _>>();
        let entries = BTreeMap::from([(ProcessId(1), timeline(0)), (ProcessId(2), timeline(7))]);
        assert_eq!(overlap_in_view(&entries, 3), Some(30 - 7));
        let v = synchronized_view(&entries, 0, c, 50).unwrap();
        assert_eq!(v, 6);
        assert!(overlap_in_view(&entries, v).unwrap() >= 50);
        assert!(overlap_in_view(&entries, v - 1).unwrap() < 50);
    }

    mod simulated {
        use super::*;
        use crate::fixtures::{four_process_reads, four_process_system, four_process_writes};
        use crate::qaf::shared_quorums;
        use crate::sim::{run, DelayModel, SimConfig, Timing, WorkloadEntry};

        fn propose(at: u64, who: u32, value: i64) -> WorkloadEntry {
            WorkloadEntry { at, process: ProcessId(who), op: Operation::Propose { value } }
        }

        #[test]
        fn single_process_decides_its_input() {
            let cfg = SimConfig::new(1, Timing::PartialSync { gst: 0, delta: 1 }, 0);
            let q = Arc::new(Quorums::everyone(1));
            let trace = run(&cfg, |me| ConsensusProcess::new(me, 1, q.clone(), 10), &[propose(0, 1, 42)]).unwrap();
            assert_eq!(trace.history.ops[0].response(), Some(&Response::Decided { value: 42 }));
        }

        #[test]
        fn termination_component_decides_under_first_pattern() {
            let system = four_process_system();
            let q = shared_quorums(&four_process_reads(), &four_process_writes());
            let mut cfg = SimConfig::new(4, Timing::PartialSync { gst: 0, delta: 2 }, 3)
                .with_pattern_at_start(system.patterns()[0].clone());
            cfg.delay = DelayModel::Pinned;
            cfg.await_set = Some([ProcessId(1), ProcessId(2)].into());
            let wl = [propose(0, 1, 10), propose(0, 2, 20), propose(0, 3, 30)];
            let trace = run(&cfg, |me| ConsensusProcess::new(me, 4, q.clone(), 20), &wl).unwrap();
            let decided: Vec<_> = trace.history.ops.iter().filter(|o| o.process.0 <= 2).map(|o| o.response().cloned()).collect();
            assert_eq!(decided, vec![Some(Response::Decided { value: 10 }); 2]);
            let decide_times: Vec<_> = trace.records("decide").map(|(t, _, _)| t).collect();
            assert!(decide_times.iter().all(|&t| t <= 6));
        }
    }
}
