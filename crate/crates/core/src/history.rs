//! Operation invocation/response records shared by the simulator, the
//! protocol automata and the checkers.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::ProcessId;
use crate::register::Version;
use crate::sim::Time;

/// Identifier of one workload operation (its index in the workload).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub u64);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

/// Set-valued lattice element used by lattice agreement workloads.
pub type LatticeSet = BTreeSet<u32>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    Write { value: i64 },
    Read,
    SnapUpdate { value: i64 },
    SnapScan,
    LaPropose { value: LatticeSet },
    Propose { value: i64 },
    QafGet,
    QafSet,
}

impl Operation {
    pub fn object(&self) -> ObjectKind {
        match self {
            Operation::Write { .. } | Operation::Read => ObjectKind::Register,
            Operation::SnapUpdate { .. } | Operation::SnapScan => ObjectKind::Snapshot,
            Operation::LaPropose { .. } => ObjectKind::Lattice,
            Operation::Propose { .. } => ObjectKind::Consensus,
            Operation::QafGet | Operation::QafSet => ObjectKind::QafRaw,
        }
    }
}

/// One segment of a snapshot as seen by a scan: the value last stored by
/// the segment's owner and the owner's per-segment sequence number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot<T = i64> {
    pub value: Option<T>,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "resp", rename_all = "snake_case")]
pub enum Response {
    Ack,
    Value { value: i64 },
    SnapAck { seq: u64 },
    Scan { slots: Vec<Slot> },
    Lattice { value: LatticeSet },
    Decided { value: i64 },
    /// States returned by `quorum_get` (each the set of update ids it has
    /// incorporated) and the clock cut-off the get used.
    QafStates { states: Vec<BTreeSet<u64>>, cutoff: u64 },
    /// `quorum_set` completed with the given clock threshold.
    QafSetDone { threshold: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Register,
    Snapshot,
    Lattice,
    Consensus,
    QafRaw,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectKind::Register => "register",
            ObjectKind::Snapshot => "snapshot",
            ObjectKind::Lattice => "lattice",
            ObjectKind::Consensus => "consensus",
            ObjectKind::QafRaw => "qaf-raw",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub time: Time,
    /// Position in the global invoke/response order.
    pub order: u64,
    pub response: Response,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub id: OpId,
    pub process: ProcessId,
    pub op: Operation,
    pub invoke_time: Time,
    pub invoke_order: u64,
    pub completion: Option<Completion>,
    /// Register version the operation committed to, when known.
    pub version: Option<Version>,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.completion.is_some()
    }

    pub fn response(&self) -> Option<&Response> {
        self.completion.as_ref().map(|c| &c.response)
    }

    /// `self` returned before `other` was invoked.
    pub fn precedes(&self, other: &OpRecord) -> bool {
        self.completion.as_ref().is_some_and(|c| c.order < other.invoke_order)
    }
}

/// Operations in invocation order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub ops: Vec<OpRecord>,
}

impl History {
    pub fn new(ops: Vec<OpRecord>) -> Self {
        History { ops }
    }

    pub fn completed(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| o.is_complete())
    }

    pub fn pending(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| !o.is_complete())
    }

    pub fn get(&self, id: OpId) -> Option<&OpRecord> {
        self.ops.iter().find(|o| o.id == id)
    }

    pub fn get_mut(&mut self, id: OpId) -> Option<&mut OpRecord> {
        self.ops.iter_mut().find(|o| o.id == id)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Object kinds present in the history.
    pub fn objects(&self) -> BTreeSet<String> {
        self.ops.iter().map(|o| o.op.object().to_string()).collect()
    }
}
