//! Runs one object type under a simulator config and applies the checks
//! that belong to it. Shared by the command line, the examples and tests.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::checkers::{
    check_consensus_safety, check_lattice_agreement, check_linearizable_register, check_qaf, check_snapshot_linearizable,
    check_termination, check_version_monotonicity, Report,
};
use crate::consensus::ConsensusProcess;
use crate::history::{History, LatticeSet, ObjectKind, Operation};
use crate::lattice::LatticeProcess;
use crate::model::{ProcessId, ProcessSet};
use crate::qaf::{QafProcess, QafVariant, Quorums};
use crate::register::RegisterProcess;
use crate::sim::{run, RunOutcome, SimConfig, SimError, Time, Trace, WorkloadEntry};
use crate::snapshot::SnapshotProcess;

/// Protocol parameters that are not part of the network model.
#[derive(Clone, Debug)]
pub struct Protocol {
    pub object: ObjectKind,
    pub variant: QafVariant,
    pub quorums: Arc<Quorums>,
    /// Base view length for consensus.
    pub view_constant: Time,
}

pub fn simulate(cfg: &SimConfig, protocol: &Protocol, workload: &[WorkloadEntry]) -> Result<Trace, SimError> {
    let (n, v, q) = (cfg.n, protocol.variant, &protocol.quorums);
    match protocol.object {
        ObjectKind::Register => run(cfg, |me| RegisterProcess::new(me, n, v, q.clone()), workload),
        ObjectKind::Snapshot => run(cfg, |me| SnapshotProcess::new(me, n, v, q.clone()), workload),
        ObjectKind::Lattice => run(cfg, |me| LatticeProcess::new(me, n, v, q.clone()), workload),
        ObjectKind::Consensus => run(cfg, |me| ConsensusProcess::new(me, n, q.clone(), protocol.view_constant), workload),
        ObjectKind::QafRaw => run(cfg, |me| QafProcess::new(me, n, v, q.clone()), workload),
    }
}

/// Safety checks for `object` followed by termination at `tset`.
pub fn check_history(object: ObjectKind, h: &History, tset: &ProcessSet, outcome: Option<&RunOutcome>) -> Vec<Report> {
    let mut reports = match object {
        ObjectKind::Register => vec![check_linearizable_register(h), check_version_monotonicity(h)],
        ObjectKind::Snapshot => vec![check_snapshot_linearizable(h)],
        ObjectKind::Lattice => vec![check_lattice_agreement(h)],
        ObjectKind::Consensus => vec![check_consensus_safety(h)],
        ObjectKind::QafRaw => vec![check_qaf(h)],
    };
    reports.push(check_termination(h, tset, outcome));
    reports
}

/// Per-run seed derived from a base seed and a run index (SplitMix64
/// finalizer over their combination).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How random workloads are shaped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadShape {
    /// Inclusive range of operations per process (multi-shot objects).
    pub ops_per_process: (usize, usize),
    /// Invocation times are drawn from `[0, spread]`.
    pub spread: Time,
    /// Share of mutating operations (writes, updates, sets).
    pub write_ratio: f64,
}

impl Default for WorkloadShape {
    fn default() -> Self {
        WorkloadShape { ops_per_process: (2, 6), spread: 200, write_ratio: 0.5 }
    }
}

/// Random workload over processes `1..=n`. Mutating register and snapshot
/// operations carry globally unique values. Lattice and consensus are
/// single-shot, so every process proposes exactly once.
pub fn random_workload(object: ObjectKind, n: usize, shape: &WorkloadShape, rng: &mut impl RngCore) -> Vec<WorkloadEntry> {
    let mut out = Vec::new();
    let mut next_value = 1i64;
    let (lo, hi) = (shape.ops_per_process.0.min(shape.ops_per_process.1), shape.ops_per_process.1);
    for i in 0..n {
        let process = ProcessId::from_index(i);
        let count = match object {
            ObjectKind::Lattice | ObjectKind::Consensus => 1,
            _ => rng.random_range(lo..=hi),
        };
        for _ in 0..count {
            let mutate = rng.random_bool(shape.write_ratio.clamp(0.0, 1.0));
            let op = match object {
                ObjectKind::Register if mutate => Operation::Write { value: take(&mut next_value) },
                ObjectKind::Register => Operation::Read,
                ObjectKind::Snapshot if mutate => Operation::SnapUpdate { value: take(&mut next_value) },
                ObjectKind::Snapshot => Operation::SnapScan,
                ObjectKind::QafRaw if mutate => Operation::QafSet,
                ObjectKind::QafRaw => Operation::QafGet,
                ObjectKind::Lattice => {
                    let size = rng.random_range(1..=2);
                    let value: LatticeSet = (0..size).map(|_| rng.random_range(1..=12)).collect();
                    Operation::LaPropose { value }
                }
                ObjectKind::Consensus => Operation::Propose { value: *[7, 9, 11, 13].choose(rng).unwrap() },
            };
            out.push(WorkloadEntry { at: rng.random_range(0..=shape.spread), process, op });
        }
    }
    out.sort_by_key(|w| w.at);
    out
}

fn take(v: &mut i64) -> i64 {
    *v += 1;
    *v - 1
}
