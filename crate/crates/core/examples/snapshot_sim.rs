//! Atomic snapshot over per-process segment registers, with a concurrent
//! update/scan workload checked for linearizability.

use gqslab::checkers::check_snapshot_linearizable;
use gqslab::fixtures::{four_process_reads, four_process_system, four_process_writes};
use gqslab::history::{Operation, Response};
use gqslab::model::ProcessId;
use gqslab::qaf::{shared_quorums, QafVariant};
use gqslab::sim::{run, SimConfig, Timing, TraceLevel, WorkloadEntry};
use gqslab::snapshot::SnapshotProcess;

fn main() {
    let f2 = four_process_system().patterns()[1].clone();
    let quorums = shared_quorums(&four_process_reads(), &four_process_writes());
    let (b, c) = (ProcessId(2), ProcessId(3));
    let workload = vec![
        WorkloadEntry { at: 0, process: b, op: Operation::SnapUpdate { value: 10 } },
        WorkloadEntry { at: 0, process: c, op: Operation::SnapUpdate { value: 20 } },
        WorkloadEntry { at: 5, process: b, op: Operation::SnapScan },
        WorkloadEntry { at: 5, process: c, op: Operation::SnapScan },
        WorkloadEntry { at: 50, process: b, op: Operation::SnapUpdate { value: 11 } },
        WorkloadEntry { at: 60, process: c, op: Operation::SnapScan },
    ];
    let mut cfg = SimConfig::new(4, Timing::Async, 9).with_pattern_at_start(f2);
    cfg.trace_level = TraceLevel::Ops;
    cfg.await_set = Some([b, c].into());
    let trace = run(&cfg, |me| SnapshotProcess::new(me, 4, QafVariant::Generalized, quorums.clone()), &workload).unwrap();
    for op in &trace.history.ops {
        if let Some(Response::Scan { slots }) = op.response() {
            let shown: Vec<String> = slots.iter().map(|s| format!("{:?}@{}", s.value, s.seq)).collect();
            println!("{} scan at {}: [{}]", op.id, op.process, shown.join(", "));
        }
    }
    println!("{}", check_snapshot_linearizable(&trace.history));
}
