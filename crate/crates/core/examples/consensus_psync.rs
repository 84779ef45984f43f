//! Consensus under partial synchrony: chaotic delays before GST, a
//! decision at the termination component after it.

use gqslab::checkers::{check_consensus_safety, check_termination};
use gqslab::consensus::ConsensusProcess;
use gqslab::fixtures::{four_process_reads, four_process_system, four_process_writes};
use gqslab::history::Operation;
use gqslab::model::ProcessId;
use gqslab::qaf::shared_quorums;
use gqslab::sim::{run, SimConfig, Timing, TraceLevel, WorkloadEntry};

fn main() {
    let f1 = four_process_system().patterns()[0].clone();
    let quorums = shared_quorums(&four_process_reads(), &four_process_writes());
    let (gst, delta) = (300, 3);
    let workload: Vec<WorkloadEntry> =
        (1..=3).map(|p| WorkloadEntry { at: 0, process: ProcessId(p), op: Operation::Propose { value: 100 + p as i64 } }).collect();
    let mut cfg = SimConfig::new(4, Timing::PartialSync { gst, delta }, 17).with_pattern_at_start(f1);
    cfg.adversarial = true;
    cfg.trace_level = TraceLevel::Ops;
    let tset = [ProcessId(1), ProcessId(2)].into();
    cfg.await_set = Some(tset);
    cfg.horizon = Some(100_000);
    let trace = run(&cfg, |me| ConsensusProcess::new(me, 4, quorums.clone(), 10 * delta), &workload).unwrap();
    for op in &trace.history.ops {
        match op.completion.as_ref().map(|c| (&c.response, c.time)) {
            Some((r, t)) => println!("{} decided {r:?} at t={t}", op.process),
            _ => println!("{} undecided", op.process),
        }
    }
    println!("{}", check_consensus_safety(&trace.history));
    println!("{}", check_termination(&trace.history, &[ProcessId(1), ProcessId(2)].into(), Some(&trace.outcome)));
}
