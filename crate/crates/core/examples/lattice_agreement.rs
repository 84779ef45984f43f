//! Single-shot lattice agreement on sets under union: concurrent proposals
//! return comparable outputs that contain the proposer's own input.

use gqslab::checkers::check_lattice_agreement;
use gqslab::fixtures::{four_process_reads, four_process_system, four_process_writes};
use gqslab::history::{LatticeSet, Operation, Response};
use gqslab::lattice::LatticeProcess;
use gqslab::model::ProcessId;
use gqslab::qaf::{shared_quorums, QafVariant};
use gqslab::sim::{run, SimConfig, Timing, TraceLevel, WorkloadEntry};

fn main() {
    let system = four_process_system();
    let quorums = shared_quorums(&four_process_reads(), &four_process_writes());
    for seed in 0..5 {
        let f3 = system.patterns()[2].clone();
        let workload: Vec<WorkloadEntry> = (1..=4)
            .map(|p| WorkloadEntry { at: 0, process: ProcessId(p), op: Operation::LaPropose { value: LatticeSet::from([p * 10]) } })
            .collect();
        let mut cfg = SimConfig::new(4, Timing::Async, seed).with_pattern_at_start(f3);
        cfg.trace_level = TraceLevel::Ops;
        cfg.await_set = Some([ProcessId(3), ProcessId(4)].into());
        let trace = run(&cfg, |me| LatticeProcess::new(me, 4, QafVariant::Generalized, quorums.clone()), &workload).unwrap();
        let outputs: Vec<String> = trace
            .history
            .ops
            .iter()
            .map(|o| match o.response() {
                Some(Response::Lattice { value }) => format!("{}:{value:?}", o.process),
                _ => format!("{}:pending", o.process),
            })
            .collect();
        println!("seed {seed}: {} -> {}", outputs.join(" "), check_lattice_agreement(&trace.history).verdict.label());
    }
}
