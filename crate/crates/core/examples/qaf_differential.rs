//! The request/response quorum access functions against the
//! push-based ones under the first pattern: only the latter let `a`
//! finish a get, because `b` can reach `a` but `a` cannot reach `c`'s
//! answer path back.

use gqslab::checkers::check_termination;
use gqslab::fixtures::{four_process_reads, four_process_system, four_process_writes};
use gqslab::history::Operation;
use gqslab::model::ProcessId;
use gqslab::qaf::{shared_quorums, QafProcess, QafVariant};
use gqslab::sim::{run, SimConfig, Timing, WorkloadEntry};

fn main() {
    let f1 = four_process_system().patterns()[0].clone();
    let quorums = shared_quorums(&four_process_reads(), &four_process_writes());
    let a = ProcessId(1);
    let workload = [WorkloadEntry { at: 0, process: a, op: Operation::QafGet }];
    for variant in [QafVariant::Classical, QafVariant::Generalized] {
        let mut cfg = SimConfig::new(4, Timing::PartialSync { gst: 0, delta: 2 }, 1).with_pattern_at_start(f1.clone());
        cfg.horizon = Some(2_000);
        let trace = run(&cfg, |me| QafProcess::new(me, 4, variant, quorums.clone()), &workload).unwrap();
        let report = check_termination(&trace.history, &[a].into(), Some(&trace.outcome));
        println!("{variant:?}: {} events, {}", trace.outcome.events, report.verdict.label());
    }
}
