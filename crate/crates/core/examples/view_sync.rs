//! View synchronization: after GST, the growing view timers make every
//! process of the termination component spend a common stretch of at
//! least a few message delays in each view.

use std::collections::BTreeMap;

use gqslab::consensus::{overlap_in_view, synchronized_view, view_entries, ConsensusProcess};
use gqslab::fixtures::{four_process_reads, four_process_system, four_process_writes};
use gqslab::model::ProcessId;
use gqslab::qaf::shared_quorums;
use gqslab::sim::{run, SimConfig, Timing, TraceLevel};

fn main() {
    let f1 = four_process_system().patterns()[0].clone();
    let quorums = shared_quorums(&four_process_reads(), &four_process_writes());
    let (gst, delta, c) = (500, 2, 20);
    let mut cfg = SimConfig::new(4, Timing::PartialSync { gst, delta }, 3).with_pattern_at_start(f1);
    cfg.trace_level = TraceLevel::Ops;
    cfg.horizon = Some(gst * 3 + c * 40 * 41 / 2);
    let trace = run(&cfg, |me| ConsensusProcess::new(me, 4, quorums.clone(), c), &[]).unwrap();

    let core: BTreeMap<_, _> = view_entries(&trace).into_iter().filter(|(p, _)| [ProcessId(1), ProcessId(2)].contains(p)).collect();
    let needed = 5 * delta;
    let first = synchronized_view(&core, gst, c, needed).expect("both processes entered views after GST");
    println!("views from {first} on overlap by at least {needed}");
    for v in first..first + 5 {
        match overlap_in_view(&core, v) {
            Some(o) => println!("  view {v}: overlap {o}"),
            None => println!("  view {v}: not observed before the horizon"),
        }
    }
}
