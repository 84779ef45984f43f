//! Runs the register under the first failure pattern of the four-process
//! system and checks linearizability and termination at {a,b}.

use std::sync::Arc;

use gqslab::checkers::{check_linearizable_register, check_termination};
use gqslab::fixtures::{four_process_reads, four_process_system, four_process_writes};
use gqslab::history::{Operation, Response};
use gqslab::model::ProcessId;
use gqslab::qaf::{QafVariant, Quorums};
use gqslab::register::RegisterProcess;
use gqslab::sim::{run, SimConfig, Timing, WorkloadEntry};

fn main() {
    let system = four_process_system();
    let f1 = system.patterns()[0].clone();
    let quorums = Arc::new(Quorums::new(&four_process_reads(), &four_process_writes()));
    let (a, b, c) = (ProcessId(1), ProcessId(2), ProcessId(3));
    let workload = vec![
        WorkloadEntry { at: 0, process: a, op: Operation::Write { value: 7 } },
        WorkloadEntry { at: 2, process: b, op: Operation::Read },
        WorkloadEntry { at: 30, process: b, op: Operation::Write { value: 8 } },
        WorkloadEntry { at: 60, process: a, op: Operation::Read },
        WorkloadEntry { at: 0, process: c, op: Operation::Read },
    ];
    let mut cfg = SimConfig::new(4, Timing::PartialSync { gst: 20, delta: 3 }, 42).with_pattern_at_start(f1);
    let tset = [a, b].into();
    cfg.await_set = Some(tset);
    let trace = run(&cfg, |me| RegisterProcess::new(me, 4, QafVariant::Generalized, quorums.clone()), &workload).unwrap();

    for op in &trace.history.ops {
        let result = match op.response() {
            Some(Response::Value { value }) => format!("returned {value}"),
            Some(_) => "done".to_string(),
            None => "pending".to_string(),
        };
        println!("{} at {}: {:?} {result} version {:?}", op.id, op.process, op.op, op.version);
    }
    println!("{}", check_linearizable_register(&trace.history));
    println!("{}", check_termination(&trace.history, &[a, b].into(), Some(&trace.outcome)));
}
