//! Threshold quorum systems over crash-only failures: the classical
//! construction is both a classical and a generalized quorum system.

use gqslab::fixtures::{subsets_of_size_at_least, threshold_quorums, threshold_system};
use gqslab::gqs::{is_classical_qs, validate_gqs, QuorumFamily};

fn main() {
    for (n, k) in [(3, 1), (5, 1), (5, 2), (7, 3)] {
        let system = threshold_system(n, k);
        let (reads, writes) = threshold_quorums(n, k);
        let verdict = validate_gqs(&system, &reads, &writes, &system.graph()).expect("valid members");
        println!(
            "n={n} k={k}: {} patterns, {} read and {} write quorums, classical={} generalized={}",
            system.patterns().len(),
            reads.len(),
            writes.len(),
            is_classical_qs(&system, &reads, &writes),
            verdict.is_valid()
        );
    }
    // Reads of size 2 no longer meet every write of size 3 among five processes.
    let system = threshold_system(5, 2);
    let (_, writes) = threshold_quorums(5, 2);
    let small_reads = QuorumFamily::new(subsets_of_size_at_least(5, 2)).unwrap();
    let verdict = validate_gqs(&system, &small_reads, &writes, &system.graph()).unwrap();
    println!("n=5 with reads of size 2 and writes of size 3: consistent={}", verdict.is_consistent());
}
