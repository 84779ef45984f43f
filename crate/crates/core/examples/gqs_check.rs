//! Validates the four-process quorum system, prints each pattern's
//! termination component, then shows that dropping one more channel leaves
//! no generalized quorum system at all.

use gqslab::fixtures::{four_process_reads, four_process_system, four_process_system_without_ab, four_process_writes, FOUR_NAMES};
use gqslab::gqs::{find_gqs, validate_gqs};
use gqslab::model::ProcessSet;

fn show(s: &ProcessSet) -> String {
    let names: Vec<&str> = s.iter().map(|p| FOUR_NAMES[p.index()]).collect();
    format!("{{{}}}", names.join(","))
}

fn main() {
    let system = four_process_system();
    let (reads, writes) = (four_process_reads(), four_process_writes());
    let verdict = validate_gqs(&system, &reads, &writes, &system.graph()).expect("quorums name known processes");
    println!("consistent: {}, available: {}", verdict.is_consistent(), verdict.is_available());
    for (i, u) in &verdict.u_components {
        let w = verdict.availability[*i].expect("available");
        println!("  f{}: write quorum {} read quorum {} U = {}", i + 1, show(&writes.quorums()[w.write]), show(&reads.quorums()[w.read]), show(u));
    }

    let found = find_gqs(&system, &system.graph()).expect("a GQS exists");
    let shown: Vec<String> = found.writes.iter().map(show).collect();
    println!("search found write quorums {}", shown.join(" "));

    let harder = four_process_system_without_ab();
    match find_gqs(&harder, &harder.graph()) {
        Some(_) => println!("unexpected: a GQS exists after dropping a->b"),
        None => println!("after also dropping a->b under f1: no GQS exists"),
    }
}
