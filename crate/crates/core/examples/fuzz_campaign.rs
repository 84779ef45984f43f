//! A small randomized campaign over the bundled lattice scenario, in
//! parallel, with per-run derived seeds.

use gqslab::cli::fuzz_runs;
use gqslab::scenario::{Overrides, Scenario};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/lattice.json");
    let scenario = Scenario::load(path).expect("bundled scenario");
    let runs = fuzz_runs(&scenario, 2024, 100, &Overrides::default()).unwrap();
    let passed = runs.iter().filter(|r| r.verdict.is_pass()).count();
    println!("{passed}/{} runs passed", runs.len());
    if let Some(bad) = runs.iter().find(|r| !r.verdict.is_pass()) {
        println!("run {} (seed {}) did not pass: {:?}", bad.index, bad.seed, bad.failing);
    }
}
