//! Ready-made systems used by the bundled scenarios, the examples and tests.

use crate::gqs::QuorumFamily;
use crate::model::{processes, Channel, FailProneSystem, FailurePattern, ProcessId, ProcessSet};

/// Display names `a`, `b`, `c`, `d` for the four-process system.
pub const FOUR_NAMES: [&str; 4] = ["a", "b", "c", "d"];

fn ch(a: u32, b: u32) -> Channel {
    Channel::new(ProcessId(a), ProcessId(b))
}

fn set(ids: &[u32]) -> ProcessSet {
    ids.iter().map(|&i| ProcessId(i)).collect()
}

/// Pattern `i` (0-based) of the four-process system: process `i+3 mod 4`
/// may crash, and among the other three, only `x+2 -> x`, `x -> x+1` and
/// `x+1 -> x` stay correct (with `x = i`).
fn rotated_pattern(i: u32, extra_drop: &[Channel]) -> FailurePattern {
    let rot = |k: u32| (i + k) % 4 + 1;
    let (x, y, z, crash) = (rot(0), rot(1), rot(2), rot(3));
    let kept = [ch(z, x), ch(x, y), ch(y, x)];
    let live = [x, y, z];
    let mut dropped: Vec<Channel> = live
        .iter()
        .flat_map(|&a| live.iter().filter(move |&&b| b != a).map(move |&b| ch(a, b)))
        .filter(|c| !kept.contains(c))
        .collect();
    dropped.extend_from_slice(extra_drop);
    FailurePattern::new([ProcessId(crash)], dropped).expect("well-formed pattern")
}

/// Four processes `a..d` with four rotated failure patterns. Under the
/// first pattern `d` may crash and only `c->a`, `a->b`, `b->a` are correct.
pub fn four_process_system() -> FailProneSystem {
    FailProneSystem::new(4, (0..4).map(|i| rotated_pattern(i, &[])).collect()).expect("valid system")
}

/// Read quorums, one per pattern: `{a,c}, {b,d}, {c,a}, {d,b}`. As sets the
/// third and fourth coincide with the first two.
pub fn four_process_reads() -> QuorumFamily {
    QuorumFamily::new(vec![set(&[1, 3]), set(&[2, 4])]).expect("valid family")
}

/// Write quorums `{a,b}, {b,c}, {c,d}, {d,a}`, one per pattern.
pub fn four_process_writes() -> QuorumFamily {
    QuorumFamily::new(vec![set(&[1, 2]), set(&[2, 3]), set(&[3, 4]), set(&[4, 1])]).expect("valid family")
}

/// The four-process system where the first pattern also drops `a->b`.
/// No generalized quorum system exists for it.
pub fn four_process_system_without_ab() -> FailProneSystem {
    let mut patterns: Vec<_> = (0..4).map(|i| rotated_pattern(i, &[])).collect();
    patterns[0] = rotated_pattern(0, &[ch(1, 2)]);
    FailProneSystem::new(4, patterns).expect("valid system")
}

/// All subsets of `{p1..pn}` of size at least `min`, by increasing size and
/// then lexicographically.
pub fn subsets_of_size_at_least(n: usize, min: usize) -> Vec<ProcessSet> {
    let mut out: Vec<ProcessSet> = (0u32..(1 << n))
        .map(|mask| processes(n).filter(|p| mask & (1 << p.index()) != 0).collect::<ProcessSet>())
        .filter(|s| s.len() >= min)
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter())));
    out
}

/// Up to `k` crash failures and reliable channels between correct processes.
pub fn threshold_system(n: usize, k: usize) -> FailProneSystem {
    let patterns = subsets_of_size_at_least(n, 0)
        .into_iter()
        .filter(|s| s.len() <= k)
        .map(|crashed| FailurePattern::new(crashed, []).expect("crash-only pattern"))
        .collect();
    FailProneSystem::new(n, patterns).expect("valid system")
}

/// Threshold quorums: reads of size `>= n-k`, writes of size `>= k+1`.
pub fn threshold_quorums(n: usize, k: usize) -> (QuorumFamily, QuorumFamily) {
    let reads = QuorumFamily::new(subsets_of_size_at_least(n, n - k)).expect("non-empty");
    let writes = QuorumFamily::new(subsets_of_size_at_least(n, k + 1)).expect("non-empty");
    (reads, writes)
}
