//! Writes a register trace as JSON lines, reads it back, checks it, then
//! forges one read's value and shows the checker's cycle witness.

use gqslab::harness::check_history;
use gqslab::scenario::{Overrides, Scenario};
use gqslab::sim::parse_jsonl;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig1-f1-register.json");
    let scenario = Scenario::load(path).expect("bundled scenario");
    let plan = scenario.plan(&Overrides::default()).unwrap();
    let (trace, _) = plan.execute().unwrap();
    let text = trace.to_jsonl();
    println!("trace has {} lines", text.lines().count());

    let parsed = parse_jsonl(&text).unwrap();
    for r in check_history(plan.protocol.object, &parsed.history, &plan.termination, parsed.outcome.as_ref()) {
        println!("stored: {r}");
    }

    // Make the last read return the first value written.
    let last_read = parsed
        .history
        .ops
        .iter()
        .rev()
        .find(|o| matches!(o.response(), Some(gqslab::history::Response::Value { .. })))
        .expect("some read returned");
    let first_value = 1;
    let needle = format!("\"op-id\":{},", last_read.id.0);
    let forged: String = text
        .lines()
        .map(|l| {
            if l.contains("\"op-response\"") && l.contains(&needle) {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v["payload"]["value"] = first_value.into();
                serde_json::to_string(&v).unwrap()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let parsed = parse_jsonl(&(forged + "\n")).unwrap();
    let reports = check_history(plan.protocol.object, &parsed.history, &plan.termination, parsed.outcome.as_ref());
    println!("forged: {}", reports[0]);
}
