//! Browser bindings. Every export takes and returns JSON text so the page
//! needs no generated types; errors come back as `{"error": "..."}`.

use retrieval::adversary::builtin_strategies;
use retrieval::dtree::{build_tree, determine, DecisionTree};
use retrieval::scenario::{check_run, parse_scenario, run_seed_with};
use retrieval::trace::Snapshot;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Most events returned to the page per run.
const EVENT_CAP: usize = 400;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Run the first seed of a scenario config and report what happened.
#[wasm_bindgen]
pub fn run_scenario(config: &str) -> String {
    let sc = match parse_scenario(config) {
        Ok(sc) => sc,
        Err(e) => return error(e),
    };
    let seed = sc.seeds.first().copied().unwrap_or(0);
    let out = match run_seed_with(&sc, seed, true) {
        Ok(o) => o,
        Err(e) => return error(e),
    };
    let t = out.trace();
    let peers: Vec<Value> = t
        .peers
        .iter()
        .map(|p| {
            json!({
                "id": p.id,
                "role": p.role,
                "queries": p.query_count,
                "sent": p.sent_msgs,
                "terminated_at": p.terminated_at.map(retrieval::trace::ExecutionTrace::time_units),
                "crashed": p.crashed_at.is_some(),
                "correct": p.output.as_ref().map(|o| *o == t.expected),
            })
        })
        .collect();
    let phases: Vec<Value> = t
        .snapshots
        .iter()
        .filter_map(|s| match s {
            Snapshot::PhaseStart { peer, phase, unknown, .. } => {
                Some(json!({ "peer": peer, "phase": phase, "unknown": unknown }))
            }
            _ => None,
        })
        .collect();
    let events: Vec<Value> = t
        .event_log
        .iter()
        .take(EVENT_CAP)
        .map(|e| {
            json!({
                "t": retrieval::trace::ExecutionTrace::time_units(e.time),
                "kind": e.kind,
                "peer": e.peer,
                "from": e.from,
                "detail": e.detail,
            })
        })
        .collect();
    json!({
        "scenario": sc.id,
        "protocol": sc.protocol.name(),
        "seed": seed,
        "report": out.report,
        "violations": check_run(&sc, &out),
        "peers": peers,
        "phases": phases,
        "events": events,
        "events_total": t.event_log.len(),
    })
    .to_string()
}

/// The adversary strategies a config may name.
#[wasm_bindgen]
pub fn strategies() -> String {
    let list: Vec<Value> =
        builtin_strategies().iter().map(|s| json!({ "name": s.name, "summary": s.summary })).collect();
    Value::Array(list).to_string()
}

fn tree_json(t: &DecisionTree) -> Value {
    match t {
        DecisionTree::Leaf(s) => json!({ "leaf": bits(s) }),
        DecisionTree::Inner { index, children } => json!({
            "index": index + 1,
            "children": children.iter().map(|(v, c)| json!({ "value": v, "node": tree_json(c) })).collect::<Vec<_>>(),
        }),
    }
}

fn bits(s: &[u32]) -> String {
    s.iter().map(|v| char::from_digit(*v, 10).unwrap_or('?')).collect()
}

fn parse_bits(s: &str) -> Result<Vec<u32>, String> {
    s.trim().chars().map(|c| c.to_digit(2).ok_or_else(|| format!("`{c}` is not a bit"))).collect()
}

/// Build the decision tree over whitespace-separated bit strings, then
/// resolve it against `truth`, counting the positions read.
#[wasm_bindgen]
pub fn decision_tree(strings: &str, truth: &str) -> String {
    let mut set = Vec::new();
    for s in strings.split_whitespace() {
        match parse_bits(s) {
            Ok(b) => set.push(b),
            Err(e) => return error(e),
        }
    }
    set.sort();
    set.dedup();
    let tree = match build_tree(&set) {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    let truth = match parse_bits(truth) {
        Ok(t) => t,
        Err(e) => return error(e),
    };
    let mut read = Vec::new();
    let result = determine(&tree, 1, |i| {
        read.push(i);
        truth.get(i - 1).copied().unwrap_or(0)
    });
    json!({
        "strings": set.len(),
        "tree": tree_json(&tree),
        "queried": read,
        "result": result.as_ref().map(|r| bits(r)).ok(),
        "matches_truth": result.as_ref().is_ok_and(|r| *r == truth),
        "error": result.err().map(|e| e.to_string()),
    })
    .to_string()
}
