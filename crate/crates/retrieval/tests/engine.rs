use retrieval::adversary::{corrupt_value, ByzMode, Composite, Latency, LatencyQuery, Adversary};
use retrieval::model::{partition_segments, source_query, InputArray, Segment};
use retrieval::rng::stream;
use retrieval::scenario::{check_run, parse_scenario, run_seed, run_seed_with, RunOutcome};
use retrieval::sim::{audit_eventual_delivery, UNIT};
use retrieval::trace::Role;

fn run(config: &str) -> RunOutcome {
    let sc = parse_scenario(config).unwrap();
    let seed = sc.seeds[0];
    run_seed_with(&sc, seed, true).unwrap()
}

#[test]
fn direct_reads() {
    let x = InputArray::bits(&[0, 1, 1, 0]).unwrap();
    assert_eq!(source_query(&x, 2).unwrap(), 1);
    assert_eq!(source_query(&x, 1).unwrap(), 0);
    assert_eq!(source_query(&InputArray::zeros(16), 16).unwrap(), 0);
    assert!(source_query(&x, 0).is_err());
    assert!(source_query(&x, 5).is_err());
}

#[test]
fn segments_cover_with_a_short_tail() {
    let lens = |n, s| partition_segments(n, s).iter().map(|g: &Segment| (g.offset, g.end())).collect::<Vec<_>>();
    assert_eq!(lens(10, 4), [(1, 4), (5, 8), (9, 10)]);
    assert_eq!(lens(4, 4), [(1, 4)]);
    let seven = partition_segments(7, 2);
    assert_eq!(seven.len(), 4);
    assert_eq!(seven[3].len, 1);
}

#[test]
fn failure_free_even_split() {
    let out = run(r#"{"protocol": "crash1", "n": 12, "k": 4, "f": 0, "adversary": "none", "seed": 7}"#);
    let t = out.trace();
    assert!(t.all_correct());
    assert_eq!(t.nonfaulty().count(), 4);
    for p in &t.peers {
        assert_eq!(p.query_count, 3, "peer {}", p.id);
    }
}

#[test]
fn single_crash_mid_stage_one() {
    for latency in [r#""max_latency""#, r#""seeded_random""#, r#"{"name": "slowest_peer", "peers": [1], "until_time": 3.0}"#] {
        let out = run(&format!(
            r#"{{"protocol": "crash1", "n": 12, "k": 4,
                "adversary": [{latency}, {{"name": "crash_midsend", "peer": 3, "after": 1, "kind": "stage1"}}],
                "seed": 2}}"#
        ));
        let t = out.trace();
        assert_eq!(t.peers[2].role, Role::Crashed);
        assert!(t.all_correct());
        assert!(out.report.q_max <= 4, "{latency}: {}", out.report.q_max);
    }
}

#[test]
fn crash_midsend_sends_exactly_that_many() {
    let out = run(
        r#"{"protocol": "crash1", "n": 12, "k": 4,
            "adversary": {"name": "crash_midsend", "peer": 3, "after": 2, "kind": "stage1"}, "seed": 1}"#,
    );
    let t = out.trace();
    let delivered_from_3 = t
        .event_log
        .iter()
        .filter(|e| e.kind == "deliver" && e.from == Some(3) && e.detail.as_deref() == Some("stage1"))
        .count();
    assert_eq!(delivered_from_3, 2);
    assert!(t.all_correct());
}

#[test]
fn reruns_are_byte_identical() {
    for cfg in [
        r#"{"protocol": "crashF", "n": 256, "k": 8, "f": 3, "adversary": ["seeded_random", {"name": "random_crashes"}], "seed": 11}"#,
        r#"{"protocol": "byz_2cycle", "n": 256, "k": 64, "beta": 0.2, "seg_len": 128, "adversary": "byz_flood", "seed": 4}"#,
        r#"{"protocol": "byz_committee", "n": 100, "k": 10, "f": 4, "adversary": ["seeded_random", "byz_equivocate"], "seed": 9}"#,
    ] {
        let a = run(cfg).trace().to_json();
        let b = run(cfg).trace().to_json();
        assert_eq!(a, b);
    }
}

#[test]
fn different_seeds_differ() {
    let cfg = |s| format!(r#"{{"protocol": "crashF", "n": 128, "k": 4, "f": 1, "adversary": "seeded_random", "seed": {s}}}"#);
    assert_ne!(run(&cfg(1)).trace().to_json(), run(&cfg(2)).trace().to_json());
}

#[test]
fn held_messages_are_released_on_quiescence() {
    // with f = 0 nobody can route around peer 1, so its messages must come out
    let out = run(
        r#"{"protocol": "crashF", "n": 12, "k": 4, "f": 0,
            "adversary": {"name": "slowest_peer", "peers": [1], "until_time": 1e9}, "seed": 0}"#,
    );
    let t = out.trace();
    assert!(t.audit.forced_releases >= 1);
    assert!(t.all_correct());
}

#[test]
fn single_crash_protocol_routes_around_a_silent_peer() {
    let out = run(
        r#"{"protocol": "crash1", "n": 12, "k": 4,
            "adversary": {"name": "slowest_peer", "peers": [1], "until_time": 1e9}, "seed": 0}"#,
    );
    let t = out.trace();
    assert_eq!(t.audit.forced_releases, 0);
    assert!(t.all_correct());
    assert!(t.peers[1..].iter().all(|p| p.query_count == 4));
}

#[test]
fn nothing_held_means_no_forced_release() {
    let out = run(r#"{"protocol": "crash1", "n": 120, "k": 4, "adversary": "seeded_random", "seed": 3}"#);
    assert_eq!(out.trace().audit.forced_releases, 0);
}

#[test]
fn attack_releases_everything_after_the_target_finishes() {
    let out = run(r#"{"protocol": "naive", "n": 32, "k": 6, "f": 3, "adversary": {"name": "lower_bound", "target": 1}, "seed": 0}"#);
    let t = out.trace();
    assert!(out.attacked);
    assert_eq!(t.undelivered, 0);
    audit_eventual_delivery(t).unwrap();
    assert!(t.all_correct(), "full querying defeats the attack");
}

#[test]
fn empty_attack_sets_change_nothing() {
    let out = run(
        r#"{"protocol": "naive_mutant", "n": 32, "k": 6, "f": 3,
            "adversary": {"name": "lower_bound", "target": 1, "delayed": [], "corrupted": []}, "seed": 0}"#,
    );
    assert!(out.trace().peers[0].output.as_deref() == Some(out.trace().expected.as_slice()));
}

#[test]
fn uniform_latency_is_constant() {
    let mut adv = Composite::uniform(4, 1.0);
    let mut rng = stream(0, 0);
    for (from, to) in [(0, 1), (2, 3), (3, 0)] {
        let q = LatencyQuery { from, to, cycle: None, kind: "x", send_time: 17, packet: 0, packets: 1 };
        assert_eq!(adv.latency(&q, &mut rng), Latency::After(UNIT));
    }
}

#[test]
fn equivocation_splits_receivers() {
    let a = corrupt_value(0, ByzMode::Equivocate, 0, 1);
    let b = corrupt_value(0, ByzMode::Equivocate, 1, 1);
    assert_ne!(a, b);
    assert_eq!(corrupt_value(1, ByzMode::Flip, 5, 1), 0);
}

#[test]
fn ledger_and_checks_hold_on_a_mixed_batch() {
    let sc = parse_scenario(
        r#"{"protocol": "crash1", "n": 1000, "k": 10, "adversary": ["seeded_random", {"name": "random_crashes"}], "seeds": "0..19"}"#,
    )
    .unwrap();
    for &s in &sc.seeds {
        let out = run_seed(&sc, s).unwrap();
        assert_eq!(check_run(&sc, &out), Vec::<String>::new(), "seed {s}");
    }
}
