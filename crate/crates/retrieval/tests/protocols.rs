use retrieval::adversary::parse_strategy;
use retrieval::invariants::{assignment_coherence, committee_bound, unknown_bound_violations};
use retrieval::metrics::{summarize, Verdict};
use retrieval::odc::{run_odc, DataSourceSet, NetSpec, OdcMode, SourceByz};
use retrieval::proto::rand::{RandMode, RandParams};
use retrieval::scenario::{check_run, parse_scenario, run_seed, run_seed_with, RunOutcome};
use retrieval::sim::CheckLevel;
use retrieval::trace::{ExecutionTrace, Role, Snapshot};

fn run(config: &str) -> RunOutcome {
    let sc = parse_scenario(config).unwrap();
    run_seed(&sc, sc.seeds[0]).unwrap()
}

fn queried(t: &ExecutionTrace, peer: usize) -> Vec<usize> {
    let mut q = t.peers[peer].queries.clone();
    q.sort_unstable();
    q
}

// single crash

#[test]
fn silent_peer_block_goes_one_cell_to_each_survivor() {
    let out = run(
        r#"{"protocol": "crash1", "n": 12, "k": 4,
            "adversary": {"name": "crash_at_progress", "peer": 2, "phase": 1, "stage": 1}, "seed": 0}"#,
    );
    let t = out.trace();
    assert!(t.all_correct());
    assert_eq!(t.peers[1].sent_msgs, 0);
    let extra: Vec<Vec<usize>> = [0, 2, 3]
        .iter()
        .map(|&p| queried(t, p).into_iter().filter(|i| (4..=6).contains(i)).collect())
        .collect();
    assert_eq!(extra, [vec![4], vec![5], vec![6]]);
    for p in [0, 2, 3] {
        assert_eq!(t.peers[p].query_count, 4);
    }
}

#[test]
fn failure_free_single_crash_run_ends_in_completion() {
    let out = run(r#"{"protocol": "crash1", "n": 12, "k": 4, "adversary": "seeded_random", "seed": 5}"#);
    let t = out.trace();
    assert!(t.all_correct());
    for s in &t.snapshots {
        if let Snapshot::Stage3 { phase: 1, missing, reassigned, .. } = s {
            assert_eq!((*missing, *reassigned), (None, false));
        }
    }
    assert_eq!(out.report.q_max, 3);
}

#[test]
fn relayed_block_switches_peers_to_completion_mode() {
    // peer 2 reaches exactly one other peer before crashing; the rest get
    // its block through stage-2 answers and skip reassignment
    let out = run(
        r#"{"protocol": "crash1", "n": 12, "k": 4,
            "adversary": {"name": "crash_midsend", "peer": 2, "after": 1, "kind": "stage1"}, "seed": 0}"#,
    );
    let t = out.trace();
    assert!(t.all_correct());
    let mut completion = 0;
    for s in &t.snapshots {
        if let Snapshot::PhaseStart { peer, phase: 2, unknown, .. } = s {
            assert_eq!(*unknown, 0, "peer {peer}");
            completion += 1;
        }
    }
    assert_eq!(completion, 3);
    assert!(t.nonfaulty().all(|p| p.query_count == 3));
}

// f crashes

#[test]
fn failure_free_multi_crash_reads_one_block_each() {
    for (n, k, f) in [(8usize, 4usize, 1), (1000, 8, 0), (64, 4, 2)] {
        let out = run(&format!(
            r#"{{"protocol": "crashF", "n": {n}, "k": {k}, "f": {f}, "adversary": "seeded_random", "seed": 2}}"#
        ));
        assert!(out.trace().all_correct());
        assert_eq!(out.report.q_max as usize, n.div_ceil(k), "n={n} k={k} f={f}");
    }
    let t = run(r#"{"protocol": "crashF", "n": 8, "k": 4, "f": 1, "seed": 0}"#);
    assert_eq!(summarize(t.trace()).q_max, 2);
    for p in 0..4 {
        assert_eq!(queried(t.trace(), p), [2 * p + 1, 2 * p + 2]);
    }
}

#[test]
fn no_crash_budget_terminates_after_one_round() {
    let out = run(r#"{"protocol": "crashF", "n": 1000, "k": 8, "f": 0, "adversary": "seeded_random", "seed": 4}"#);
    assert_eq!(out.report.phases, Some(0));
}

#[test]
fn unknown_cells_shrink_by_f_over_k_per_phase() {
    let sc = parse_scenario(
        r#"{"protocol": "crashF", "n": 1024, "k": 4, "f": 2, "check": "full",
            "adversary": ["seeded_random", {"name": "random_crashes"}], "seeds": "0..19"}"#,
    )
    .unwrap();
    for &seed in &sc.seeds {
        let out = run_seed(&sc, seed).unwrap();
        let t = out.trace();
        assert!(t.all_correct(), "seed {seed}");
        assignment_coherence(t).unwrap();
        for s in &t.snapshots {
            if let Snapshot::PhaseStart { phase: 3, unknown, .. } = s {
                assert!(*unknown <= 128, "seed {seed}: {unknown}");
            }
        }
        assert!(out.report.phases.unwrap() <= 8);
        // the last phase may exceed the geometric bound by a handful of cells
        assert!(unknown_bound_violations(t, 2).iter().all(|v| v.1 == out.report.phases.unwrap()));
    }
}

#[test]
fn time_optimized_variant_is_never_slower() {
    for seed in 0..10 {
        let cfg = |p: &str| {
            format!(
                r#"{{"protocol": "{p}", "n": 1024, "k": 8, "f": 5, "phi": 64,
                    "adversary": ["max_latency", {{"name": "random_crashes"}}], "seed": {seed}}}"#
            )
        };
        let plain = run(&cfg("crashF"));
        let opt = run(&cfg("crashF_opt"));
        assert!(plain.trace().all_correct() && opt.trace().all_correct());
        assert!(opt.report.t <= plain.report.t + 1e-9, "seed {seed}");
    }
}

#[test]
fn skewed_reassignment_is_caught() {
    let out_cfg = r#"{"protocol": "crashF", "n": 256, "k": 4, "f": 2, "check": "full", "mutation": "skewed_reassignment",
        "adversary": [{"name": "crash_at_progress", "peer": 3, "phase": 0, "stage": 2},
                      {"name": "crash_at_progress", "peer": 4, "phase": 0, "stage": 2}]}"#;
    let sc = parse_scenario(out_cfg).unwrap();
    let out = run_seed(&sc, 0).unwrap();
    let v = check_run(&sc, &out);
    assert!(v.iter().any(|m| m.starts_with("assignment coherence")), "{v:?}");

    let clean = parse_scenario(&out_cfg.replace(r#""mutation": "skewed_reassignment","#, "")).unwrap();
    let out = run_seed(&clean, 0).unwrap();
    assert!(out.trace().all_correct());
    assignment_coherence(out.trace()).unwrap();
}

// byzantine committee

#[test]
fn committees_outvote_every_byzantine_mode() {
    for mode in ["byz_flip", "byz_equivocate", "byz_silent"] {
        for (n, k, f) in [(100, 10, 4), (60, 5, 1), (40, 7, 3)] {
            let out = run(&format!(
                r#"{{"protocol": "byz_committee", "n": {n}, "k": {k}, "f": {f},
                    "adversary": ["seeded_random", "{mode}"], "seed": 3}}"#
            ));
            let t = out.trace();
            assert!(t.all_correct(), "{mode} n={n} k={k} f={f}");
            assert_eq!(t.peers.iter().filter(|p| p.role == Role::Byzantine).count(), f);
            assert!(out.report.q_max <= committee_bound(n, k, f));
        }
    }
    assert_eq!(committee_bound(100, 10, 4), 90);
}

#[test]
fn zero_byzantine_budget_is_round_robin() {
    let out = run(r#"{"protocol": "byz_committee", "n": 20, "k": 4, "f": 0, "seed": 1}"#);
    let t = out.trace();
    assert!(t.all_correct());
    for p in 0..4 {
        assert_eq!(queried(t, p), (0..5).map(|r| 4 * r + p + 1).collect::<Vec<_>>());
    }
}

// randomized

#[test]
fn two_cycle_parameters_by_case() {
    let p = RandParams::two_cycle(1_000_000, 100_000, 0.4, 1.0).unwrap();
    assert_eq!((p.case, p.seg_len, p.segs), (1, 143_109, 7));
    assert!((p.gamma() - 0.6).abs() < 1e-12);
    // small k reads everything
    let small = RandParams::two_cycle(1 << 12, 200, 0.2, 1.0).unwrap();
    assert!(small.query_all);
    // the segment length grows as the honest margin shrinks
    let mut last = 0;
    for beta in [0.05, 0.15, 0.25, 0.35, 0.45] {
        let p = RandParams::two_cycle(1_000_000, 1_000_000, beta, 1.0).unwrap();
        assert!(p.seg_len >= last, "β={beta}");
        last = p.seg_len;
    }
}

#[test]
fn reading_everything_when_k_is_small() {
    let out = run(r#"{"protocol": "byz_2cycle", "n": 256, "k": 16, "beta": 0.2, "adversary": "byz_flood", "seed": 1}"#);
    let t = out.trace();
    assert!(t.all_correct());
    assert!(t.nonfaulty().all(|p| p.query_count == 256));
}

#[test]
fn one_segment_degenerates_to_full_reads() {
    let out = run(r#"{"protocol": "byz_2cycle", "n": 128, "k": 64, "beta": 0.1, "seg_len": 128, "seed": 0}"#);
    let t = out.trace();
    assert!(t.all_correct());
    assert!(t.nonfaulty().all(|p| p.query_count == 128));
    let one = RandParams::with_seg_len(128, 64, 0.1, 1.0, 128, RandMode::MultiCycle).unwrap();
    assert_eq!((one.segs, one.last_cycle()), (1, 0));
}

#[test]
fn flooded_fake_strings_are_resolved_by_queries() {
    let sc = parse_scenario(
        r#"{"protocol": "byz_2cycle", "n": 512, "k": 128, "beta": 0.2, "seg_len": 256,
            "adversary": ["seeded_random", "byz_flood"], "seeds": "0..9"}"#,
    )
    .unwrap();
    let params = sc.rand_params().unwrap();
    let cap = params.seg_len as u64 + (sc.k as f64 / params.threshold_at(0)).ceil() as u64;
    let mut resolved = 0;
    for &s in &sc.seeds {
        let out = run_seed(&sc, s).unwrap();
        assert_eq!(check_run(&sc, &out), Vec::<String>::new(), "seed {s}");
        if out.report.premise_holds == Some(true) {
            assert!(out.trace().all_correct());
            assert!(out.report.q_max <= cap, "seed {s}: {} > {cap}", out.report.q_max);
        }
        resolved += u64::from(out.report.det_queries_mean.unwrap_or(0.0) > 0.0);
    }
    assert!(resolved > 0, "flooding never forced a tree query");
}

#[test]
fn multi_cycle_runs_lg_k_plus_one_cycles() {
    let out = run(
        r#"{"protocol": "byz_multicycle", "n": 4096, "k": 256, "beta": 0.2, "seg_len": 256,
            "adversary": ["seeded_random", "byz_flood"], "seed": 2}"#,
    );
    assert_eq!(out.report.cycles, Some(5));
    if out.report.premise_holds == Some(true) {
        assert!(out.trace().all_correct());
    }
}

#[test]
fn crashes_in_randomized_runs_fall_on_cycle_boundaries() {
    let sc = parse_scenario(
        r#"{"protocol": "byz_multicycle", "n": 1024, "k": 128, "beta": 0.2, "seg_len": 128,
            "adversary": ["seeded_random", {"name": "cycle_crashes", "count": 12}], "seeds": "0..4"}"#,
    )
    .unwrap();
    for &s in &sc.seeds {
        let out = run_seed(&sc, s).unwrap();
        assert!(!out.trace().audit.crashes.is_empty());
        assert!(out.trace().audit.crashes.iter().all(|c| c.at_cycle_boundary));
        assert_eq!(check_run(&sc, &out), Vec::<String>::new());
    }
}

// naive and the lower-bound attack

#[test]
fn attack_breaks_only_the_under_querying_mutant() {
    let cfg = |p: &str| {
        format!(r#"{{"protocol": "{p}", "n": 64, "k": 6, "f": 3, "adversary": {{"name": "lower_bound", "target": 1}}}}"#)
    };
    let naive = run(&cfg("naive"));
    assert!(naive.attacked && naive.trace().all_correct());
    let mutant = run(&cfg("naive_mutant"));
    assert!(mutant.attacked);
    let t = mutant.trace();
    assert_ne!(t.peers[0].output.as_deref(), Some(&t.expected[..]));
    assert_eq!(mutant.report.verdict, Verdict::Incorrect);
}

// oracle data collection

#[test]
fn one_inflating_source_out_of_three_is_absorbed() {
    let data = DataSourceSet::new(32, vec![vec![10], vec![12], vec![1000]], vec![None, None, Some(SourceByz::Inflate)])
        .unwrap();
    for mode in [OdcMode::Naive, OdcMode::DownloadBased] {
        let net = NetSpec {
            k: 4,
            f: 1,
            phi: 512,
            adversary: Vec::new(),
            seed: 0,
            check: CheckLevel::Bounds,
            record_events: false,
        };
        let out = run_odc(&data, &net, mode, 1.0 / 3.0).unwrap();
        assert_eq!(out.first(), Some(&[12][..]), "{mode:?}");
        assert!(out.honest_exact);
    }
}

#[test]
fn equivocating_source_download_still_terminates() {
    // committee members read different values, so no f+1 agreement ever forms
    let rows = vec![(0..40).map(|i| i + 100).collect(), vec![7; 40], (0..40).map(|i| i + 101).collect()];
    let data = DataSourceSet::new(32, rows, vec![None, Some(SourceByz::Equivocate), None]).unwrap();
    for seed in 0..10 {
        let net = NetSpec {
            k: 7,
            f: 2,
            phi: 512,
            adversary: vec![
                parse_strategy(&serde_json::json!("seeded_random")).unwrap(),
                parse_strategy(&serde_json::json!("byz_silent")).unwrap(),
            ],
            seed,
            check: CheckLevel::Bounds,
            record_events: false,
        };
        let out = run_odc(&data, &net, OdcMode::DownloadBased, 1.0 / 3.0).unwrap();
        assert_eq!(out.res.iter().flatten().count(), 5, "seed {seed}");
        for r in out.res.iter().flatten() {
            assert_eq!(data.outside_range(r), None, "seed {seed}");
        }
        assert!(out.honest_exact);
    }
}

#[test]
fn identical_honest_sources_come_through_unchanged() {
    let row: Vec<u32> = (0..50).map(|i| i * 7 + 3).collect();
    let data = DataSourceSet::new(32, vec![row.clone(); 5], vec![None; 5]).unwrap();
    for mode in [OdcMode::Naive, OdcMode::DownloadBased] {
        let net = NetSpec {
            k: 7,
            f: 2,
            phi: 512,
            adversary: vec![parse_strategy(&serde_json::json!("byz_equivocate")).unwrap()],
            seed: 9,
            check: CheckLevel::Bounds,
            record_events: false,
        };
        let out = run_odc(&data, &net, mode, 0.4).unwrap();
        assert!(out.res.iter().flatten().all(|r| *r == row), "{mode:?}");
    }
}

#[test]
fn oracle_scenarios_stay_inside_the_honest_range() {
    for p in ["odc_naive", "odc_download"] {
        let sc = parse_scenario(&format!(
            r#"{{"protocol": "{p}", "n": 256, "k": 16, "f": 5, "m": 5, "beta_d": 0.4,
                "source_adversary": ["inflate", "deflate", "equivocate"],
                "adversary": ["seeded_random", "byz_equivocate"], "seeds": "0..3"}}"#
        ))
        .unwrap();
        for &s in &sc.seeds {
            let out = run_seed_with(&sc, s, false).unwrap();
            assert_eq!(out.report.verdict, Verdict::Correct, "{p} seed {s}");
            assert_eq!(out.traces.len(), 5);
        }
    }
}
