//! The acceptance suite: ten criteria, one PASS/FAIL line each.
//!
//! A FAIL line means a target was measured and missed; the run still
//! exits 0 so the numbers get reported. The process exits 1 only when
//! something that must always hold (correctness where it is guaranteed,
//! determinism, the audits) breaks.

use std::time::Instant;

use rayon::prelude::*;
use retrieval::dtree::{build_tree, determine};
use retrieval::metrics::ComplexityReport;
use retrieval::invariants::{
    assignment_coherence, committee_bound, max_phase, multi_crash_bound, single_crash_bound,
    unknown_bound_violations,
};
use retrieval::proto::crash_multi::termination_phase;
use retrieval::scenario::{parse_scenario, run_seed, run_seed_with, RunOutcome, Scenario};
use retrieval::sim::{audit_crash_legality, audit_cycle_contract};
use retrieval::trace::ExecutionTrace;

struct Suite {
    lines: Vec<String>,
    broken: Vec<String>,
    /// Randomized traces audited so far, their crashes, and audit failures.
    audited: (usize, usize, usize),
}

impl Suite {
    fn report(&mut self, id: u32, pass: bool, started: Instant, text: String) {
        let line = format!(
            "criterion {id:>2} {}  {text} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push(line);
    }

    /// Record a hard failure; the suite exits non-zero at the end.
    fn must(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            let w = what();
            eprintln!("broken: {w}");
            self.broken.push(w);
        }
    }

    fn audit(&mut self, runs: &[Lean]) {
        for r in runs {
            self.audited.0 += 1;
            self.audited.1 += r.crashes;
            self.audited.2 += usize::from(!r.audits_ok);
        }
    }
}

/// What a criterion keeps of one run; full traces at n = 2^14 are too big to hold by the hundred.
struct Lean {
    report: ComplexityReport,
    correct: bool,
    crashes: usize,
    audits_ok: bool,
}

fn lean(t: &ExecutionTrace, report: ComplexityReport) -> Lean {
    Lean {
        correct: t.all_correct(),
        crashes: t.audit.crashes.len(),
        audits_ok: audit_cycle_contract(t).is_ok() && audit_crash_legality(t).is_ok(),
        report,
    }
}

fn run_lean(sc: &Scenario) -> Vec<Lean> {
    sc.seeds
        .par_iter()
        .map(|&s| {
            let out = run_seed(sc, s).expect("config runs");
            lean(out.trace(), out.report.clone())
        })
        .collect()
}

fn scenario(text: &str) -> Scenario {
    parse_scenario(text).unwrap_or_else(|e| panic!("bad config {text}: {e}"))
}

fn run_all(sc: &Scenario) -> Vec<RunOutcome> {
    sc.seeds.par_iter().map(|&s| run_seed(sc, s).expect("config runs")).collect()
}

fn ceil_div(a: u128, b: u128) -> u128 {
    a.div_ceil(b)
}

/// The query bound with the terminating phase's full read counted:
/// `Σ_{p<P} ⌈(n/k)(f/k)^p⌉ + ⌈n(f/k)^P⌉`.
fn full_read_bound(n: usize, k: usize, f: usize) -> u64 {
    let top = termination_phase(n, k, f);
    let (n, k, f) = (n as u128, k as u128, f as u128);
    let head: u128 = (0..top).map(|p| ceil_div(n * f.pow(p), k.pow(p + 1))).sum();
    (head + ceil_div(n * f.pow(top), k.pow(top))) as u64
}

fn c1(s: &mut Suite) {
    let t0 = Instant::now();
    let lats = [r#""max_latency""#, r#""seeded_random""#, r#"{"name": "slowest_peer", "peers": [1], "until_time": 4}"#];
    let (mut runs, mut wrong, mut over) = (0, 0, 0);
    for (n, k) in [(12, 4), (120, 4), (1000, 10)] {
        let mut crashes = Vec::new();
        for p in 1..=k {
            for phase in 1..=2 {
                for stage in 1..=3 {
                    crashes.push(format!(r#"{{"name": "crash_at_progress", "peer": {p}, "phase": {phase}, "stage": {stage}}}"#));
                }
            }
            for kind in ["stage1", "stage2_req", "stage2_resp", "final"] {
                for after in [0, 1, k / 2, k - 2] {
                    crashes.push(format!(
                        r#"{{"name": "crash_midsend", "peer": {p}, "after": {after}, "kind": "{kind}"}}"#
                    ));
                }
            }
            for time in [0.0, 0.5, 1.5, 3.0, 6.0] {
                crashes.push(format!(r#"{{"name": "crash_at_time", "peer": {p}, "time": {time}}}"#));
            }
        }
        let mut configs: Vec<String> = Vec::new();
        for lat in lats {
            for c in &crashes {
                configs.push(format!(
                    r#"{{"protocol": "crash1", "n": {n}, "k": {k}, "adversary": [{lat}, {c}], "seeds": "0..1"}}"#
                ));
            }
        }
        configs.push(format!(
            r#"{{"protocol": "crash1", "n": {n}, "k": {k},
                "adversary": ["seeded_random", {{"name": "random_crashes"}}], "seeds": "0..499"}}"#
        ));
        let bound = single_crash_bound(n, k);
        for cfg in configs {
            let sc = scenario(&cfg);
            for out in run_all(&sc) {
                runs += 1;
                wrong += usize::from(!out.trace().all_correct());
                over += usize::from(out.report.q_max > bound);
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    s.must(wrong == 0, || format!("single crash: {wrong} incorrect runs"));
    let pass = wrong == 0 && over == 0 && secs < 60.0;
    s.report(1, pass, t0, format!("single crash: {runs} runs, {wrong} incorrect, {over} over ⌈n/k⌉+⌈n/(k(k−1))⌉"));
}

fn c2(s: &mut Suite) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, k, f) in [(1024, 4, 2), (1024, 8, 6), (4096, 16, 12), (4096, 16, 1)] {
        let top = termination_phase(n, k, f);
        let bound = multi_crash_bound(n, k, f);
        let full = full_read_bound(n, k, f);
        let outs: Vec<(u64, bool, u32, usize, usize, bool)> = (0..1000u64)
            .into_par_iter()
            .map(|seed| {
                let lat = ["seeded_random", "max_latency"][seed as usize % 2];
                let horizon = [2, 8, 64][seed as usize % 3];
                let sc = scenario(&format!(
                    r#"{{"protocol": "crashF", "n": {n}, "k": {k}, "f": {f}, "check": "full",
                        "adversary": ["{lat}", {{"name": "random_crashes", "horizon": {horizon}}}], "seed": {seed}}}"#
                ));
                let out = run_seed(&sc, seed).unwrap();
                let t = out.trace();
                let v = unknown_bound_violations(t, f);
                let last = max_phase(t).unwrap_or(0);
                (
                    out.report.q_max,
                    t.all_correct(),
                    last,
                    v.len(),
                    v.iter().filter(|x| x.1 != last).count(),
                    assignment_coherence(t).is_ok(),
                )
            })
            .collect();
        let wrong = outs.iter().filter(|o| !o.1).count();
        let q = outs.iter().map(|o| o.0).max().unwrap();
        let over = outs.iter().filter(|o| o.0 > bound).count();
        let over_full = outs.iter().filter(|o| o.0 > full).count();
        let phases = outs.iter().map(|o| o.2).max().unwrap();
        let inv = outs.iter().filter(|o| o.3 > 0).count();
        let inv_early = outs.iter().filter(|o| o.4 > 0).count();
        let incoherent = outs.iter().filter(|o| !o.5).count();
        s.must(wrong == 0 && incoherent == 0, || format!("multi crash ({n},{k},{f}): {wrong} incorrect, {incoherent} incoherent"));
        s.must(phases <= top, || format!("multi crash ({n},{k},{f}): phase {phases} > {top}"));
        pass &= wrong == 0 && over == 0 && phases <= top && inv == 0;
        parts.push(format!(
            "({n},{k},{f}) Q_max {q}/{bound} over in {over}, full-read bound {full} over in {over_full}, \
             phases {phases}/{top}, unknown bound broken in {inv} ({inv_early} before the last phase)"
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    s.report(2, pass, t0, format!("f crashes, 1000 seeds each, all correct and coherent: {}", parts.join("; ")));
}

fn c3(s: &mut Suite) {
    let t0 = Instant::now();
    let (n, k, f, phi) = (4096usize, 8usize, 6usize, 64u64);
    let scale = n as f64 / phi as f64 + (phi as f64).ln() / (k as f64 / f as f64).ln();
    let crashes = [
        String::new(),
        r#", {"name": "random_crashes"}"#.to_string(),
        r#", {"name": "random_crashes", "horizon": 60}"#.to_string(),
        r#", {"name": "crash_at_progress", "peer": 1, "phase": 0, "stage": 2}, {"name": "crash_at_progress", "peer": 2, "phase": 1, "stage": 3}"#.to_string(),
    ];
    let (mut runs, mut slower, mut wrong) = (0, 0, 0);
    let mut c_max: f64 = 0.0;
    for extra in &crashes {
        let cfg = |p: &str| {
            format!(
                r#"{{"protocol": "{p}", "n": {n}, "k": {k}, "f": {f}, "phi": {phi},
                    "adversary": ["max_latency"{extra}], "seeds": "0..24"}}"#
            )
        };
        let plain = run_all(&scenario(&cfg("crashF")));
        let opt = run_all(&scenario(&cfg("crashF_opt")));
        for (a, b) in plain.iter().zip(&opt) {
            runs += 1;
            wrong += usize::from(!a.trace().all_correct() || !b.trace().all_correct());
            slower += usize::from(b.report.t > a.report.t + 1e-9);
            c_max = c_max.max(b.report.t / scale);
        }
    }
    s.must(wrong == 0, || format!("time-optimized: {wrong} incorrect"));
    let pass = wrong == 0 && slower == 0 && c_max <= 8.0;
    s.report(
        3,
        pass,
        t0,
        format!(
            "time-optimized vs plain, n=4096 k=8 f=6 φ=64: {runs} trace pairs, {wrong} incorrect, optimized slower in {slower}; \
             fitted C = max T/(n/φ + log_(k/f) φ) = {c_max:.2}"
        ),
    );
}

fn c4(s: &mut Suite) {
    let t0 = Instant::now();
    let (mut runs, mut wrong, mut over) = (0, 0, 0);
    let mut qs = Vec::new();
    for (n, k, f) in [(100, 10, 4), (1024, 16, 7)] {
        let mut q = 0;
        for mode in ["byz_flip", "byz_equivocate", "byz_silent"] {
            let sc = scenario(&format!(
                r#"{{"protocol": "byz_committee", "n": {n}, "k": {k}, "f": {f},
                    "adversary": ["seeded_random", "{mode}"], "seeds": "0..299"}}"#
            ));
            for out in run_all(&sc) {
                runs += 1;
                wrong += usize::from(!out.trace().all_correct());
                over += usize::from(out.report.q_max > committee_bound(n, k, f));
                q = q.max(out.report.q_max);
            }
        }
        qs.push(format!("({n},{k},{f}) Q_max {q}/{}", committee_bound(n, k, f)));
    }
    s.must(wrong == 0, || format!("committee: {wrong} incorrect"));
    s.report(4, wrong == 0 && over == 0, t0, format!("committee: {runs} runs, {wrong} incorrect, {over} over bound; {}", qs.join(", ")));
}

fn c5(s: &mut Suite) {
    let t0 = Instant::now();
    let mut bad = 0u64;
    let check = |set: &[Vec<u32>], truth: &[u32], offset: usize| -> bool {
        let tree = build_tree(set).unwrap();
        let mut asked = Vec::new();
        let got = determine(&tree, offset, |i| {
            asked.push(i);
            truth[i - offset]
        });
        // brute force: the only member of S agreeing with the truth on every read cell
        let agree: Vec<&Vec<u32>> =
            set.iter().filter(|c| asked.iter().all(|&i| c[i - offset] == truth[i - offset])).collect();
        got.as_deref() == Ok(truth) && asked.len() == set.len() - 1 && agree.len() == 1
    };
    let mut exhaustive = 0u64;
    for l in 1..=4usize {
        let all: Vec<Vec<u32>> = (0..1u32 << l).map(|v| (0..l).map(|b| (v >> (l - 1 - b)) & 1).collect()).collect();
        for mask in 1u32..(1 << all.len()) {
            let set: Vec<Vec<u32>> = (0..all.len()).filter(|&i| mask >> i & 1 == 1).map(|i| all[i].clone()).collect();
            for truth in &set {
                exhaustive += 1;
                bad += u64::from(!check(&set, truth, 1));
            }
        }
    }
    let mut rng = retrieval::rng::stream(5, 0);
    use rand::Rng;
    for _ in 0..10_000 {
        let size = rng.gen_range(1..=40);
        let mut set: Vec<Vec<u32>> = (0..size).map(|_| (0..64).map(|_| rng.gen_range(0..2)).collect()).collect();
        // near-duplicates make the splits deep
        if rng.gen_bool(0.5) {
            let base = set[0].clone();
            for s in set.iter_mut().skip(1) {
                *s = base.clone();
                let flips = rng.gen_range(1..4);
                for _ in 0..flips {
                    let i = rng.gen_range(0..64);
                    s[i] ^= 1;
                }
            }
        }
        set.sort();
        set.dedup();
        let truth = set[rng.gen_range(0..set.len())].clone();
        bad += u64::from(!check(&set, &truth, rng.gen_range(1..1000)));
    }
    s.must(bad == 0, || format!("decision trees: {bad} bad cases"));
    let pass = bad == 0 && t0.elapsed().as_secs_f64() < 60.0;
    s.report(
        5,
        pass,
        t0,
        format!("decision trees: {exhaustive} exhaustive cases with L ≤ 4 and 10000 random at L = 64, {bad} wrong or off |S|−1"),
    );
}

fn c6(s: &mut Suite) {
    let t0 = Instant::now();
    let sc = scenario(
        r#"{"protocol": "byz_2cycle", "n": 512, "k": 128, "beta": 0.2, "seg_len": 256,
            "adversary": ["seeded_random", "byz_flood"], "seeds": "0..999"}"#,
    );
    let p = sc.rand_params().unwrap();
    let t = p.threshold_at(0);
    let cap = p.seg_len as u64 + (sc.k as f64 / t).ceil() as u64;
    let outs = run_lean(&sc);
    let (mut premise, mut cond_fail, mut uncond_fail, mut over) = (0, 0, 0, 0);
    let mut q = 0;
    for out in &outs {
        let ok = out.correct;
        uncond_fail += usize::from(!ok);
        if out.report.premise_holds == Some(true) {
            premise += 1;
            cond_fail += usize::from(!ok);
            over += usize::from(out.report.q_max > cap);
            q = q.max(out.report.q_max);
        }
    }
    s.audit(&outs);
    s.must(cond_fail == 0, || format!("two-cycle: {cond_fail} failures with the premise holding"));
    let pass = cond_fail == 0 && over == 0;
    s.report(
        6,
        pass,
        t0,
        format!(
            "two-cycle, n=512 k=128 K={} t={t:.1}, flooding: premise held in {premise}/1000, {cond_fail} conditional failures, \
             Q_max {q} ≤ φ_seg+⌈k/t⌉ = {cap} ({over} over), unconditional failure rate {:.3}",
            p.segs,
            uncond_fail as f64 / 1000.0
        ),
    );
}

fn c7(s: &mut Suite) {
    let t0 = Instant::now();
    let sc = scenario(
        r#"{"protocol": "byz_multicycle", "n": 16384, "k": 256, "beta": 0.25, "seg_len": 1024,
            "adversary": ["seeded_random", "byz_flood"], "seeds": "0..499"}"#,
    );
    let p = sc.rand_params().unwrap();
    let want = p.last_cycle() + 1;
    let outs = run_lean(&sc);
    let cycles_ok = outs.iter().all(|o| o.report.cycles == Some(want));
    let dets: Vec<f64> = outs.iter().filter_map(|o| o.report.det_queries_mean).collect();
    let mean = dets.iter().sum::<f64>() / dets.len().max(1) as f64;
    let limit = 8.0 / (p.gamma() - p.beta);
    let premise = outs.iter().filter(|o| o.report.premise_holds == Some(true)).count();
    let cond_fail = outs.iter().filter(|o| o.report.premise_holds == Some(true) && !o.correct).count();
    let fail = outs.iter().filter(|o| !o.correct).count();
    s.audit(&outs);
    s.must(cond_fail == 0, || format!("multi-cycle: {cond_fail} failures with the premise holding"));
    let pass = cycles_ok && mean <= limit;
    s.report(
        7,
        pass,
        t0,
        format!(
            "multi-cycle, n=2^14 k=256 β=0.25 K={}: cycles = lg K + 1 = {want} in {} of 500, mean tree queries per cycle per peer \
             {mean:.3} ≤ 8/(γ−β) = {limit:.0}; premise held in {premise}, {cond_fail} conditional failures, {fail} failures overall",
            p.segs,
            if cycles_ok { "all" } else { "not all" }
        ),
    );
}

fn c8(s: &mut Suite) {
    let t0 = Instant::now();
    let (mut naive_runs, mut naive_changed, mut mutant_runs, mut mutant_wrong, mut not_attacked) = (0, 0, 0, 0, 0);
    for n in [16, 64, 256] {
        for k in [4, 6, 8] {
            let f = k / 2;
            for target in 1..=k - f {
                for proto in ["naive", "naive_mutant"] {
                    let sc = scenario(&format!(
                        r#"{{"protocol": "{proto}", "n": {n}, "k": {k}, "f": {f},
                            "adversary": {{"name": "lower_bound", "target": {target}}}, "seeds": "0..1"}}"#
                    ));
                    for out in run_all(&sc) {
                        not_attacked += usize::from(!out.attacked);
                        let t = out.trace();
                        let changed = t.nonfaulty().any(|p| p.output.as_deref() != Some(&t.expected[..]));
                        if proto == "naive" {
                            naive_runs += 1;
                            naive_changed += usize::from(changed || !t.all_correct());
                        } else {
                            mutant_runs += 1;
                            mutant_wrong += usize::from(changed);
                        }
                    }
                }
            }
        }
    }
    s.must(naive_changed == 0 && not_attacked == 0, || {
        format!("attack: naive changed in {naive_changed} runs, {not_attacked} runs not attacked")
    });
    let pass = naive_changed == 0 && mutant_wrong >= 1 && not_attacked == 0;
    s.report(
        8,
        pass,
        t0,
        format!(
            "lower-bound attack at β = 1/2: naive output changed in {naive_changed}/{naive_runs} runs, \
             under-querying mutant wrong in {mutant_wrong}/{mutant_runs}"
        ),
    );
}

fn c9(s: &mut Suite) {
    let t0 = Instant::now();
    let (n, k) = (4096usize, 16usize);
    let floor = k as f64 / (4.0 * (n as f64).log2());
    let mut parts = Vec::new();
    let mut pass = true;
    for src in ["inflate", "deflate", "equivocate"] {
        let mut totals = [0u64; 2];
        let mut bad = [0usize; 2];
        for (m, proto) in ["odc_naive", "odc_download"].iter().enumerate() {
            let sc = scenario(&format!(
                r#"{{"protocol": "{proto}", "n": {n}, "k": {k}, "f": 5, "m": 5, "beta_d": 0.4,
                    "source_adversary": "{src}", "adversary": ["seeded_random", "byz_equivocate"], "seeds": "0..199"}}"#
            ));
            for out in run_all(&sc) {
                let odc = out.odc.as_ref().unwrap();
                totals[m] += odc.total_queries;
                bad[m] += usize::from(!out.report.verdict.is_correct());
            }
        }
        let ratio = totals[0] as f64 / totals[1] as f64;
        s.must(bad == [0, 0], || format!("oracle collection ({src}): {bad:?} runs out of range"));
        pass &= bad == [0, 0] && ratio >= floor;
        parts.push(format!("{src}: out of range {}+{}, Naive/Download queries {ratio:.2}", bad[0], bad[1]));
    }
    s.report(
        9,
        pass,
        t0,
        format!("oracle collection m=5 β_d=0.4 n=2^12 k=16, 200 seeds per source adversary and mode: {}; floor k/(4 log2 n) = {floor:.3}", parts.join("; ")),
    );
}

fn c10(s: &mut Suite) {
    let t0 = Instant::now();
    let configs = [
        r#"{"protocol": "crash1", "n": 120, "k": 4, "adversary": ["seeded_random", {"name": "random_crashes"}], "seeds": "0..19"}"#,
        r#"{"protocol": "crashF", "n": 1024, "k": 8, "f": 6, "check": "full", "adversary": ["seeded_random", {"name": "random_crashes"}], "seeds": "0..19"}"#,
        r#"{"protocol": "crashF_opt", "n": 1024, "k": 8, "f": 6, "phi": 64, "adversary": ["max_latency", {"name": "random_crashes"}], "seeds": "0..19"}"#,
        r#"{"protocol": "byz_committee", "n": 100, "k": 10, "f": 4, "adversary": ["seeded_random", "byz_equivocate"], "seeds": "0..19"}"#,
        r#"{"protocol": "byz_2cycle", "n": 512, "k": 128, "beta": 0.2, "seg_len": 256, "adversary": ["seeded_random", {"name": "byz_flood", "count": 12}, {"name": "cycle_crashes", "count": 10}], "seeds": "0..19"}"#,
        r#"{"protocol": "byz_multicycle", "n": 4096, "k": 128, "beta": 0.2, "seg_len": 256, "adversary": ["seeded_random", {"name": "byz_flip", "count": 12}, {"name": "cycle_crashes", "count": 12}], "seeds": "0..19"}"#,
        r#"{"protocol": "naive_mutant", "n": 64, "k": 6, "f": 3, "adversary": {"name": "lower_bound", "target": 2}, "seeds": "0..19"}"#,
        r#"{"protocol": "odc_download", "n": 256, "k": 16, "f": 5, "m": 5, "beta_d": 0.4, "source_adversary": "equivocate", "adversary": "byz_flip", "seeds": "0..19"}"#,
    ];
    let mut differ = 0;
    let mut traces = 0;
    for cfg in configs {
        let sc = scenario(cfg);
        let check: Vec<(usize, bool, Vec<Lean>)> = sc
            .seeds
            .par_iter()
            .map(|&seed| {
                let a = run_seed_with(&sc, seed, true).unwrap();
                let b = run_seed_with(&sc, seed, true).unwrap();
                let same = a.traces.len() == b.traces.len()
                    && a.traces.iter().zip(&b.traces).all(|(x, y)| x.to_json() == y.to_json());
                let keep: Vec<Lean> = if sc.protocol.is_randomized() {
                    a.traces.iter().map(|t| lean(t, a.report.clone())).collect()
                } else {
                    Vec::new()
                };
                (a.traces.len(), same, keep)
            })
            .collect();
        for (count, same, keep) in check {
            traces += count;
            differ += usize::from(!same);
            s.audit(&keep);
        }
    }
    // crashes placed by the cycle-boundary strategy, at volume
    for cfg in [
        r#"{"protocol": "byz_2cycle", "n": 512, "k": 128, "beta": 0.2, "seg_len": 256, "adversary": ["seeded_random", {"name": "byz_flood", "count": 12}, {"name": "cycle_crashes", "count": 13}], "seeds": "100..399"}"#,
        r#"{"protocol": "byz_multicycle", "n": 2048, "k": 128, "beta": 0.25, "seg_len": 128, "adversary": ["seeded_random", {"name": "byz_equivocate", "count": 16}, {"name": "cycle_crashes", "count": 16}], "seeds": "100..299"}"#,
    ] {
        let runs = run_lean(&scenario(cfg));
        s.audit(&runs);
    }
    let (audited, crashes, audit_bad) = s.audited;
    s.must(differ == 0, || format!("determinism: {differ} reruns differ"));
    s.must(audit_bad == 0, || format!("audits: {audit_bad} randomized traces fail"));
    s.report(
        10,
        differ == 0 && audit_bad == 0,
        t0,
        format!(
            "determinism: {traces} traces rerun, {differ} differ; cycle-contract and crash-legality audits on {audited} randomized traces \
             ({crashes} crashes), {audit_bad} fail"
        ),
    );
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut s = Suite { lines: Vec::new(), broken: Vec::new(), audited: (0, 0, 0) };
    let all: [(u32, fn(&mut Suite)); 10] =
        [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8), (9, c9), (10, c10)];
    for (id, f) in all {
        if only.is_empty() || only.contains(&id) {
            f(&mut s);
        }
    }
    let passed = s.lines.iter().filter(|l| l.contains(" PASS ")).count();
    println!("{passed}/{} criteria pass", s.lines.len());
    if !s.broken.is_empty() {
        eprintln!("{} hard failures", s.broken.len());
        std::process::exit(1);
    }
}
