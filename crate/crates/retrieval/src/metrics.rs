//! Per-execution complexity reports and their aggregation over seeds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::{ExecutionTrace, Outcome, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    /// Terminated normally but some nonfaulty output differs from the input.
    Incorrect,
    /// A randomized protocol gave up (e.g. an empty frequent set).
    ProtocolFailure,
    Deadlock,
    Livelock,
    Aborted,
}

impl Verdict {
    pub fn of(trace: &ExecutionTrace) -> Verdict {
        match trace.outcome {
            Outcome::Deadlock => Verdict::Deadlock,
            Outcome::Livelock => Verdict::Livelock,
            Outcome::Aborted => Verdict::Aborted,
            Outcome::Completed => {
                if trace.nonfaulty().any(|p| p.failure.is_some()) {
                    Verdict::ProtocolFailure
                } else if trace.all_correct() {
                    Verdict::Correct
                } else {
                    Verdict::Incorrect
                }
            }
        }
    }

    pub fn is_correct(self) -> bool {
        self == Verdict::Correct
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Correct => "correct",
            Verdict::Incorrect => "incorrect",
            Verdict::ProtocolFailure => "protocol_failure",
            Verdict::Deadlock => "deadlock",
            Verdict::Livelock => "livelock",
            Verdict::Aborted => "aborted",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// Max queries over nonfaulty peers.
    pub q_max: u64,
    /// Queries per peer, faulty peers included (`None` for them).
    pub q_per_peer: Vec<Option<u64>>,
    /// Messages (packets) sent by nonfaulty peers.
    pub m_total: u64,
    pub m_bits: u64,
    /// Last nonfaulty termination, in time units.
    pub t: f64,
    pub verdict: Verdict,
    /// Highest phase any peer started, for phase-based protocols.
    pub phases: Option<u32>,
    /// Number of distinct cycles entered, for cycle-based protocols.
    pub cycles: Option<u32>,
    /// Mean decision-tree queries per cycle per peer, over cycles that resolved trees.
    pub det_queries_mean: Option<f64>,
    /// Whether every segment had enough honest picks, when recorded.
    pub premise_holds: Option<bool>,
}

/// Exact counts from a finished trace.
pub fn summarize(trace: &ExecutionTrace) -> ComplexityReport {
    let q_per_peer = trace.peers.iter().map(|p| p.nonfaulty().then_some(p.query_count)).collect();
    let (mut m_total, mut m_bits) = (0, 0);
    for p in trace.nonfaulty() {
        m_total += p.sent_msgs;
        m_bits += p.sent_bits;
    }
    let t = trace.nonfaulty().filter_map(|p| p.terminated_at).max().unwrap_or(0);

    let mut phases = None;
    let mut cycles = None;
    let (mut det_sum, mut det_n) = (0u64, 0u64);
    let mut premise = None;
    for s in &trace.snapshots {
        match s {
            Snapshot::PhaseStart { phase, .. } => phases = Some(phases.unwrap_or(0).max(*phase)),
            Snapshot::Cycle { cycle, determination_queries, .. } => {
                cycles = Some(cycles.unwrap_or(0).max(*cycle));
                det_sum += determination_queries;
                det_n += 1;
            }
            Snapshot::HonestPicks { premise_holds, .. } => {
                premise = Some(premise.unwrap_or(true) && *premise_holds);
            }
            _ => {}
        }
    }
    if !trace.audit.first_start.is_empty() {
        cycles = Some(trace.audit.first_start.iter().map(|&(c, _)| c).max().unwrap_or(0) + 1);
    }
    ComplexityReport {
        q_max: trace.q_max(),
        q_per_peer,
        m_total,
        m_bits,
        t: ExecutionTrace::time_units(t),
        verdict: Verdict::of(trace),
        phases,
        cycles,
        det_queries_mean: (det_n > 0).then(|| det_sum as f64 / det_n as f64),
        premise_holds: premise,
    }
}

/// Double-entry check: counters agree with the per-peer query logs.
pub fn check_query_ledger(trace: &ExecutionTrace) -> Result<(), String> {
    for p in &trace.peers {
        if p.queries.len() as u64 != p.query_count {
            return Err(format!("peer {}: {} logged queries, counter says {}", p.id, p.queries.len(), p.query_count));
        }
    }
    Ok(())
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub seed: u64,
    pub protocol: String,
    pub n: usize,
    pub k: usize,
    pub f_or_beta: String,
    pub adversary: String,
    pub report: ComplexityReport,
}

pub const CSV_HEADER: &str = "scenario,seed,protocol,n,k,f_or_beta,adversary,q_max,m_total,m_bits,t,verdict";

impl Row {
    pub fn csv(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.6},{}",
            csv_field(&self.scenario),
            self.seed,
            self.protocol,
            self.n,
            self.k,
            self.f_or_beta,
            csv_field(&self.adversary),
            r.q_max,
            r.m_total,
            r.m_bits,
            r.t,
            r.verdict
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub q_mean: f64,
    pub q_max: u64,
    pub q_p95: u64,
    pub q_var: f64,
    pub t_mean: f64,
    pub t_max: f64,
    pub failures: usize,
    pub failure_rate: f64,
}

/// Deterministic aggregation; `None` on an empty list.
pub fn aggregate(reports: &[ComplexityReport]) -> Option<Aggregate> {
    if reports.is_empty() {
        return None;
    }
    let runs = reports.len();
    let mut qs: Vec<u64> = reports.iter().map(|r| r.q_max).collect();
    qs.sort_unstable();
    let q_mean = qs.iter().sum::<u64>() as f64 / runs as f64;
    let q_var = qs.iter().map(|&q| (q as f64 - q_mean).powi(2)).sum::<f64>() / runs as f64;
    // nearest-rank percentile
    let rank = ((0.95 * runs as f64).ceil() as usize).clamp(1, runs);
    let failures = reports.iter().filter(|r| !r.verdict.is_correct()).count();
    Some(Aggregate {
        runs,
        q_mean,
        q_max: *qs.last().expect("non-empty"),
        q_p95: qs[rank - 1],
        q_var,
        t_mean: reports.iter().map(|r| r.t).sum::<f64>() / runs as f64,
        t_max: reports.iter().map(|r| r.t).fold(0.0, f64::max),
        failures,
        failure_rate: failures as f64 / runs as f64,
    })
}
