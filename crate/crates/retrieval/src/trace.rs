//! Execution traces and the data protocols attach to them.

use serde::{Deserialize, Serialize};

use crate::sim::{Time, UNIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    Crashed,
    Byzantine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerRecord {
    pub id: u32,
    pub role: Role,
    /// Source indices in the order they were queried.
    pub queries: Vec<usize>,
    pub query_count: u64,
    pub sent_msgs: u64,
    pub sent_bits: u64,
    pub recv_msgs: u64,
    pub recv_bits: u64,
    pub terminated_at: Option<Time>,
    pub crashed_at: Option<Time>,
    pub output: Option<Vec<u32>>,
    /// Set when the peer's protocol gave up (e.g. an empty frequent set).
    pub failure: Option<String>,
}

impl PeerRecord {
    pub fn new(id: u32, role: Role) -> Self {
        PeerRecord {
            id,
            role,
            queries: Vec::new(),
            query_count: 0,
            sent_msgs: 0,
            sent_bits: 0,
            recv_msgs: 0,
            recv_bits: 0,
            terminated_at: None,
            crashed_at: None,
            output: None,
            failure: None,
        }
    }

    /// Neither crashed nor byzantine.
    pub fn nonfaulty(&self) -> bool {
        self.role == Role::Honest
    }
}

/// Invariant data a protocol declares at phase or cycle boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Snapshot {
    /// Start of a phase of a crash-tolerant protocol.
    PhaseStart {
        peer: u32,
        phase: u32,
        unknown: usize,
        /// 1-based owner per cell, 0 for cells already known; only at full checking.
        #[serde(skip_serializing_if = "Option::is_none")]
        assignment: Option<Vec<u16>>,
    },
    /// Known cells right after stage 1 of a phase; only at full checking.
    AfterStage1 { peer: u32, phase: u32, known: Vec<bool> },
    /// Outcome of stage 3: the peer still missing bits of `missing`, if any.
    Stage3 { peer: u32, phase: u32, missing: Option<u32>, reassigned: bool },
    /// One cycle of a randomized protocol.
    Cycle {
        peer: u32,
        cycle: u32,
        /// Queries spent resolving decision trees in this cycle.
        determination_queries: u64,
        /// Number of distinct senders counted in the wait that ended the cycle.
        heard: usize,
    },
    /// Whether each segment was picked by enough honest heard-from peers.
    HonestPicks { peer: u32, cycle: u32, premise_holds: bool, min_picks: usize, threshold: f64 },
}

impl Snapshot {
    pub fn peer(&self) -> u32 {
        match self {
            Snapshot::PhaseStart { peer, .. }
            | Snapshot::AfterStage1 { peer, .. }
            | Snapshot::Stage3 { peer, .. }
            | Snapshot::Cycle { peer, .. }
            | Snapshot::HonestPicks { peer, .. } => *peer,
        }
    }
}

/// Engine bookkeeping used by the cycle-contract and crash-legality audits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    /// `(cycle, event number)` at which the adversary fixed that cycle's latencies.
    pub latency_fixed: Vec<(u32, u64)>,
    /// `(cycle, event number)` of the first delivery of a message sent in that cycle.
    pub first_delivery: Vec<(u32, u64)>,
    /// `(cycle, event number)` at which the first peer entered that cycle.
    pub first_start: Vec<(u32, u64)>,
    /// Latency lookups for cycles that were not yet fixed.
    pub unfixed_lookups: u64,
    pub crashes: Vec<CrashRecord>,
    /// Quiescence releases forced on the adversary.
    pub forced_releases: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub peer: u32,
    pub time: Time,
    pub event: u64,
    /// The crash happened exactly at one of the peer's cycle boundaries.
    pub at_cycle_boundary: bool,
}

/// One processed event, kept only when event logging is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub time: Time,
    pub kind: String,
    pub peer: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub scenario: serde_json::Value,
    pub n: usize,
    pub k: usize,
    pub expected: Vec<u32>,
    pub peers: Vec<PeerRecord>,
    pub events: u64,
    pub end_time: Time,
    pub snapshots: Vec<Snapshot>,
    pub audit: AuditLog,
    /// Deliveries dropped because the receiver had crashed or terminated.
    pub dropped: u64,
    /// Envelopes between two never-crashed peers that were never delivered.
    pub undelivered: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub event_log: Vec<EventRecord>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Deadlock,
    Livelock,
    Aborted,
}

impl ExecutionTrace {
    pub fn nonfaulty(&self) -> impl Iterator<Item = &PeerRecord> {
        self.peers.iter().filter(|p| p.nonfaulty())
    }

    /// Every nonfaulty peer terminated with the expected output.
    pub fn all_correct(&self) -> bool {
        self.outcome == Outcome::Completed
            && self.nonfaulty().all(|p| p.output.as_deref() == Some(&self.expected[..]))
    }

    pub fn q_max(&self) -> u64 {
        self.nonfaulty().map(|p| p.query_count).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    pub fn time_units(t: Time) -> f64 {
        t as f64 / UNIT as f64
    }
}
