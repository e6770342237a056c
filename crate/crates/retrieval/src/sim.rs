//! Deterministic discrete-event engine.
//!
//! Time is an integer count of microseconds; `UNIT` is the largest latency
//! an honest delivery may take. Events are ordered by `(time, seq)` where
//! `seq` is assigned on insertion.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, CrashRule, HeldInfo, Latency, LatencyQuery, View};
use crate::error::{ConfigError, SimError};
use crate::model::{Encoding, Source};
use crate::rng::stream;
use crate::trace::{
    AuditLog, CrashRecord, EventRecord, ExecutionTrace, Outcome, PeerRecord, Role, Snapshot,
};

pub type Time = u64;
pub const UNIT: Time = 1_000_000;

pub fn units(t: f64) -> Time {
    (t * UNIT as f64).round() as Time
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    Off,
    #[default]
    Bounds,
    Full,
}

/// A protocol payload.
pub trait Message: Clone {
    fn size_bits(&self, enc: &Encoding) -> u64;
    fn kind(&self) -> &'static str;
    /// Cycle the message was sent in, for cycle-based protocols.
    fn cycle(&self) -> Option<u32> {
        None
    }
}

/// One peer's protocol logic. Handlers see only their own state, the
/// delivered payload and their private rng stream.
pub trait Handler<M: Message> {
    fn start(&mut self, cx: &mut Cx<'_, M>);
    fn deliver(&mut self, from: usize, msg: M, cx: &mut Cx<'_, M>);
    /// True while the peer is blocked on a wait predicate.
    fn waiting(&self) -> bool;
    /// Called on a waiting peer once nothing is in flight or held anywhere.
    fn stalled(&mut self, _cx: &mut Cx<'_, M>) {}
}

pub(crate) enum Action<M> {
    Send { to: usize, msg: M },
    Progress { phase: u32, stage: u32 },
    Cycle(u32),
    Terminate(Vec<u32>),
    Snapshot(Snapshot),
}

/// What a handler may do during one step.
pub struct Cx<'a, M> {
    me: usize,
    k: usize,
    now: Time,
    check: CheckLevel,
    source: &'a dyn Source,
    rng: &'a mut ChaCha8Rng,
    pub(crate) actions: Vec<Action<M>>,
    queries: Vec<usize>,
    failure: Option<String>,
    abort: Option<String>,
}

impl<'a, M> Cx<'a, M> {
    pub fn me(&self) -> usize {
        self.me
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn check(&self) -> CheckLevel {
        self.check
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// Query cell `i` (1-based) of the source. Charged to this peer.
    pub fn query(&mut self, i: usize) -> u32 {
        match self.source.read(self.me, i) {
            Some(v) => {
                self.queries.push(i);
                v
            }
            None => {
                self.abort(format!("query of index {i} outside 1..={}", self.source.n()));
                0
            }
        }
    }

    pub fn send(&mut self, to: usize, msg: M) {
        debug_assert!(to != self.me, "peers do not message themselves");
        self.actions.push(Action::Send { to, msg });
    }

    /// Send `msg` to every other peer.
    pub fn broadcast(&mut self, msg: M)
    where
        M: Clone,
    {
        for to in 0..self.k {
            if to != self.me {
                self.actions.push(Action::Send { to, msg: msg.clone() });
            }
        }
    }

    /// Mark entry into `(phase, stage)`; crash rules keyed on progress fire here.
    pub fn progress(&mut self, phase: u32, stage: u32) {
        self.actions.push(Action::Progress { phase, stage });
    }

    /// Mark entry into cycle `r`.
    pub fn enter_cycle(&mut self, r: u32) {
        self.actions.push(Action::Cycle(r));
    }

    pub fn terminate(&mut self, output: Vec<u32>) {
        self.actions.push(Action::Terminate(output));
    }

    pub fn snapshot(&mut self, s: Snapshot) {
        self.actions.push(Action::Snapshot(s));
    }

    /// Record that the protocol gave up on a correct output. The peer still
    /// terminates with whatever it produced.
    pub fn fail(&mut self, reason: impl Into<String>) {
        if self.failure.is_none() {
            self.failure = Some(reason.into());
        }
    }

    /// Stop the whole execution: something happened that the model rules out.
    pub fn abort(&mut self, reason: impl Into<String>) {
        if self.abort.is_none() {
            self.abort = Some(reason.into());
        }
    }

    pub(crate) fn sends_since(&self, start: usize) -> Vec<(usize, M)>
    where
        M: Clone,
    {
        self.actions[start..]
            .iter()
            .filter_map(|a| match a {
                Action::Send { to, msg } => Some((*to, msg.clone())),
                _ => None,
            })
            .collect()
    }

    /// Rewrite or drop the sends emitted so far in this step.
    pub fn rewrite_sends(&mut self, mut f: impl FnMut(usize, M) -> Option<M>) {
        let actions = std::mem::take(&mut self.actions);
        for a in actions {
            match a {
                Action::Send { to, msg } => {
                    if let Some(m) = f(to, msg) {
                        self.actions.push(Action::Send { to, msg: m });
                    }
                }
                other => self.actions.push(other),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Message-size cap in bits.
    pub phi: u64,
    /// Each directed link carries one packet per time unit.
    pub pacing: bool,
    pub event_cap: u64,
    /// Cycle-based protocol: latencies fixed per cycle, crashes only at
    /// cycle boundaries.
    pub cycles: bool,
    pub record_events: bool,
    pub check: CheckLevel,
    /// Largest number of peers the adversary may crash.
    pub max_crashes: usize,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            phi: 512,
            pacing: true,
            event_cap: 10_000_000,
            cycles: false,
            record_events: false,
            check: CheckLevel::Bounds,
            max_crashes: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvKind {
    Start(usize),
    Packet { msg: u64, seq_no: u32 },
    Crash(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ev {
    time: Time,
    seq: u64,
    kind: EvKind,
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct InFlight<M> {
    msg: Option<M>,
    from: usize,
    to: usize,
    total: u32,
    arrived: u32,
    bits: u64,
    cycle: Option<u32>,
}

#[derive(Clone, Copy)]
struct Held {
    msg: u64,
    seq_no: u32,
    from: usize,
    to: usize,
}

#[derive(Default, Clone, Copy)]
struct Status {
    crashed: bool,
    terminated: bool,
    byzantine: bool,
}

impl Status {
    fn active(&self) -> bool {
        !self.crashed && !self.terminated
    }
}

/// One execution: handlers, adversary, source and bookkeeping.
pub struct Engine<'a, M: Message> {
    cfg: EngineConfig,
    enc: Encoding,
    k: usize,
    source: &'a dyn Source,
    handlers: Vec<Box<dyn Handler<M> + 'a>>,
    adversary: Box<dyn Adversary + 'a>,
    rngs: Vec<ChaCha8Rng>,
    adv_rng: ChaCha8Rng,
    status: Vec<Status>,
    honest_left: usize,
    records: Vec<PeerRecord>,
    queue: BinaryHeap<Reverse<Ev>>,
    next_seq: u64,
    next_msg: u64,
    in_flight: HashMap<u64, InFlight<M>>,
    held: Vec<Held>,
    link_free: Vec<Time>,
    now: Time,
    events: u64,
    crash_rules: Vec<CrashRule>,
    sent_by_kind: Vec<HashMap<&'static str, u64>>,
    cycle_fixed: Vec<bool>,
    cycle_started: Vec<bool>,
    cycle_delivered: Vec<bool>,
    audit: AuditLog,
    snapshots: Vec<Snapshot>,
    event_log: Vec<EventRecord>,
    dropped: u64,
    scenario: serde_json::Value,
    expected: Vec<u32>,
}

impl<'a, M: Message> Engine<'a, M> {
    /// `byzantine[i]` marks peers whose handlers the adversary supplied.
    pub fn new(
        cfg: EngineConfig,
        source: &'a dyn Source,
        expected: Vec<u32>,
        handlers: Vec<Box<dyn Handler<M> + 'a>>,
        byzantine: &[bool],
        adversary: Box<dyn Adversary + 'a>,
    ) -> Result<Self, ConfigError> {
        let k = handlers.len();
        if k == 0 {
            return Err(ConfigError::Constraint("k >= 1".into()));
        }
        if byzantine.len() != k {
            return Err(ConfigError::Invalid("byzantine mask length must equal k".into()));
        }
        if cfg.phi == 0 {
            return Err(ConfigError::Constraint("phi >= 1".into()));
        }
        let crash_rules = adversary.crash_rules();
        let mut victims: Vec<usize> = crash_rules.iter().map(|r| r.peer()).collect();
        victims.sort_unstable();
        victims.dedup();
        if victims.len() > cfg.max_crashes {
            return Err(ConfigError::Constraint(format!(
                "adversary crashes {} peers, at most f = {} allowed",
                victims.len(),
                cfg.max_crashes
            )));
        }
        if let Some(&v) = victims.iter().find(|&&v| v >= k) {
            return Err(ConfigError::Invalid(format!("crash target {} outside 1..={k}", v + 1)));
        }
        if victims.iter().any(|&v| byzantine[v]) {
            return Err(ConfigError::Constraint("crashed and byzantine sets are disjoint".into()));
        }
        if cfg.cycles && crash_rules.iter().any(|r| !matches!(r, CrashRule::AtCycle { .. })) {
            return Err(ConfigError::Constraint(
                "cycle-based protocols allow crashes only at cycle boundaries".into(),
            ));
        }
        let enc = Encoding::new(source.n(), k, source.width());
        let rngs = (0..k).map(|i| stream(cfg.seed, i as u64 + 1)).collect();
        let adv_rng = stream(cfg.seed, 0);
        let status = byzantine.iter().map(|&b| Status { byzantine: b, ..Status::default() }).collect();
        let records = (0..k)
            .map(|i| {
                PeerRecord::new(i as u32 + 1, if byzantine[i] { Role::Byzantine } else { Role::Honest })
            })
            .collect();
        let honest_left = byzantine.iter().filter(|&&b| !b).count();
        let link_free = if cfg.pacing { vec![0; k * k] } else { Vec::new() };
        Ok(Engine {
            cfg,
            enc,
            k,
            source,
            handlers,
            adversary,
            rngs,
            adv_rng,
            status,
            honest_left,
            records,
            queue: BinaryHeap::new(),
            next_seq: 0,
            next_msg: 0,
            in_flight: HashMap::new(),
            held: Vec::new(),
            link_free,
            now: 0,
            events: 0,
            crash_rules,
            sent_by_kind: vec![HashMap::new(); k],
            cycle_fixed: Vec::new(),
            cycle_started: Vec::new(),
            cycle_delivered: Vec::new(),
            audit: AuditLog::default(),
            snapshots: Vec::new(),
            event_log: Vec::new(),
            dropped: 0,
            scenario: serde_json::Value::Null,
            expected,
        })
    }

    pub fn with_scenario(mut self, scenario: serde_json::Value) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn encoding(&self) -> Encoding {
        self.enc
    }

    fn push(&mut self, time: Time, kind: EvKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Ev { time, seq, kind }));
    }

    fn honest_active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(|&i| !self.status[i].byzantine && self.status[i].active())
    }

    /// Run to completion.
    pub fn run(mut self) -> Result<ExecutionTrace, SimError> {
        for i in 0..self.k {
            self.push(0, EvKind::Start(i));
        }
        let timed: Vec<(usize, Time)> = self
            .crash_rules
            .iter()
            .filter_map(|r| match *r {
                CrashRule::AtTime { peer, time } => Some((peer, time)),
                _ => None,
            })
            .collect();
        for (peer, t) in timed {
            self.push(t, EvKind::Crash(peer));
        }

        let mut draining = false;
        loop {
            if !draining && self.honest_left == 0 {
                // every nonfaulty peer is done; flush what is still in flight
                draining = true;
                let all: Vec<usize> = (0..self.held.len()).collect();
                self.release(&all, false);
            }
            let ev = match self.queue.pop() {
                Some(Reverse(ev)) => ev,
                None => {
                    if draining {
                        break;
                    }
                    if self.held.is_empty() {
                        let before = (self.honest_left, self.queue.len());
                        let stuck: Vec<usize> = self.honest_active().collect();
                        for p in stuck {
                            self.log("stalled", p, None, None);
                            if let Err((peer, reason)) = self.step(p, |h, cx| h.stalled(cx)) {
                                let trace = Box::new(self.finish(Outcome::Aborted));
                                return Err(SimError::Abort { peer: peer as u32 + 1, reason, trace });
                            }
                        }
                        if (self.honest_left, self.queue.len()) != before {
                            continue;
                        }
                        let blocked = self.honest_active().count();
                        let time = self.now as f64 / UNIT as f64;
                        let trace = Box::new(self.finish(Outcome::Deadlock));
                        return Err(SimError::DeadlockDetected { blocked, time, trace });
                    }
                    self.quiescence_release();
                    continue;
                }
            };
            self.events += 1;
            if self.events > self.cfg.event_cap {
                let cap = self.cfg.event_cap;
                let trace = Box::new(self.finish(Outcome::Livelock));
                return Err(SimError::LivelockGuard { cap, trace });
            }
            self.now = ev.time;
            if let Err((peer, reason)) = self.dispatch(ev) {
                let trace = Box::new(self.finish(Outcome::Aborted));
                return Err(SimError::Abort { peer: peer as u32 + 1, reason, trace });
            }
            if !draining && !self.held.is_empty() {
                let view = View {
                    now: self.now,
                    terminated: &self.status.iter().map(|s| s.terminated).collect::<Vec<_>>(),
                    crashed: &self.status.iter().map(|s| s.crashed).collect::<Vec<_>>(),
                };
                let info = self.held_info();
                let picks = self.adversary.observe(&view, &info);
                if !picks.is_empty() {
                    self.release(&picks, false);
                }
            }
        }
        Ok(self.finish(Outcome::Completed))
    }

    fn held_info(&self) -> Vec<HeldInfo> {
        self.held.iter().map(|h| HeldInfo { from: h.from, to: h.to }).collect()
    }

    /// All live honest peers are blocked and nothing is in flight: the
    /// adversary has to let something through.
    pub fn quiescence_release(&mut self) {
        let info = self.held_info();
        let mut picks = self.adversary.release_choice(&info, &mut self.adv_rng);
        picks.retain(|&i| i < self.held.len());
        if picks.is_empty() {
            picks.push(0);
        }
        self.audit.forced_releases += 1;
        self.release(&picks, true);
    }

    fn release(&mut self, picks: &[usize], _forced: bool) {
        let mut picks = picks.to_vec();
        picks.sort_unstable();
        picks.dedup();
        let chosen: Vec<Held> = picks.iter().map(|&i| self.held[i]).collect();
        for &i in picks.iter().rev() {
            self.held.remove(i);
        }
        for h in chosen {
            let t = self.now + UNIT;
            self.push(t, EvKind::Packet { msg: h.msg, seq_no: h.seq_no });
        }
    }

    fn log(&mut self, kind: &str, peer: usize, from: Option<usize>, detail: Option<String>) {
        if self.cfg.record_events {
            self.event_log.push(EventRecord {
                seq: self.events,
                time: self.now,
                kind: kind.to_string(),
                peer: peer as u32 + 1,
                from: from.map(|f| f as u32 + 1),
                detail,
            });
        }
    }

    fn dispatch(&mut self, ev: Ev) -> Result<(), (usize, String)> {
        match ev.kind {
            EvKind::Start(p) => {
                if self.status[p].crashed {
                    return Ok(());
                }
                self.log("start", p, None, None);
                self.step(p, |h, cx| h.start(cx))
            }
            EvKind::Crash(p) => {
                if self.status[p].active() {
                    self.log("crash", p, None, None);
                    self.crash(p, false);
                }
                Ok(())
            }
            EvKind::Packet { msg, seq_no } => self.on_packet(msg, seq_no),
        }
    }

    fn on_packet(&mut self, id: u64, seq_no: u32) -> Result<(), (usize, String)> {
        let (to, from, bits_here, complete, cycle) = {
            let f = self.in_flight.get_mut(&id).expect("packet of a known message");
            f.arrived += 1;
            let full = f.bits;
            let phi = self.cfg.phi;
            let here = if f.total <= 1 { full } else { packet_bits(full, phi, seq_no) };
            (f.to, f.from, here, f.arrived == f.total, f.cycle)
        };
        if let Some(r) = cycle {
            let r = r as usize;
            if self.cycle_delivered.len() <= r {
                self.cycle_delivered.resize(r + 1, false);
            }
            if !self.cycle_delivered[r] {
                self.cycle_delivered[r] = true;
                self.audit.first_delivery.push((r as u32, self.events));
            }
        }
        if !self.status[to].active() {
            self.dropped += 1;
            if complete {
                self.in_flight.remove(&id);
            }
            return Ok(());
        }
        self.records[to].recv_msgs += 1;
        self.records[to].recv_bits += bits_here;
        if !complete {
            return Ok(());
        }
        let msg = self.in_flight.remove(&id).and_then(|f| f.msg).expect("payload present");
        if self.cfg.record_events {
            let detail = Some(msg.kind().to_string());
            self.log("deliver", to, Some(from), detail);
        }
        self.step(to, move |h, cx| h.deliver(from, msg, cx))
    }

    fn step(
        &mut self,
        p: usize,
        f: impl FnOnce(&mut dyn Handler<M>, &mut Cx<'_, M>),
    ) -> Result<(), (usize, String)> {
        let mut handler = std::mem::replace(&mut self.handlers[p], Box::new(Inert));
        let mut rng = std::mem::replace(&mut self.rngs[p], stream(0, 0));
        let (actions, queries, failure, abort) = {
            let mut cx = Cx {
                me: p,
                k: self.k,
                now: self.now,
                check: self.cfg.check,
                source: self.source,
                rng: &mut rng,
                actions: Vec::new(),
                queries: Vec::new(),
                failure: None,
                abort: None,
            };
            f(handler.as_mut(), &mut cx);
            (cx.actions, cx.queries, cx.failure, cx.abort)
        };
        self.handlers[p] = handler;
        self.rngs[p] = rng;

        let rec = &mut self.records[p];
        rec.query_count += queries.len() as u64;
        rec.queries.extend(queries);
        if let Some(reason) = failure {
            if rec.failure.is_none() {
                rec.failure = Some(reason);
            }
        }
        if let Some(reason) = abort {
            return Err((p, reason));
        }
        for action in actions {
            if !self.status[p].active() {
                break;
            }
            match action {
                Action::Send { to, msg } => {
                    let kind = msg.kind();
                    if self.crash_before_send(p, kind) {
                        self.crash(p, false);
                        break;
                    }
                    self.send(p, to, msg);
                    *self.sent_by_kind[p].entry(kind).or_insert(0) += 1;
                    if self.crash_before_send(p, kind) {
                        // the rule's count is reached exactly after this send
                        self.crash(p, false);
                        break;
                    }
                }
                Action::Progress { phase, stage } => {
                    let hit = self.crash_rules.iter().any(|r| {
                        matches!(*r, CrashRule::AtProgress { peer, phase: ph, stage: st }
                            if peer == p && ph == phase && st == stage)
                    });
                    if hit {
                        self.log("crash", p, None, Some(format!("phase {phase} stage {stage}")));
                        self.crash(p, false);
                        break;
                    }
                }
                Action::Cycle(r) => {
                    self.ensure_fixed(r);
                    let ri = r as usize;
                    if self.cycle_started.len() <= ri {
                        self.cycle_started.resize(ri + 1, false);
                    }
                    if !self.cycle_started[ri] {
                        self.cycle_started[ri] = true;
                        self.audit.first_start.push((r, self.events));
                    }
                    self.log("cycle_boundary", p, None, Some(r.to_string()));
                    let hit = self.crash_rules.iter().any(|rule| {
                        matches!(*rule, CrashRule::AtCycle { peer, cycle } if peer == p && cycle == r)
                    });
                    if hit {
                        self.crash(p, true);
                        break;
                    }
                }
                Action::Terminate(out) => {
                    self.log("terminate", p, None, None);
                    self.status[p].terminated = true;
                    if !self.status[p].byzantine {
                        self.honest_left -= 1;
                    }
                    self.records[p].terminated_at = Some(self.now);
                    self.records[p].output = Some(out);
                }
                Action::Snapshot(s) => self.snapshots.push(s),
            }
        }
        Ok(())
    }

    fn crash_before_send(&self, p: usize, kind: &'static str) -> bool {
        self.crash_rules.iter().any(|r| match r {
            CrashRule::AfterSends { peer, count, kind: filter } if *peer == p => {
                let sent = match filter {
                    Some(k) if k == kind => self.sent_by_kind[p].get(kind).copied().unwrap_or(0),
                    Some(_) => return false,
                    None => self.sent_by_kind[p].values().sum(),
                };
                sent >= *count
            }
            _ => false,
        })
    }

    fn crash(&mut self, p: usize, at_boundary: bool) {
        if self.status[p].crashed {
            return;
        }
        self.status[p].crashed = true;
        if !self.status[p].byzantine && !self.status[p].terminated {
            self.honest_left -= 1;
        }
        self.records[p].role = Role::Crashed;
        self.records[p].crashed_at = Some(self.now);
        self.audit.crashes.push(CrashRecord {
            peer: p as u32 + 1,
            time: self.now,
            event: self.events,
            at_cycle_boundary: at_boundary,
        });
    }

    fn ensure_fixed(&mut self, r: u32) {
        let ri = r as usize;
        if self.cycle_fixed.len() <= ri {
            self.cycle_fixed.resize(ri + 1, false);
        }
        if !self.cycle_fixed[ri] {
            self.cycle_fixed[ri] = true;
            self.adversary.fix_cycle(r, self.k, &mut self.adv_rng);
            self.audit.latency_fixed.push((r, self.events));
        }
    }

    fn send(&mut self, from: usize, to: usize, msg: M) {
        let bits = msg.size_bits(&self.enc);
        let total = bits.div_ceil(self.cfg.phi).max(1) as u32;
        let cycle = msg.cycle();
        let kind = msg.kind();
        if self.cfg.cycles {
            match cycle {
                Some(r) => {
                    if self.cycle_fixed.get(r as usize) != Some(&true) {
                        self.audit.unfixed_lookups += 1;
                        self.ensure_fixed(r);
                    }
                }
                None => self.audit.unfixed_lookups += 1,
            }
        }
        let id = self.next_msg;
        self.next_msg += 1;
        let rec = &mut self.records[from];
        rec.sent_msgs += total as u64;
        rec.sent_bits += bits;
        self.in_flight.insert(
            id,
            InFlight { msg: Some(msg), from, to, total, arrived: 0, bits, cycle },
        );
        for seq_no in 0..total {
            let depart = if self.cfg.pacing {
                let slot = &mut self.link_free[from * self.k + to];
                let d = (*slot).max(self.now);
                *slot = d + UNIT;
                d
            } else {
                self.now
            };
            let q = LatencyQuery {
                from,
                to,
                cycle,
                kind,
                send_time: depart,
                packet: seq_no,
                packets: total,
            };
            match self.adversary.latency(&q, &mut self.adv_rng) {
                Latency::After(l) => {
                    let l = l.clamp(1, UNIT);
                    self.push(depart + l, EvKind::Packet { msg: id, seq_no });
                }
                Latency::Hold => self.held.push(Held { msg: id, seq_no, from, to }),
            }
        }
    }

    fn finish(mut self, outcome: Outcome) -> ExecutionTrace {
        let never_crashed: Vec<bool> = self.status.iter().map(|s| !s.crashed).collect();
        let mut undelivered = 0;
        for h in &self.held {
            if never_crashed[h.from] && never_crashed[h.to] {
                undelivered += 1;
            }
        }
        for Reverse(ev) in self.queue.iter() {
            if let EvKind::Packet { msg, .. } = ev.kind {
                if let Some(f) = self.in_flight.get(&msg) {
                    if never_crashed[f.from] && never_crashed[f.to] {
                        undelivered += 1;
                    }
                }
            }
        }
        if outcome == Outcome::Completed {
            debug_assert_eq!(undelivered, 0);
        }
        let n = self.enc.n;
        let k = self.k;
        ExecutionTrace {
            scenario: std::mem::take(&mut self.scenario),
            n,
            k,
            expected: std::mem::take(&mut self.expected),
            peers: std::mem::take(&mut self.records),
            events: self.events,
            end_time: self.now,
            snapshots: std::mem::take(&mut self.snapshots),
            audit: std::mem::take(&mut self.audit),
            dropped: self.dropped,
            undelivered,
            event_log: std::mem::take(&mut self.event_log),
            outcome,
        }
    }
}

fn packet_bits(total: u64, phi: u64, seq_no: u32) -> u64 {
    let start = seq_no as u64 * phi;
    total.saturating_sub(start).min(phi)
}

/// Placeholder handler used while the real one is borrowed.
struct Inert;

impl<M: Message> Handler<M> for Inert {
    fn start(&mut self, _cx: &mut Cx<'_, M>) {}
    fn deliver(&mut self, _from: usize, _msg: M, _cx: &mut Cx<'_, M>) {}
    fn waiting(&self) -> bool {
        false
    }
}

/// Cycle-contract audit: every cycle's latencies were fixed before any peer
/// started it and before any of its messages was delivered.
pub fn audit_cycle_contract(trace: &ExecutionTrace) -> Result<(), String> {
    if trace.audit.unfixed_lookups > 0 {
        return Err(format!("{} latency lookups for unfixed cycles", trace.audit.unfixed_lookups));
    }
    let fixed: HashMap<u32, u64> = trace.audit.latency_fixed.iter().copied().collect();
    let check = |label: &str, list: &[(u32, u64)]| -> Result<(), String> {
        for &(r, ev) in list {
            match fixed.get(&r) {
                Some(&f) if f <= ev => {}
                Some(&f) => {
                    return Err(format!("cycle {r}: latencies fixed at event {f}, {label} at event {ev}"))
                }
                None => return Err(format!("cycle {r}: {label} at event {ev} but latencies never fixed")),
            }
        }
        Ok(())
    };
    check("first start", &trace.audit.first_start)?;
    check("first delivery", &trace.audit.first_delivery)?;
    for &(r, ev) in &trace.audit.first_delivery {
        let start = trace.audit.first_start.iter().find(|&&(c, _)| c == r).map(|&(_, e)| e);
        if let Some(s) = start {
            if s > ev {
                return Err(format!("cycle {r}: delivery at event {ev} precedes its first start {s}"));
            }
        }
    }
    Ok(())
}

/// Crash-legality audit for cycle-based protocols.
pub fn audit_crash_legality(trace: &ExecutionTrace) -> Result<(), String> {
    for c in &trace.audit.crashes {
        if !c.at_cycle_boundary {
            return Err(format!("peer {} crashed at t={} outside a cycle boundary", c.peer, c.time));
        }
    }
    Ok(())
}

/// Every envelope between two never-crashed peers was delivered.
pub fn audit_eventual_delivery(trace: &ExecutionTrace) -> Result<(), String> {
    if trace.undelivered > 0 {
        return Err(format!("{} envelopes between live peers never delivered", trace.undelivered));
    }
    Ok(())
}
