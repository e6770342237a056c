//! Multi-phase download tolerating up to `f < k` crashes.
//!
//! Every phase a peer asks each other peer for the unknown cells assigned to
//! it, waits until it has heard from `k−f` peers, asks around for the rest,
//! and hands whatever nobody could supply back out to all `k` peers for the
//! next phase.
//!
//! Assignments are kept coherent across peers by splitting along a fixed
//! hierarchy of contiguous ranges: level 0 is the block split, and a cell
//! reassigned for the `q`-th time moves to the `q`-th level sub-range that
//! contains it. Two peers that both still miss a cell therefore always agree
//! on its owner.
//!
//! A cell still unknown at the start of phase `p` sits at level `p`, and its
//! ancestors were owned by peers missing in each earlier phase. Requests
//! therefore carry only the requester's history of missing peers, and the
//! responder recomputes which cells the requester means. Answers list
//! values in that same order, without indices.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::Encoding;
use crate::rng::splitmix64;
use crate::sim::{CheckLevel, Cx, Handler, Message};
use crate::trace::Snapshot;

use super::{Res, HEADER_BITS};

#[derive(Debug, Clone, PartialEq)]
pub enum MultiMsg {
    /// Asks the receiver for its level-`phase` cells under `history`.
    S1Req { phase: u32, history: History },
    S1Resp { phase: u32, values: Vec<u32> },
    /// Asks for the cells of every peer in `missing` the requester has not heard from.
    S2Req { phase: u32, history: History, missing: Vec<usize> },
    /// Per requested peer, the values or `None` for "me neither".
    S2Resp { phase: u32, answers: Vec<(usize, Option<Vec<u32>>)> },
    FinalRes { cells: Arc<[u32]> },
}

impl Message for MultiMsg {
    fn size_bits(&self, enc: &Encoding) -> u64 {
        match self {
            MultiMsg::S1Req { history, .. } => HEADER_BITS + history_bits(enc, history),
            MultiMsg::S1Resp { values, .. } => HEADER_BITS + values.len() as u64 * enc.value_bits(),
            MultiMsg::S2Req { history, missing, .. } => {
                HEADER_BITS + history_bits(enc, history) + id_set_bits(enc, missing)
            }
            MultiMsg::S2Resp { answers, .. } => {
                HEADER_BITS
                    + answers
                        .iter()
                        .map(|(_, a)| enc.id_bits() + 1 + a.as_ref().map_or(0, |v| v.len() as u64 * enc.value_bits()))
                        .sum::<u64>()
            }
            MultiMsg::FinalRes { cells } => HEADER_BITS + cells.len() as u64 * enc.value_bits(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            MultiMsg::S1Req { .. } => "s1_req",
            MultiMsg::S1Resp { .. } => "s1_resp",
            MultiMsg::S2Req { .. } => "s2_req",
            MultiMsg::S2Resp { .. } => "s2_resp",
            MultiMsg::FinalRes { .. } => "final_res",
        }
    }
}

/// Missing peers of phases `0..p`, one set per phase.
pub type History = Arc<Vec<Vec<usize>>>;

/// A peer set as a `k`-bit mask or as a counted id list, whichever is shorter.
fn id_set_bits(enc: &Encoding, ids: &[usize]) -> u64 {
    1 + (enc.k as u64).min(enc.id_bits() * (ids.len() as u64 + 1))
}

fn history_bits(enc: &Encoding, h: &[Vec<usize>]) -> u64 {
    h.iter().map(|m| id_set_bits(enc, m)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    /// Stage 3 stops waiting for peers whose stage-1 answers arrive late.
    #[default]
    TimeOptimized,
}

/// Phase at whose start peers query everything left and terminate:
/// `⌈log_{k/f}(n/k)⌉`, or 1 when `f = 0`.
pub fn termination_phase(n: usize, k: usize, f: usize) -> u32 {
    if f == 0 {
        return 1;
    }
    if n <= k {
        return 0;
    }
    let x = (n as f64 / k as f64).ln() / (k as f64 / f as f64).ln();
    (x - 1e-9).ceil().max(0.0) as u32
}

/// Level-0 owner of index `i` (1-based) as a 0-based peer.
pub fn initial_owner(i: usize, n: usize, k: usize) -> usize {
    (i - 1) / n.div_ceil(k)
}

/// `l`-th of `n_prime` reassigned cells goes to peer `⌊l/⌈n'/k⌉⌋` (0-based).
pub fn reassign_unknown(n_prime: usize, k: usize) -> Vec<usize> {
    let block = n_prime.div_ceil(k).max(1);
    (0..n_prime).map(|l| l / block).collect()
}

/// Where one cell sits in the range hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub level: u16,
    pub owner: u16,
    lo: u32,
    len: u32,
}

impl Slot {
    pub fn initial(i: usize, n: usize, k: usize) -> Slot {
        let c = n.div_ceil(k);
        let owner = (i - 1) / c;
        let lo = 1 + owner * c;
        let len = c.min(n + 1 - lo);
        Slot { level: 0, owner: owner as u16, lo: lo as u32, len: len as u32 }
    }

    /// The slot one level down: the range is cut into `k` pieces of
    /// `⌈len/k⌉`, and piece `l` goes to peer `(l + r) mod k` where the
    /// rotation `r` depends only on the range, so small ranges do not all
    /// land on the same peers.
    pub fn descend(self, i: usize, k: usize) -> Slot {
        let c = (self.len as usize).div_ceil(k);
        self.child((i - self.lo as usize) / c, k)
    }

    fn child(self, l: usize, k: usize) -> Slot {
        let (lo, len) = (self.lo as usize, self.len as usize);
        let c = len.div_ceil(k);
        let level = self.level + 1;
        let rot = (splitmix64(((lo as u64) << 24) ^ level as u64) % k as u64) as usize;
        let sub_lo = lo + l * c;
        let sub_len = c.min(lo + len - sub_lo);
        Slot { level, owner: ((l + rot) % k) as u16, lo: sub_lo as u32, len: sub_len as u32 }
    }

    fn children(self, k: usize) -> impl Iterator<Item = Slot> {
        let c = (self.len as usize).div_ceil(k);
        (0..(self.len as usize).div_ceil(c)).map(move |l| self.child(l, k))
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.lo as usize..(self.lo + self.len) as usize
    }
}

/// Cells of `slots` owned by `j`, ascending.
pub fn owned_cells(slots: &[Slot], j: usize) -> Vec<usize> {
    slots.iter().filter(|s| s.owner as usize == j).flat_map(|s| s.range()).collect()
}

/// Level-`p` ranges, `p = history.len()`, whose ancestor at every level
/// `q < p` belonged to a peer in `history[q]`. A peer's unknown cells at the
/// start of phase `p` always lie inside these ranges.
pub fn candidate_slots(n: usize, k: usize, history: &[Vec<usize>]) -> Vec<Slot> {
    let c = n.div_ceil(k);
    let mut slots: Vec<Slot> = (0..n.div_ceil(c)).map(|o| Slot::initial(1 + o * c, n, k)).collect();
    for missing in history {
        slots = slots
            .into_iter()
            .filter(|s| missing.contains(&(s.owner as usize)))
            .flat_map(|s| s.children(k))
            .collect();
    }
    slots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wait {
    Stage2,
    Stage3,
    Done,
}

pub struct MultiCrash {
    k: usize,
    f: usize,
    me: usize,
    variant: Variant,
    last_phase: u32,
    phase: u32,
    wait: Wait,
    res: Res,
    slots: Vec<Slot>,
    /// Unknown indices, ascending; pruned lazily.
    unknown: Vec<usize>,
    unknown_of: Vec<usize>,
    missing: Vec<usize>,
    history: History,
    responses: usize,
    s1_deferred: Vec<(usize, u32, History)>,
    s2_deferred: Vec<(usize, u32, History, Vec<usize>)>,
    /// Candidate cells per owner, by history.
    cache: HashMap<Vec<Vec<usize>>, Arc<Vec<Vec<usize>>>>,
    skew: bool,
}

impl MultiCrash {
    pub fn new(n: usize, k: usize, f: usize, me: usize, variant: Variant) -> Self {
        MultiCrash {
            k,
            f,
            me,
            variant,
            last_phase: termination_phase(n, k, f),
            phase: 0,
            wait: Wait::Stage2,
            res: Res::new(n),
            slots: (1..=n).map(|i| Slot::initial(i, n, k)).collect(),
            unknown: (1..=n).collect(),
            unknown_of: vec![0; k],
            missing: Vec::new(),
            history: Arc::new(Vec::new()),
            responses: 0,
            s1_deferred: Vec::new(),
            s2_deferred: Vec::new(),
            cache: HashMap::new(),
            skew: false,
        }
    }

    /// Mutant for checking the harness: reassigned cells go to the next
    /// peer over, so this peer disagrees with everyone else on owners.
    #[doc(hidden)]
    pub fn with_skewed_reassignment(mut self) -> Self {
        self.skew = true;
        self
    }

    fn candidates(&mut self, history: &[Vec<usize>]) -> Arc<Vec<Vec<usize>>> {
        if let Some(c) = self.cache.get(history) {
            return c.clone();
        }
        let mut per_owner = vec![Vec::new(); self.k];
        for s in candidate_slots(self.res.n(), self.k, history) {
            per_owner[s.owner as usize].extend(s.range());
        }
        let c = Arc::new(per_owner);
        if self.cache.len() > 4 * self.k {
            let floor = self.phase.saturating_sub(1) as usize;
            self.cache.retain(|h, _| h.len() >= floor);
        }
        self.cache.insert(history.to_vec(), c.clone());
        c
    }

    fn learn(&mut self, phase: u32, j: usize, values: &[u32], cx: &mut Cx<'_, MultiMsg>) {
        let h = self.history.clone();
        let all = self.candidates(&h[..(phase as usize).min(h.len())]);
        let cells = &all[j];
        if cells.len() != values.len() {
            cx.abort(format!("peer {}: {} values for {} cells of peer {}", self.me + 1, values.len(), cells.len(), j + 1));
            return;
        }
        for (&i, &v) in cells.iter().zip(values) {
            self.learn_one(i, v, cx);
        }
    }

    fn learn_one(&mut self, i: usize, v: u32, cx: &mut Cx<'_, MultiMsg>) {
        match self.res.set(i, v) {
            Ok(true) => self.unknown_of[self.slots[i - 1].owner as usize] -= 1,
            Ok(false) => {}
            Err(e) => cx.abort(e),
        }
    }

    fn heard(&self) -> usize {
        self.unknown_of.iter().filter(|&&u| u == 0).count()
    }

    fn prune(&mut self) {
        let res = &self.res;
        self.unknown.retain(|&i| !res.known(i));
    }

    fn enter_phase(&mut self, p: u32, cx: &mut Cx<'_, MultiMsg>) {
        self.phase = p;
        self.responses = 0;
        self.prune();
        self.unknown_of = vec![0; self.k];
        for &i in &self.unknown {
            self.unknown_of[self.slots[i - 1].owner as usize] += 1;
        }
        let full = cx.check() == CheckLevel::Full;
        cx.snapshot(Snapshot::PhaseStart {
            peer: self.me as u32 + 1,
            phase: p,
            unknown: self.res.unknown(),
            assignment: full.then(|| {
                let res = &self.res;
                let slots = &self.slots;
                (1..=slots.len()).map(|i| if res.known(i) { 0 } else { slots[i - 1].owner + 1 }).collect()
            }),
        });
        cx.progress(p, 1);
        if p >= self.last_phase {
            self.finish(cx);
            return;
        }
        let mut per_peer: Vec<Vec<usize>> = vec![Vec::new(); self.k];
        for &i in &self.unknown {
            per_peer[self.slots[i - 1].owner as usize].push(i);
        }
        for i in std::mem::take(&mut per_peer[self.me]) {
            let v = cx.query(i);
            self.learn_one(i, v, cx);
        }
        if full {
            cx.snapshot(Snapshot::AfterStage1 { peer: self.me as u32 + 1, phase: p, known: self.res.known_mask() });
        }
        for (to, indices) in per_peer.into_iter().enumerate() {
            if !indices.is_empty() {
                cx.send(to, MultiMsg::S1Req { phase: p, history: self.history.clone() });
            }
        }
        self.wait = Wait::Stage2;
        cx.progress(p, 2);
        self.answer_deferred(cx);
    }

    fn advance(&mut self, cx: &mut Cx<'_, MultiMsg>) {
        loop {
            if self.wait == Wait::Done {
                return;
            }
            if self.res.complete() {
                self.finish(cx);
                return;
            }
            match self.wait {
                Wait::Stage2 => {
                    if self.heard() < self.k - self.f {
                        return;
                    }
                    self.prune();
                    self.missing = (0..self.k).filter(|&j| self.unknown_of[j] > 0).collect();
                    cx.broadcast(MultiMsg::S2Req {
                        phase: self.phase,
                        history: self.history.clone(),
                        missing: self.missing.clone(),
                    });
                    self.wait = Wait::Stage3;
                    cx.progress(self.phase, 3);
                    self.answer_deferred(cx);
                }
                Wait::Stage3 => {
                    // this peer counts as one "me neither" for every j it asks about
                    let enough = self.responses + 1 >= self.k - self.f;
                    let resolved = self.missing.iter().all(|&j| self.unknown_of[j] == 0);
                    let go = enough || (self.variant == Variant::TimeOptimized && resolved);
                    if !go {
                        return;
                    }
                    self.prune();
                    for idx in 0..self.unknown.len() {
                        let i = self.unknown[idx];
                        let s = self.slots[i - 1];
                        if self.missing.contains(&(s.owner as usize)) {
                            let mut d = s.descend(i, self.k);
                            if self.skew {
                                d.owner = ((d.owner as usize + 1) % self.k) as u16;
                            }
                            self.slots[i - 1] = d;
                        }
                    }
                    let mut h = (*self.history).clone();
                    h.push(std::mem::take(&mut self.missing));
                    self.history = Arc::new(h);
                    let next = self.phase + 1;
                    self.enter_phase(next, cx);
                }
                Wait::Done => return,
            }
        }
    }

    fn finish(&mut self, cx: &mut Cx<'_, MultiMsg>) {
        self.prune();
        for i in std::mem::take(&mut self.unknown) {
            let v = cx.query(i);
            self.learn_one(i, v, cx);
        }
        let cells: Arc<[u32]> = self.res.output().into();
        cx.broadcast(MultiMsg::FinalRes { cells });
        self.wait = Wait::Done;
        cx.terminate(self.res.output());
    }

    fn answer_deferred(&mut self, cx: &mut Cx<'_, MultiMsg>) {
        let (phase, wait) = (self.phase, self.wait);
        let past = |p: u32, stage: u32| {
            let mine = match wait {
                Wait::Stage2 => 2,
                Wait::Stage3 => 3,
                Wait::Done => 4,
            };
            phase > p || (phase == p && mine >= stage)
        };
        let mut keep = Vec::new();
        for (from, p, history) in std::mem::take(&mut self.s1_deferred) {
            if past(p, 2) {
                let all = self.candidates(&history);
                match all[self.me].iter().map(|&i| self.res.get(i)).collect::<Option<Vec<u32>>>() {
                    Some(values) => cx.send(from, MultiMsg::S1Resp { phase: p, values }),
                    None => cx.abort(format!("peer {}: own phase-{p} cells not all known", self.me + 1)),
                }
            } else {
                keep.push((from, p, history));
            }
        }
        self.s1_deferred = keep;
        let mut keep = Vec::new();
        for (from, p, history, missing) in std::mem::take(&mut self.s2_deferred) {
            if past(p, 3) {
                let all = self.candidates(&history);
                let answers = missing
                    .into_iter()
                    .map(|j| {
                        (j, all[j].iter().map(|&i| self.res.get(i)).collect())
                    })
                    .collect();
                cx.send(from, MultiMsg::S2Resp { phase: p, answers });
            } else {
                keep.push((from, p, history, missing));
            }
        }
        self.s2_deferred = keep;
    }
}

impl Handler<MultiMsg> for MultiCrash {
    fn start(&mut self, cx: &mut Cx<'_, MultiMsg>) {
        self.enter_phase(0, cx);
        self.advance(cx);
    }

    fn deliver(&mut self, from: usize, msg: MultiMsg, cx: &mut Cx<'_, MultiMsg>) {
        if self.wait == Wait::Done {
            return;
        }
        match msg {
            MultiMsg::S1Req { phase, history } => {
                self.s1_deferred.push((from, phase, history));
                self.answer_deferred(cx);
            }
            MultiMsg::S1Resp { phase, values } => self.learn(phase, from, &values, cx),
            MultiMsg::S2Req { phase, history, missing } => {
                self.s2_deferred.push((from, phase, history, missing));
                self.answer_deferred(cx);
            }
            MultiMsg::S2Resp { phase, answers } => {
                for (j, a) in &answers {
                    if let Some(v) = a {
                        self.learn(phase, *j, v, cx);
                    }
                }
                if phase == self.phase && self.wait == Wait::Stage3 {
                    self.responses += 1;
                }
            }
            MultiMsg::FinalRes { cells } => {
                for (idx, &v) in cells.iter().enumerate() {
                    self.learn_one(idx + 1, v, cx);
                }
            }
        }
        self.advance(cx);
    }

    fn waiting(&self) -> bool {
        self.wait != Wait::Done
    }
}
