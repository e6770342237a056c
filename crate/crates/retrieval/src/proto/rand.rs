//! Randomized byzantine download by segment sampling.
//!
//! In cycle 0 every peer queries one random segment and broadcasts it.
//! Strings reported by at least `t` distinct peers form a segment's frequent
//! set, and a decision tree over that set pins down the true value with a
//! handful of queries. The two-cycle mode resolves every segment at once;
//! the multi-cycle mode doubles the segment length every cycle, resolving
//! only the two halves of one freshly picked segment per cycle.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{corrupt_value, ByzMode, Corruptible};
use crate::dtree::{build_tree, determine, frequent_strings};
use crate::error::ConfigError;
use crate::model::Encoding;
use crate::rng::splitmix64;
use crate::sim::{Cx, Handler, Message};
use crate::trace::Snapshot;

use super::HEADER_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandMode {
    TwoCycle,
    MultiCycle,
}

/// Which fraction of peers the multi-cycle thresholds scale with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `t_i = γk·2^i·φ_seg/(2n)`.
    GammaLiteral,
    /// `t_i = (γ−β)k·2^i·φ_seg/(2n)`: half the expected honest picks.
    #[default]
    GammaMinusBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandParams {
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub c: f64,
    /// Cycle-0 segment length.
    pub seg_len: usize,
    /// Cycle-0 segment count.
    pub segs: usize,
    pub mode: RandMode,
    pub threshold: Threshold,
    /// Small `k`: every peer reads the whole input.
    pub query_all: bool,
    /// Which parameter regime produced `seg_len` (1, 2 or 3; 0 if set by hand).
    pub case: u8,
}

impl RandParams {
    /// Parameters for the two-cycle mode from `(n, k, β, c)`.
    pub fn two_cycle(n: usize, k: usize, beta: f64, c: f64) -> Result<RandParams, ConfigError> {
        check_beta(beta)?;
        let gamma = 1.0 - beta;
        let ln_n = (n as f64).ln();
        let margin = gamma - beta;
        let (seg_len, query_all, case) = if k as f64 <= 32.0 * (c + 1.0) * ln_n / gamma {
            (n, true, 3)
        } else if (k as f64) < (n as f64 / margin).sqrt() * ln_n {
            let s = (32.0 * (c + 1.0) * n as f64 * ln_n / (margin * k as f64)).ceil() as usize;
            (s, false, 2)
        } else {
            ((32.0 * (c + 1.0) * (n as f64 / margin).sqrt()).ceil() as usize, false, 1)
        };
        let segs = n.div_ceil(seg_len.max(1));
        Ok(RandParams {
            n,
            k,
            beta,
            c,
            seg_len,
            segs,
            mode: RandMode::TwoCycle,
            threshold: Threshold::GammaMinusBeta,
            query_all,
            case,
        })
    }

    /// Parameters with a chosen segment length.
    pub fn with_seg_len(
        n: usize,
        k: usize,
        beta: f64,
        c: f64,
        seg_len: usize,
        mode: RandMode,
    ) -> Result<RandParams, ConfigError> {
        check_beta(beta)?;
        if seg_len == 0 {
            return Err(ConfigError::Constraint("segment length >= 1".into()));
        }
        Ok(RandParams {
            n,
            k,
            beta,
            c,
            seg_len,
            segs: n.div_ceil(seg_len),
            mode,
            threshold: Threshold::GammaMinusBeta,
            query_all: false,
            case: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        1.0 - self.beta
    }

    /// Distinct senders a wait needs: `⌈γk⌉`.
    pub fn wait_count(&self) -> usize {
        ((self.gamma() * self.k as f64) - 1e-9).ceil() as usize
    }

    /// Index of the last cycle.
    pub fn last_cycle(&self) -> u32 {
        if self.query_all || self.segs <= 1 {
            return 0;
        }
        match self.mode {
            RandMode::TwoCycle => 1,
            RandMode::MultiCycle => usize::BITS - (self.segs - 1).leading_zeros(),
        }
    }

    pub fn seg_len_at(&self, cycle: u32) -> usize {
        match self.mode {
            RandMode::TwoCycle => self.seg_len,
            RandMode::MultiCycle => self.seg_len.saturating_mul(1 << cycle).min(self.n.max(self.seg_len)),
        }
    }

    pub fn segs_at(&self, cycle: u32) -> usize {
        self.n.div_ceil(self.seg_len_at(cycle))
    }

    /// Offset and length of segment `index` (1-based) at `cycle`.
    pub fn segment(&self, cycle: u32, index: usize) -> (usize, usize) {
        let len = self.seg_len_at(cycle);
        let offset = (index - 1) * len + 1;
        (offset, len.min(self.n + 1 - offset))
    }

    /// Frequency threshold for strings sent in `cycle`.
    pub fn threshold_at(&self, cycle: u32) -> f64 {
        let k = self.k as f64;
        match self.mode {
            RandMode::TwoCycle => (self.gamma() - self.beta) * k / (2.0 * self.segs as f64),
            RandMode::MultiCycle => {
                let factor = match self.threshold {
                    Threshold::GammaLiteral => self.gamma(),
                    Threshold::GammaMinusBeta => self.gamma() - self.beta,
                };
                factor * k * self.seg_len_at(cycle) as f64 / (2.0 * self.n as f64)
            }
        }
    }

    /// Whether the segment length meets the high-probability premise
    /// `(γ−β)k·φ_seg/n ≥ 16(c+2)·ln n`.
    pub fn premise_holds(&self) -> bool {
        let lhs = (self.gamma() - self.beta) * self.k as f64 * self.seg_len as f64 / self.n as f64;
        lhs >= 16.0 * (self.c + 2.0) * (self.n as f64).ln()
    }
}

fn check_beta(beta: f64) -> Result<(), ConfigError> {
    if !(0.0..0.5).contains(&beta) {
        return Err(ConfigError::Constraint("0 <= beta < 1/2".into()));
    }
    Ok(())
}

/// A shared segment value with a precomputed fingerprint.
#[derive(Debug, Clone)]
pub struct SegStr {
    fp: u64,
    cells: Arc<[u32]>,
}

impl SegStr {
    pub fn new(cells: Vec<u32>) -> Self {
        let mut h = cells.len() as u64;
        for &v in &cells {
            h = splitmix64(h ^ v as u64);
        }
        SegStr { fp: h, cells: cells.into() }
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }
}

impl PartialEq for SegStr {
    fn eq(&self, other: &Self) -> bool {
        self.fp == other.fp && (Arc::ptr_eq(&self.cells, &other.cells) || self.cells == other.cells)
    }
}

impl Eq for SegStr {}

impl Hash for SegStr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.fp.hash(state);
    }
}

impl PartialOrd for SegStr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SegStr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cells.cmp(&other.cells)
    }
}

impl AsRef<[u32]> for SegStr {
    fn as_ref(&self) -> &[u32] {
        &self.cells
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RandMsg {
    Seg { cycle: u32, index: usize, value: SegStr },
}

impl Message for RandMsg {
    fn size_bits(&self, enc: &Encoding) -> u64 {
        let RandMsg::Seg { value, .. } = self;
        HEADER_BITS + enc.index_bits() + value.cells.len() as u64 * enc.value_bits()
    }

    fn kind(&self) -> &'static str {
        "seg"
    }

    fn cycle(&self) -> Option<u32> {
        let RandMsg::Seg { cycle, .. } = self;
        Some(*cycle)
    }
}

impl Corruptible for RandMsg {
    fn corrupt(&self, mode: ByzMode, to: usize, mask: u32) -> Option<Self> {
        let RandMsg::Seg { cycle, index, value } = self;
        match mode {
            ByzMode::Silent => None,
            ByzMode::Replay => Some(self.clone()),
            ByzMode::Equivocate if to % 2 == 0 => Some(self.clone()),
            _ => {
                let fake = value.cells.iter().map(|&v| corrupt_value(v, mode, to, mask)).collect();
                Some(RandMsg::Seg { cycle: *cycle, index: *index, value: SegStr::new(fake) })
            }
        }
    }
}

#[derive(Default)]
struct CycleStore {
    heard: Vec<bool>,
    count: usize,
    /// Per segment (0-based): `(sender, value)`.
    strings: Vec<Vec<(usize, SegStr)>>,
}

impl CycleStore {
    fn new(k: usize, segs: usize) -> Self {
        CycleStore { heard: vec![false; k], count: 0, strings: vec![Vec::new(); segs] }
    }
}

pub struct RandPeer {
    p: Arc<RandParams>,
    me: usize,
    waiting_for: Option<u32>,
    stores: Vec<CycleStore>,
    honest: Option<Arc<Vec<bool>>>,
    done: bool,
}

impl RandPeer {
    /// `honest` is only used to record whether the conditional-correctness
    /// premise held; it never influences the protocol.
    pub fn new(p: Arc<RandParams>, me: usize, honest: Option<Arc<Vec<bool>>>) -> Self {
        let stores = (0..=p.last_cycle()).map(|c| CycleStore::new(p.k, p.segs_at(c))).collect();
        RandPeer { p, me, waiting_for: None, stores, honest, done: false }
    }

    fn store(&mut self, from: usize, cycle: u32, index: usize, value: SegStr) {
        let p = &self.p;
        if cycle as usize >= self.stores.len() || index == 0 || index > p.segs_at(cycle) {
            return;
        }
        if value.cells.len() != p.segment(cycle, index).1 {
            return;
        }
        let st = &mut self.stores[cycle as usize];
        if st.heard[from] {
            return;
        }
        st.heard[from] = true;
        st.count += 1;
        st.strings[index - 1].push((from, value));
    }

    fn pick_and_send(&mut self, cycle: u32, cx: &mut Cx<'_, RandMsg>) -> u64 {
        let segs = self.p.segs_at(cycle);
        let index = cx.rng().gen_range(1..=segs);
        let mut queries = 0;
        let cells = if cycle == 0 {
            let (offset, len) = self.p.segment(0, index);
            queries += len as u64;
            (offset..offset + len).map(|i| cx.query(i)).collect()
        } else {
            let (mut left, q1) = self.resolve(cycle - 1, 2 * index - 1, cx);
            queries += q1;
            if 2 * index <= self.p.segs_at(cycle - 1) {
                let (right, q2) = self.resolve(cycle - 1, 2 * index, cx);
                queries += q2;
                left.extend(right);
            }
            left
        };
        let value = SegStr::new(cells);
        self.store(self.me, cycle, index, value.clone());
        cx.broadcast(RandMsg::Seg { cycle, index, value });
        self.waiting_for = Some(cycle);
        queries
    }

    /// Determine segment `index` of `cycle` from the strings received for it.
    fn resolve(&mut self, cycle: u32, index: usize, cx: &mut Cx<'_, RandMsg>) -> (Vec<u32>, u64) {
        let t = self.p.threshold_at(cycle);
        let (offset, len) = self.p.segment(cycle, index);
        let strings = &self.stores[cycle as usize].strings[index - 1];
        let fs = frequent_strings(strings.iter().map(|(s, v)| (*s, v)), t).unwrap_or_default();
        let tree = match build_tree(&fs) {
            Ok(t) => t,
            Err(e) => {
                cx.fail(format!("cycle {cycle} segment {index}: {e}"));
                return (vec![0; len], 0);
            }
        };
        let mut q = 0u64;
        let out = determine(&tree, offset, |i| {
            q += 1;
            cx.query(i)
        });
        match out {
            Ok(s) => (s, q),
            Err(e) => {
                cx.fail(format!("cycle {cycle} segment {index}: {e}"));
                (vec![0; len], q)
            }
        }
    }

    fn record_premise(&self, cycle: u32, cx: &mut Cx<'_, RandMsg>) {
        let Some(honest) = &self.honest else { return };
        let st = &self.stores[cycle as usize];
        let min_picks = st
            .strings
            .iter()
            .map(|list| list.iter().filter(|(s, _)| honest[*s]).count())
            .min()
            .unwrap_or(0);
        let threshold = self.p.threshold_at(cycle);
        cx.snapshot(Snapshot::HonestPicks {
            peer: self.me as u32 + 1,
            cycle: cycle + 1,
            premise_holds: min_picks as f64 >= threshold,
            min_picks,
            threshold,
        });
    }

    fn advance(&mut self, cx: &mut Cx<'_, RandMsg>) {
        while let Some(w) = self.waiting_for {
            let heard = self.stores[w as usize].count;
            if heard < self.p.wait_count() {
                return;
            }
            let next = w + 1;
            cx.enter_cycle(next);
            self.record_premise(w, cx);
            let last = next == self.p.last_cycle();
            let mut output = None;
            let queries = if last {
                self.waiting_for = None;
                let mut out = Vec::with_capacity(self.p.n);
                let mut q = 0;
                for index in 1..=self.p.segs_at(w) {
                    if self.p.mode == RandMode::MultiCycle && index > 2 {
                        break;
                    }
                    let (s, qi) = self.resolve(w, index, cx);
                    out.extend(s);
                    q += qi;
                }
                output = Some(out);
                q
            } else {
                self.pick_and_send(next, cx)
            };
            cx.snapshot(Snapshot::Cycle {
                peer: self.me as u32 + 1,
                cycle: next,
                determination_queries: queries,
                heard,
            });
            if let Some(out) = output {
                self.done = true;
                cx.terminate(out);
            }
        }
    }
}

impl Handler<RandMsg> for RandPeer {
    fn start(&mut self, cx: &mut Cx<'_, RandMsg>) {
        cx.enter_cycle(0);
        if self.p.last_cycle() == 0 {
            let out = (1..=self.p.n).map(|i| cx.query(i)).collect();
            self.done = true;
            cx.terminate(out);
            return;
        }
        self.pick_and_send(0, cx);
        self.advance(cx);
    }

    fn deliver(&mut self, from: usize, msg: RandMsg, cx: &mut Cx<'_, RandMsg>) {
        if self.done {
            return;
        }
        let RandMsg::Seg { cycle, index, value } = msg;
        self.store(from, cycle, index, value);
        self.advance(cx);
    }

    fn waiting(&self) -> bool {
        !self.done
    }
}

/// Byzantine peer that pushes the complement of segment 1 in every cycle,
/// all at once at start.
pub struct Flooder {
    p: Arc<RandParams>,
}

impl Flooder {
    pub fn new(p: Arc<RandParams>) -> Self {
        Flooder { p }
    }
}

impl Handler<RandMsg> for Flooder {
    fn start(&mut self, cx: &mut Cx<'_, RandMsg>) {
        let last = self.p.last_cycle();
        let sending = match self.p.mode {
            RandMode::TwoCycle => last.min(1),
            RandMode::MultiCycle => last,
        };
        for cycle in 0..sending {
            let (offset, len) = self.p.segment(cycle, 1);
            let fake: Vec<u32> = (offset..offset + len).map(|i| 1 - cx.query(i).min(1)).collect();
            cx.enter_cycle(cycle);
            cx.broadcast(RandMsg::Seg { cycle, index: 1, value: SegStr::new(fake) });
        }
    }

    fn deliver(&mut self, _from: usize, _msg: RandMsg, _cx: &mut Cx<'_, RandMsg>) {}

    fn waiting(&self) -> bool {
        false
    }
}
