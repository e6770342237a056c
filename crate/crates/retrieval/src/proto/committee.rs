//! Deterministic byzantine download with committees of `2f+1` peers per cell.
//!
//! Members query their cells and report them; a peer accepts a value once
//! `f+1` distinct members of the cell's committee reported it.

use std::collections::HashMap;

use crate::adversary::{corrupt_value, ByzMode, Corruptible};
use crate::error::ConfigError;
use crate::model::Encoding;
use crate::sim::{Cx, Handler, Message};

use super::{pairs_bits, Pairs, Res, HEADER_BITS};

/// Members of the committee of cell `i` (1-based), as 0-based peers:
/// `((i−1)(2f+1) + j) mod k` for `j = 0..=2f`.
pub fn committee(i: usize, k: usize, f: usize) -> Result<Vec<usize>, ConfigError> {
    if 2 * f + 1 > k {
        return Err(ConfigError::Constraint("2f+1 ≤ k".into()));
    }
    let size = 2 * f + 1;
    Ok((0..size).map(|j| ((i - 1) * size + j) % k).collect())
}

pub fn is_member(peer: usize, i: usize, k: usize, f: usize) -> bool {
    let size = 2 * f + 1;
    let first = ((i - 1) * size) % k;
    (peer + k - first) % k < size
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommitteeMsg {
    Report { pairs: Pairs },
}

impl Message for CommitteeMsg {
    fn size_bits(&self, enc: &Encoding) -> u64 {
        let CommitteeMsg::Report { pairs } = self;
        HEADER_BITS + pairs_bits(enc, pairs)
    }

    fn kind(&self) -> &'static str {
        "report"
    }
}

impl Corruptible for CommitteeMsg {
    fn corrupt(&self, mode: ByzMode, to: usize, mask: u32) -> Option<Self> {
        let CommitteeMsg::Report { pairs } = self;
        match mode {
            ByzMode::Silent => None,
            ByzMode::Flip | ByzMode::Equivocate | ByzMode::Flood => Some(CommitteeMsg::Report {
                pairs: pairs.iter().map(|&(i, v)| (i, corrupt_value(v, mode, to, mask))).collect(),
            }),
            ByzMode::Replay => Some(self.clone()),
        }
    }
}

/// Split sorted pairs into reports of at most `phi` bits (a single pair is
/// never split).
pub fn batch(enc: &Encoding, pairs: Pairs, phi: u64) -> Vec<Pairs> {
    let mut out = Vec::new();
    let mut cur: Pairs = Vec::new();
    for p in pairs {
        cur.push(p);
        if cur.len() > 1 && HEADER_BITS + pairs_bits(enc, &cur) > phi {
            let last = cur.pop().expect("non-empty");
            out.push(std::mem::replace(&mut cur, vec![last]));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub struct Committee {
    n: usize,
    k: usize,
    f: usize,
    me: usize,
    phi: u64,
    enc: Encoding,
    res: Res,
    /// Per cell: value → distinct member reporters.
    tally: HashMap<usize, Vec<(u32, Vec<usize>)>>,
    /// Reports dropped because the sender is not on the cell's committee.
    pub rejected: u64,
    /// On a stall, take 0 for every cell no value reached f+1 on.
    pub fill_on_stall: bool,
    done: bool,
}

impl Committee {
    pub fn new(n: usize, k: usize, f: usize, me: usize, phi: u64, width: u8) -> Self {
        Committee {
            n,
            k,
            f,
            me,
            phi,
            enc: Encoding::new(n, k, width),
            res: Res::new(n),
            tally: HashMap::new(),
            rejected: 0,
            fill_on_stall: false,
            done: false,
        }
    }

    fn check_done(&mut self, cx: &mut Cx<'_, CommitteeMsg>) {
        if !self.done && self.res.complete() {
            self.done = true;
            self.tally.clear();
            cx.terminate(self.res.output());
        }
    }
}

impl Handler<CommitteeMsg> for Committee {
    fn start(&mut self, cx: &mut Cx<'_, CommitteeMsg>) {
        let mut mine = Vec::new();
        for i in 1..=self.n {
            if is_member(self.me, i, self.k, self.f) {
                let v = cx.query(i);
                if let Err(e) = self.res.set(i, v) {
                    cx.abort(e);
                }
                mine.push((i, v));
            }
        }
        for pairs in batch(&self.enc, mine, self.phi) {
            cx.broadcast(CommitteeMsg::Report { pairs });
        }
        self.check_done(cx);
    }

    fn deliver(&mut self, from: usize, msg: CommitteeMsg, cx: &mut Cx<'_, CommitteeMsg>) {
        if self.done {
            return;
        }
        let CommitteeMsg::Report { pairs } = msg;
        let need = self.f + 1;
        for (i, v) in pairs {
            if i == 0 || i > self.n || !is_member(from, i, self.k, self.f) {
                self.rejected += 1;
                continue;
            }
            if self.res.known(i) {
                continue;
            }
            let entry = self.tally.entry(i).or_default();
            let pos = match entry.iter().position(|(val, _)| *val == v) {
                Some(p) => p,
                None => {
                    entry.push((v, Vec::new()));
                    entry.len() - 1
                }
            };
            let reporters = &mut entry[pos].1;
            if !reporters.contains(&from) {
                reporters.push(from);
            }
            if reporters.len() >= need {
                let strong = entry.iter().filter(|(_, r)| r.len() >= need).count();
                if strong > 1 {
                    cx.abort(format!("two values reached f+1 reports for index {i}"));
                    return;
                }
                if let Err(e) = self.res.set(i, v) {
                    cx.abort(e);
                }
                self.tally.remove(&i);
            }
        }
        self.check_done(cx);
    }

    fn waiting(&self) -> bool {
        !self.done
    }

    fn stalled(&mut self, cx: &mut Cx<'_, CommitteeMsg>) {
        if !self.fill_on_stall || self.done {
            return;
        }
        // only an inconsistent source leaves honest reports split like this
        for i in 1..=self.n {
            if !self.res.known(i) {
                if let Err(e) = self.res.set(i, 0) {
                    cx.abort(e);
                    return;
                }
            }
        }
        self.check_done(cx);
    }
}
