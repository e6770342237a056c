//! Baselines: every peer queries everything, and an under-querying variant
//! that trusts a majority of its peers for one cell.

use crate::adversary::{corrupt_value, ByzMode, Corruptible};
use crate::model::Encoding;
use crate::sim::{Cx, Handler, Message};

use super::{pairs_bits, Pairs, HEADER_BITS};

#[derive(Debug, Clone, PartialEq)]
pub enum PeerMsg {
    /// Values of cells the receiver skips.
    Report { pairs: Pairs },
}

impl Message for PeerMsg {
    fn size_bits(&self, enc: &Encoding) -> u64 {
        let PeerMsg::Report { pairs } = self;
        HEADER_BITS + pairs_bits(enc, pairs)
    }

    fn kind(&self) -> &'static str {
        "report"
    }
}

impl Corruptible for PeerMsg {
    fn corrupt(&self, mode: ByzMode, to: usize, mask: u32) -> Option<Self> {
        let PeerMsg::Report { pairs } = self;
        match mode {
            ByzMode::Silent => None,
            ByzMode::Replay => Some(self.clone()),
            _ => Some(PeerMsg::Report {
                pairs: pairs.iter().map(|&(i, v)| (i, corrupt_value(v, mode, to, mask))).collect(),
            }),
        }
    }
}

/// Queries all `n` cells and terminates; never sends.
pub struct Naive {
    n: usize,
}

impl Naive {
    pub fn new(n: usize) -> Self {
        Naive { n }
    }
}

impl<M: Message> Handler<M> for Naive {
    fn start(&mut self, cx: &mut Cx<'_, M>) {
        let out = (1..=self.n).map(|i| cx.query(i)).collect();
        cx.terminate(out);
    }

    fn deliver(&mut self, _from: usize, _msg: M, _cx: &mut Cx<'_, M>) {}

    fn waiting(&self) -> bool {
        false
    }
}

/// Cell peer `p` (0-based) does not query: `(p mod n) + 1`.
pub fn skipped(p: usize, n: usize) -> usize {
    p % n + 1
}

/// Queries every cell but its skipped one, sends each other peer the value
/// of that peer's skipped cell, and takes the majority of the first `quorum`
/// distinct reports for its own (ties read as 0).
pub struct Mutant {
    n: usize,
    k: usize,
    me: usize,
    quorum: usize,
    res: Vec<u32>,
    votes: Vec<(usize, u32)>,
    done: bool,
}

impl Mutant {
    pub fn new(n: usize, k: usize, f: usize, me: usize) -> Self {
        Mutant { n, k, me, quorum: k - f - 1, res: vec![0; n], votes: Vec::new(), done: false }
    }

    fn decide(&mut self, cx: &mut Cx<'_, PeerMsg>) {
        if self.done || self.votes.len() < self.quorum {
            return;
        }
        let ones = self.votes.iter().filter(|(_, v)| *v == 1).count();
        let v = u32::from(2 * ones > self.votes.len());
        self.res[skipped(self.me, self.n) - 1] = v;
        self.done = true;
        cx.terminate(self.res.clone());
    }
}

impl Handler<PeerMsg> for Mutant {
    fn start(&mut self, cx: &mut Cx<'_, PeerMsg>) {
        let own = skipped(self.me, self.n);
        for i in 1..=self.n {
            if i != own {
                self.res[i - 1] = cx.query(i);
            }
        }
        for to in 0..self.k {
            let s = skipped(to, self.n);
            if to != self.me && s != own {
                cx.send(to, PeerMsg::Report { pairs: vec![(s, self.res[s - 1])] });
            }
        }
        self.decide(cx);
    }

    fn deliver(&mut self, from: usize, msg: PeerMsg, cx: &mut Cx<'_, PeerMsg>) {
        if self.done {
            return;
        }
        let own = skipped(self.me, self.n);
        let PeerMsg::Report { pairs } = msg;
        for (i, v) in pairs {
            if i == own && !self.votes.iter().any(|(p, _)| *p == from) {
                self.votes.push((from, v));
            }
        }
        self.decide(cx);
    }

    fn waiting(&self) -> bool {
        !self.done
    }
}
