//! Two-phase download tolerating one crash.
//!
//! Phase 1 splits the input into contiguous blocks. A peer that ends phase 1
//! still missing the block of some peer `j` hands that block out to the
//! other `k−1` peers for phase 2; a peer that learned everything switches to
//! completion mode and just broadcasts what it knows.

use crate::model::Encoding;
use crate::sim::{Cx, Handler, Message};
use crate::trace::Snapshot;

use super::{block_owner, pairs_bits, spread, Pairs, Res, HEADER_BITS};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum SingleMsg {
    Stage1 { phase: u32, pairs: Pairs },
    /// "I am missing the bits of `missing`"; `prev` is the requester's
    /// phase-1 missing peer, which fixes its phase-2 assignment.
    Req { phase: u32, missing: usize, prev: Option<usize> },
    /// `None` means "me neither".
    Resp { phase: u32, missing: usize, bits: Option<Pairs> },
    /// The reassigned block, sent once right before terminating.
    Final { pairs: Pairs },
}

impl Message for SingleMsg {
    fn size_bits(&self, enc: &Encoding) -> u64 {
        match self {
            SingleMsg::Stage1 { pairs, .. } | SingleMsg::Final { pairs } => HEADER_BITS + pairs_bits(enc, pairs),
            SingleMsg::Req { .. } => HEADER_BITS + 2 * enc.id_bits() + 1,
            SingleMsg::Resp { bits, .. } => {
                HEADER_BITS + enc.id_bits() + 1 + bits.as_ref().map_or(0, |b| pairs_bits(enc, b))
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SingleMsg::Stage1 { .. } => "stage1",
            SingleMsg::Req { .. } => "stage2_req",
            SingleMsg::Resp { .. } => "stage2_resp",
            SingleMsg::Final { .. } => "final",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Active,
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wait {
    Stage2,
    Stage3,
    Done,
}

/// Phase-1 owner of every index: contiguous blocks of `⌈n/k⌉`, 0-based peers.
pub fn initial_assignment(n: usize, k: usize) -> Vec<usize> {
    (1..=n).map(|i| block_owner(i, n, k)).collect()
}

/// Phase-2 owners: `missing`'s phase-1 block spread over the other peers in
/// ascending order; every other index is unowned.
pub fn reassignment(n: usize, k: usize, missing: usize) -> Vec<usize> {
    let mut owner = vec![NONE; n];
    let block: Vec<usize> = (1..=n).filter(|&i| block_owner(i, n, k) == missing).collect();
    let others: Vec<usize> = (0..k).filter(|&p| p != missing).collect();
    for (i, p) in spread(&block, &others) {
        owner[i - 1] = p;
    }
    owner
}

pub struct SingleCrash {
    n: usize,
    k: usize,
    me: usize,
    mode: Mode,
    phase: u32,
    wait: Wait,
    res: Res,
    owner: Vec<usize>,
    unknown_of: Vec<usize>,
    heard_msg: Vec<bool>,
    /// Per phase, once the stage-2 wait is over: the missing peer, if any.
    missing: [Option<Option<usize>>; 3],
    prev: Option<usize>,
    responses: usize,
    deferred: Vec<(usize, u32, usize, Option<usize>)>,
    future: Vec<usize>,
}

impl SingleCrash {
    pub fn new(n: usize, k: usize, me: usize) -> Self {
        SingleCrash {
            n,
            k,
            me,
            mode: Mode::Active,
            phase: 0,
            wait: Wait::Stage2,
            res: Res::new(n),
            owner: Vec::new(),
            unknown_of: vec![0; k],
            heard_msg: vec![false; k],
            missing: [None; 3],
            prev: None,
            responses: 0,
            deferred: Vec::new(),
            future: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn assignment(&self, phase: u32, prev: Option<usize>) -> Vec<usize> {
        match (phase, prev) {
            (1, _) => initial_assignment(self.n, self.k),
            (_, Some(m)) => reassignment(self.n, self.k, m),
            (_, None) => vec![NONE; self.n],
        }
    }

    fn learn(&mut self, pairs: &[(usize, u32)], cx: &mut Cx<'_, SingleMsg>) {
        for &(i, v) in pairs {
            match self.res.set(i, v) {
                Ok(true) => {
                    let o = self.owner.get(i - 1).copied().unwrap_or(NONE);
                    if o != NONE {
                        self.unknown_of[o] -= 1;
                    }
                }
                Ok(false) => {}
                Err(e) => cx.abort(e),
            }
        }
    }

    fn heard_count(&self) -> usize {
        (0..self.k).filter(|&j| self.heard_msg[j] || self.unknown_of[j] == 0).count()
    }

    fn enter_phase(&mut self, p: u32, cx: &mut Cx<'_, SingleMsg>) {
        self.phase = p;
        self.heard_msg = vec![false; self.k];
        self.heard_msg[self.me] = true;
        self.responses = 0;
        self.owner = self.assignment(p, self.prev);
        self.unknown_of = vec![0; self.k];
        for i in 1..=self.n {
            let o = self.owner[i - 1];
            if o != NONE && !self.res.known(i) {
                self.unknown_of[o] += 1;
            }
        }
        cx.snapshot(Snapshot::PhaseStart {
            peer: self.me as u32 + 1,
            phase: p,
            unknown: self.res.unknown(),
            assignment: None,
        });
        cx.progress(p, 1);
        let mine: Vec<usize> = (1..=self.n).filter(|&i| self.owner[i - 1] == self.me).collect();
        for &i in &mine {
            if !self.res.known(i) {
                let v = cx.query(i);
                self.learn(&[(i, v)], cx);
            }
        }
        let pairs = match self.mode {
            Mode::Active => self.res.pairs_for(mine),
            Mode::Completion => self.res.all_pairs(),
        };
        cx.broadcast(SingleMsg::Stage1 { phase: p, pairs });
        if self.mode == Mode::Completion {
            self.missing[p as usize] = Some(None);
            self.answer_deferred(cx);
            self.finish(cx);
            return;
        }
        self.wait = Wait::Stage2;
        cx.progress(p, 2);
        for from in std::mem::take(&mut self.future) {
            self.heard_msg[from] = true;
        }
    }

    fn advance(&mut self, cx: &mut Cx<'_, SingleMsg>) {
        loop {
            match self.wait {
                Wait::Done => return,
                Wait::Stage2 => {
                    if self.res.complete() {
                        self.missing[self.phase as usize] = Some(None);
                        self.answer_deferred(cx);
                        self.end_stage3(None, cx);
                        continue;
                    }
                    if self.heard_count() + 1 < self.k {
                        return;
                    }
                    let j = (0..self.k).find(|&j| !(self.heard_msg[j] || self.unknown_of[j] == 0));
                    self.missing[self.phase as usize] = Some(j);
                    self.answer_deferred(cx);
                    let Some(j) = j else {
                        cx.abort("every peer heard from but the output is incomplete");
                        self.wait = Wait::Done;
                        return;
                    };
                    cx.broadcast(SingleMsg::Req { phase: self.phase, missing: j, prev: self.prev });
                    self.wait = Wait::Stage3;
                    cx.progress(self.phase, 3);
                }
                Wait::Stage3 => {
                    if self.res.complete() {
                        self.end_stage3(None, cx);
                        continue;
                    }
                    let j = self.missing[self.phase as usize].flatten();
                    // the requester is itself one of the k−1 peers lacking j
                    if self.responses + 1 < self.k - 1 {
                        return;
                    }
                    self.end_stage3(j, cx);
                }
            }
        }
    }

    /// `missing` is the peer whose bits are still unknown after stage 3.
    fn end_stage3(&mut self, missing: Option<usize>, cx: &mut Cx<'_, SingleMsg>) {
        cx.snapshot(Snapshot::Stage3 {
            peer: self.me as u32 + 1,
            phase: self.phase,
            missing: missing.map(|j| j as u32 + 1),
            reassigned: missing.is_some() && self.phase == 1,
        });
        match (self.phase, missing) {
            (1, Some(j)) => {
                self.prev = Some(j);
                self.enter_phase(2, cx);
            }
            (1, None) => {
                self.mode = Mode::Completion;
                self.enter_phase(2, cx);
            }
            (_, None) => self.finish(cx),
            (_, Some(j)) => {
                cx.abort(format!("bits of peer {} still unknown after two phases", j + 1));
                self.wait = Wait::Done;
            }
        }
    }

    fn finish(&mut self, cx: &mut Cx<'_, SingleMsg>) {
        if self.mode == Mode::Active {
            if let Some(m) = self.prev {
                let block = (1..=self.n).filter(|&i| block_owner(i, self.n, self.k) == m);
                let pairs = self.res.pairs_for(block);
                cx.broadcast(SingleMsg::Final { pairs });
            }
        }
        self.wait = Wait::Done;
        cx.terminate(self.res.output());
    }

    fn answer_deferred(&mut self, cx: &mut Cx<'_, SingleMsg>) {
        let mut keep = Vec::new();
        for (from, p, j, prev) in std::mem::take(&mut self.deferred) {
            let ready = p < self.phase || self.missing[p as usize].is_some() || self.res.complete();
            if !ready {
                keep.push((from, p, j, prev));
                continue;
            }
            let owners = self.assignment(p, prev);
            let idx: Vec<usize> = (1..=self.n).filter(|&i| owners[i - 1] == j).collect();
            let bits = if idx.iter().all(|&i| self.res.known(i)) {
                Some(self.res.pairs_for(idx))
            } else {
                None
            };
            cx.send(from, SingleMsg::Resp { phase: p, missing: j, bits });
        }
        self.deferred = keep;
    }
}

impl Handler<SingleMsg> for SingleCrash {
    fn start(&mut self, cx: &mut Cx<'_, SingleMsg>) {
        self.enter_phase(1, cx);
        self.advance(cx);
    }

    fn deliver(&mut self, from: usize, msg: SingleMsg, cx: &mut Cx<'_, SingleMsg>) {
        if self.wait == Wait::Done {
            return;
        }
        match msg {
            SingleMsg::Stage1 { phase, pairs } => {
                self.learn(&pairs, cx);
                if phase == self.phase {
                    self.heard_msg[from] = true;
                } else if phase > self.phase {
                    self.future.push(from);
                }
            }
            SingleMsg::Req { phase, missing, prev } => {
                self.deferred.push((from, phase, missing, prev));
                self.answer_deferred(cx);
            }
            SingleMsg::Resp { phase, bits, .. } => {
                if let Some(b) = &bits {
                    self.learn(b, cx);
                }
                if phase == self.phase && self.wait == Wait::Stage3 {
                    self.responses += 1;
                }
            }
            SingleMsg::Final { pairs } => self.learn(&pairs, cx),
        }
        self.advance(cx);
    }

    fn waiting(&self) -> bool {
        self.wait != Wait::Done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(owner: &[usize], k: usize) -> Vec<Vec<usize>> {
        (0..k).map(|p| (1..=owner.len()).filter(|&i| owner[i - 1] == p).collect()).collect()
    }

    #[test]
    fn block_split_examples() {
        assert_eq!(blocks(&initial_assignment(12, 4), 4)[0], vec![1, 2, 3]);
        assert_eq!(blocks(&initial_assignment(12, 4), 4)[3], vec![10, 11, 12]);
        assert_eq!(blocks(&initial_assignment(5, 4), 4), vec![vec![1, 2], vec![3, 4], vec![5], vec![]]);
    }

    #[test]
    fn reassignment_skips_the_missing_peer() {
        let b = blocks(&reassignment(12, 4, 1), 4);
        assert_eq!(b, vec![vec![4], vec![], vec![5], vec![6]]);
    }
}
