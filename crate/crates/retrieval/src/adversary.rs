//! Adversary strategies: latency schedules, crash plans, byzantine behaviour
//! and the delayed-set/replay attack.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::{stream, PLAN_STREAM};
use crate::sim::{units, Cx, Handler, Message, Time, UNIT};

/// Latency of messages the adversary fast-tracks.
pub const FAST: Time = UNIT / 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latency {
    After(Time),
    /// Keep the envelope until the adversary releases it.
    Hold,
}

#[derive(Debug, Clone, Copy)]
pub struct LatencyQuery<'a> {
    pub from: usize,
    pub to: usize,
    pub cycle: Option<u32>,
    pub kind: &'a str,
    pub send_time: Time,
    pub packet: u32,
    pub packets: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct HeldInfo {
    pub from: usize,
    pub to: usize,
}

pub struct View<'a> {
    pub now: Time,
    pub terminated: &'a [bool],
    pub crashed: &'a [bool],
}

/// When and how a peer crashes. Peers are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CrashRule {
    AtTime { peer: usize, time: Time },
    /// Crash once the peer has sent `count` messages (of `kind`, if given).
    AfterSends { peer: usize, count: u64, kind: Option<String> },
    /// Crash on entering `(phase, stage)`.
    AtProgress { peer: usize, phase: u32, stage: u32 },
    /// Crash on entering cycle `cycle`.
    AtCycle { peer: usize, cycle: u32 },
}

impl CrashRule {
    pub fn peer(&self) -> usize {
        match *self {
            CrashRule::AtTime { peer, .. }
            | CrashRule::AfterSends { peer, .. }
            | CrashRule::AtProgress { peer, .. }
            | CrashRule::AtCycle { peer, .. } => peer,
        }
    }
}

pub trait Adversary {
    fn latency(&mut self, q: &LatencyQuery<'_>, rng: &mut ChaCha8Rng) -> Latency;

    /// Called once per cycle, before any peer enters it.
    fn fix_cycle(&mut self, _cycle: u32, _k: usize, _rng: &mut ChaCha8Rng) {}

    fn crash_rules(&self) -> Vec<CrashRule> {
        Vec::new()
    }

    /// Quiescence: pick a non-empty subset of held envelopes to deliver.
    fn release_choice(&mut self, held: &[HeldInfo], _rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..held.len()).collect()
    }

    /// Called after every event while envelopes are held; returns the ones
    /// to release now.
    fn observe(&mut self, _view: &View<'_>, _held: &[HeldInfo]) -> Vec<usize> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyModel {
    Uniform(Time),
    /// Independent, uniform on (0, 1].
    SeededRandom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Until {
    Time(Time),
    Terminated(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowRule {
    pub peers: Vec<bool>,
    pub until: Until,
    released: bool,
}

impl SlowRule {
    pub fn new(k: usize, peers: &[usize], until: Until) -> Self {
        let mut mask = vec![false; k];
        for &p in peers {
            mask[p] = true;
        }
        SlowRule { peers: mask, until, released: false }
    }
}

/// The built-in adversary: one latency model plus optional crash rules,
/// a slowed set and a fast-tracked set.
#[derive(Debug, Clone)]
pub struct Composite {
    k: usize,
    latency: LatencyModel,
    crashes: Vec<CrashRule>,
    slow: Option<SlowRule>,
    fast: Vec<bool>,
    tables: HashMap<u32, Vec<Time>>,
}

impl Composite {
    pub fn new(k: usize, latency: LatencyModel) -> Self {
        Composite { k, latency, crashes: Vec::new(), slow: None, fast: vec![false; k], tables: HashMap::new() }
    }

    pub fn uniform(k: usize, d: f64) -> Self {
        Composite::new(k, LatencyModel::Uniform(units(d)))
    }

    pub fn with_crashes(mut self, rules: Vec<CrashRule>) -> Self {
        self.crashes.extend(rules);
        self
    }

    pub fn with_slow(mut self, slow: SlowRule) -> Self {
        self.slow = Some(slow);
        self
    }

    pub fn with_fast(mut self, peers: &[usize]) -> Self {
        for &p in peers {
            self.fast[p] = true;
        }
        self
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Time {
        match self.latency {
            LatencyModel::Uniform(d) => d.clamp(1, UNIT),
            LatencyModel::SeededRandom => rng.gen_range(1..=UNIT),
        }
    }
}

impl Adversary for Composite {
    fn latency(&mut self, q: &LatencyQuery<'_>, rng: &mut ChaCha8Rng) -> Latency {
        if let Some(slow) = &self.slow {
            if slow.peers[q.from] && !slow.released {
                let hold = match slow.until {
                    Until::Time(t) => q.send_time < t,
                    Until::Terminated(_) => true,
                };
                if hold {
                    return Latency::Hold;
                }
            }
        }
        if self.fast[q.from] {
            return Latency::After(FAST);
        }
        if let Some(r) = q.cycle {
            if let Some(table) = self.tables.get(&r) {
                return Latency::After(table[q.from * self.k + q.to]);
            }
        }
        Latency::After(self.draw(rng))
    }

    fn fix_cycle(&mut self, cycle: u32, k: usize, rng: &mut ChaCha8Rng) {
        if let LatencyModel::SeededRandom = self.latency {
            let table = (0..k * k).map(|_| rng.gen_range(1..=UNIT)).collect();
            self.tables.insert(cycle, table);
        }
    }

    fn crash_rules(&self) -> Vec<CrashRule> {
        self.crashes.clone()
    }

    fn observe(&mut self, view: &View<'_>, held: &[HeldInfo]) -> Vec<usize> {
        let Some(slow) = &mut self.slow else {
            return Vec::new();
        };
        if !slow.released {
            slow.released = match slow.until {
                Until::Time(t) => view.now >= t,
                Until::Terminated(target) => view.terminated[target] || view.crashed[target],
            };
        }
        if slow.released {
            (0..held.len()).collect()
        } else {
            Vec::new()
        }
    }
}

/// How a byzantine peer misbehaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByzMode {
    /// Report complemented values.
    Flip,
    /// Complemented values to odd-numbered receivers, true ones to the rest.
    Equivocate,
    /// Send nothing.
    Silent,
    /// Push one agreed fake string from every byzantine peer.
    Flood,
    /// Re-send what the peer sent in a recorded reference run.
    Replay,
}

/// Payloads a byzantine wrapper knows how to falsify.
pub trait Corruptible: Message + Sized {
    /// `mask` has the low `w` bits set, `w` being the cell width.
    fn corrupt(&self, mode: ByzMode, to: usize, mask: u32) -> Option<Self>;
}

/// The falsified version of one cell value.
pub fn corrupt_value(v: u32, mode: ByzMode, to: usize, mask: u32) -> u32 {
    match mode {
        ByzMode::Equivocate if to % 2 == 0 => v,
        _ => !v & mask,
    }
}

/// Runs the honest logic but rewrites every outgoing message.
pub struct Corrupted<'a, M> {
    inner: Box<dyn Handler<M> + 'a>,
    mode: ByzMode,
    mask: u32,
}

impl<'a, M: Corruptible> Corrupted<'a, M> {
    pub fn new(inner: Box<dyn Handler<M> + 'a>, mode: ByzMode, width: u8) -> Self {
        let mask = if width >= 32 { u32::MAX } else { (1u32 << width) - 1 };
        Corrupted { inner, mode, mask }
    }
}

impl<'a, M: Corruptible> Handler<M> for Corrupted<'a, M> {
    fn start(&mut self, cx: &mut Cx<'_, M>) {
        self.inner.start(cx);
        let (mode, mask) = (self.mode, self.mask);
        cx.rewrite_sends(|to, m| m.corrupt(mode, to, mask));
    }

    fn deliver(&mut self, from: usize, msg: M, cx: &mut Cx<'_, M>) {
        self.inner.deliver(from, msg, cx);
        let (mode, mask) = (self.mode, self.mask);
        cx.rewrite_sends(|to, m| m.corrupt(mode, to, mask));
    }

    fn waiting(&self) -> bool {
        false
    }
}

/// Sends a fixed list of messages at start and ignores everything after.
pub struct Replay<M> {
    script: Vec<(usize, M)>,
}

impl<M> Replay<M> {
    pub fn new(script: Vec<(usize, M)>) -> Self {
        Replay { script }
    }
}

impl<M: Message> Handler<M> for Replay<M> {
    fn start(&mut self, cx: &mut Cx<'_, M>) {
        for (to, m) in self.script.drain(..) {
            cx.send(to, m);
        }
    }

    fn deliver(&mut self, _from: usize, _msg: M, _cx: &mut Cx<'_, M>) {}

    fn waiting(&self) -> bool {
        false
    }
}

/// Wraps an honest handler and keeps a copy of everything it sends.
pub struct Recorder<'a, M> {
    inner: Box<dyn Handler<M> + 'a>,
    log: std::rc::Rc<std::cell::RefCell<Vec<(usize, M)>>>,
}

impl<'a, M: Message> Recorder<'a, M> {
    pub fn new(inner: Box<dyn Handler<M> + 'a>, log: std::rc::Rc<std::cell::RefCell<Vec<(usize, M)>>>) -> Self {
        Recorder { inner, log }
    }
}

impl<'a, M: Message> Handler<M> for Recorder<'a, M> {
    fn start(&mut self, cx: &mut Cx<'_, M>) {
        let before = cx.actions.len();
        self.inner.start(cx);
        self.log.borrow_mut().extend(cx.sends_since(before));
    }

    fn deliver(&mut self, from: usize, msg: M, cx: &mut Cx<'_, M>) {
        let before = cx.actions.len();
        self.inner.deliver(from, msg, cx);
        self.log.borrow_mut().extend(cx.sends_since(before));
    }

    fn waiting(&self) -> bool {
        self.inner.waiting()
    }

    fn stalled(&mut self, cx: &mut Cx<'_, M>) {
        self.inner.stalled(cx);
    }
}

/// One named, parameterized strategy as written in a scenario config.
/// Peer ids here are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Uniform {
        #[serde(default = "one")]
        d: f64,
    },
    SeededRandom,
    SlowestPeer {
        peers: Vec<u32>,
        #[serde(default)]
        until_time: Option<f64>,
        #[serde(default)]
        until_terminated: Option<u32>,
    },
    CrashMidsend {
        peer: u32,
        after: u64,
        #[serde(default)]
        kind: Option<String>,
    },
    CrashAtProgress {
        peer: u32,
        phase: u32,
        stage: u32,
    },
    CrashAtTime {
        peer: u32,
        time: f64,
    },
    CrashAtCycle {
        peer: u32,
        cycle: u32,
    },
    /// `count` random victims (default f), each crashing at a random time,
    /// a random stage boundary or mid-send.
    RandomCrashes {
        #[serde(default)]
        count: Option<usize>,
        #[serde(default = "default_horizon")]
        horizon: f64,
    },
    /// `count` random victims crashing at random cycle boundaries.
    CycleCrashes {
        #[serde(default)]
        count: Option<usize>,
    },
    ByzFlip {
        #[serde(default)]
        count: Option<usize>,
        #[serde(default)]
        peers: Option<Vec<u32>>,
    },
    ByzEquivocate {
        #[serde(default)]
        count: Option<usize>,
        #[serde(default)]
        peers: Option<Vec<u32>>,
    },
    ByzSilent {
        #[serde(default)]
        count: Option<usize>,
        #[serde(default)]
        peers: Option<Vec<u32>>,
    },
    ByzFlood {
        #[serde(default)]
        count: Option<usize>,
        #[serde(default)]
        peers: Option<Vec<u32>>,
    },
    /// Delay set R past the target's termination while set F replays an all-zeros run.
    #[serde(alias = "appendix_a")]
    LowerBound {
        #[serde(default = "one_u32")]
        target: u32,
        #[serde(default)]
        delayed: Option<Vec<u32>>,
        #[serde(default)]
        corrupted: Option<Vec<u32>>,
    },
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn default_horizon() -> f64 {
    8.0
}

pub struct StrategyInfo {
    pub name: &'static str,
    pub summary: &'static str,
}

/// The named strategies a scenario may use.
pub fn builtin_strategies() -> Vec<StrategyInfo> {
    let list: [(&str, &str); 16] = [
        ("uniform", "every latency equals d (default 1)"),
        ("seeded_random", "latencies iid uniform on (0,1]"),
        ("slowest_peer", "hold all messages from a peer set until a time or until a target terminates"),
        ("crash_midsend", "crash a peer after it has sent `after` messages (optionally of one kind)"),
        ("crash_at_progress", "crash a peer when it enters (phase, stage)"),
        ("crash_at_time", "crash a peer at a fixed time"),
        ("crash_at_cycle", "crash a peer at the boundary into a cycle"),
        ("random_crashes", "f random victims, each at a random time, stage boundary or mid-send"),
        ("cycle_crashes", "random victims crashing at random cycle boundaries"),
        ("byz_flip", "byzantine peers report complemented values"),
        ("byz_equivocate", "byzantine peers send different values to different receivers"),
        ("byz_silent", "byzantine peers send nothing"),
        ("byz_flood", "byzantine peers push one agreed fake segment string, fast"),
        ("lower_bound", "delay set R until the target terminates; set F replays an all-zeros run"),
        ("max_latency", "alias of uniform with d = 1"),
        ("none", "failure-free, uniform latency 1"),
    ];
    list.iter().map(|&(name, summary)| StrategyInfo { name, summary }).collect()
}

/// Parse one strategy from JSON: an object with a `name`, or a bare name.
pub fn parse_strategy(v: &serde_json::Value) -> Result<Strategy, ConfigError> {
    let v = match v {
        serde_json::Value::String(s) => match s.as_str() {
            "max_latency" | "none" => serde_json::json!({ "name": "uniform", "d": 1.0 }),
            _ => serde_json::json!({ "name": s }),
        },
        other => other.clone(),
    };
    let name = v.get("name").and_then(|n| n.as_str()).ok_or(ConfigError::Missing("name"))?.to_string();
    let v = match name.as_str() {
        "max_latency" | "none" => serde_json::json!({ "name": "uniform", "d": 1.0 }),
        _ => v,
    };
    if !builtin_strategies().iter().any(|s| s.name == name) {
        return Err(ConfigError::Unknown { what: "adversary strategy", name });
    }
    serde_json::from_value(v).map_err(|e| ConfigError::Invalid(format!("strategy `{name}`: {e}")))
}

/// What the scenario runner knows when turning strategies into an adversary.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub k: usize,
    /// Crash budget.
    pub f: usize,
    /// Byzantine budget.
    pub byz: usize,
    pub cycles: bool,
    /// Phases a progress-keyed crash may target, inclusive.
    pub phases: (u32, u32),
    pub stages: u32,
    pub max_cycle: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub target: usize,
    pub delayed: Vec<usize>,
    pub corrupted: Vec<usize>,
}

/// Strategies resolved against a concrete scenario.
#[derive(Debug, Clone)]
pub struct Plan {
    pub adversary: Composite,
    /// Per peer, the byzantine behaviour if any.
    pub byz: Vec<Option<ByzMode>>,
    pub attack: Option<AttackPlan>,
}

impl Plan {
    pub fn byz_mask(&self) -> Vec<bool> {
        self.byz.iter().map(|b| b.is_some()).collect()
    }
}

pub fn resolve(strategies: &[Strategy], ctx: &PlanContext) -> Result<Plan, ConfigError> {
    let k = ctx.k;
    let mut rng = stream(ctx.seed, PLAN_STREAM);
    let mut latency = LatencyModel::Uniform(UNIT);
    let mut crashes: Vec<CrashRule> = Vec::new();
    let mut slow: Option<SlowRule> = None;
    let mut fast: Vec<usize> = Vec::new();
    let mut byz: Vec<Option<ByzMode>> = vec![None; k];
    let mut attack = None;

    let peer = |id: u32| -> Result<usize, ConfigError> {
        if id == 0 || id as usize > k {
            Err(ConfigError::Invalid(format!("peer id {id} outside 1..={k}")))
        } else {
            Ok(id as usize - 1)
        }
    };

    for s in strategies {
        match s {
            Strategy::Uniform { d } => {
                if !(*d > 0.0 && *d <= 1.0) {
                    return Err(ConfigError::Constraint("uniform latency d in (0, 1]".into()));
                }
                latency = LatencyModel::Uniform(units(*d));
            }
            Strategy::SeededRandom => latency = LatencyModel::SeededRandom,
            Strategy::SlowestPeer { peers, until_time, until_terminated } => {
                let ps = peers.iter().map(|&p| peer(p)).collect::<Result<Vec<_>, _>>()?;
                let until = match (until_time, until_terminated) {
                    (Some(t), None) => Until::Time(units(*t)),
                    (None, Some(p)) => Until::Terminated(peer(*p)?),
                    _ => {
                        return Err(ConfigError::Invalid(
                            "slowest_peer needs exactly one of until_time, until_terminated".into(),
                        ))
                    }
                };
                slow = Some(SlowRule::new(k, &ps, until));
            }
            Strategy::CrashMidsend { peer: p, after, kind } => {
                crashes.push(CrashRule::AfterSends { peer: peer(*p)?, count: *after, kind: kind.clone() })
            }
            Strategy::CrashAtProgress { peer: p, phase, stage } => {
                crashes.push(CrashRule::AtProgress { peer: peer(*p)?, phase: *phase, stage: *stage })
            }
            Strategy::CrashAtTime { peer: p, time } => {
                crashes.push(CrashRule::AtTime { peer: peer(*p)?, time: units(*time) })
            }
            Strategy::CrashAtCycle { peer: p, cycle } => {
                crashes.push(CrashRule::AtCycle { peer: peer(*p)?, cycle: *cycle })
            }
            Strategy::RandomCrashes { count, horizon } => {
                let count = count.unwrap_or(ctx.f);
                let victims = pick(&mut rng, k, count, &byz);
                for v in victims {
                    let rule = match rng.gen_range(0..3) {
                        0 => CrashRule::AtTime { peer: v, time: rng.gen_range(0..=units(*horizon)) },
                        1 => CrashRule::AtProgress {
                            peer: v,
                            phase: rng.gen_range(ctx.phases.0..=ctx.phases.1),
                            stage: rng.gen_range(1..=ctx.stages.max(1)),
                        },
                        _ => CrashRule::AfterSends { peer: v, count: rng.gen_range(0..k as u64), kind: None },
                    };
                    crashes.push(rule);
                }
            }
            Strategy::CycleCrashes { count } => {
                let count = count.unwrap_or(ctx.f);
                for v in pick(&mut rng, k, count, &byz) {
                    crashes.push(CrashRule::AtCycle { peer: v, cycle: rng.gen_range(0..=ctx.max_cycle) });
                }
            }
            Strategy::ByzFlip { count, peers }
            | Strategy::ByzEquivocate { count, peers }
            | Strategy::ByzSilent { count, peers }
            | Strategy::ByzFlood { count, peers } => {
                let mode = match s {
                    Strategy::ByzFlip { .. } => ByzMode::Flip,
                    Strategy::ByzEquivocate { .. } => ByzMode::Equivocate,
                    Strategy::ByzSilent { .. } => ByzMode::Silent,
                    _ => ByzMode::Flood,
                };
                let chosen = match peers {
                    Some(list) => list.iter().map(|&p| peer(p)).collect::<Result<Vec<_>, _>>()?,
                    None => pick(&mut rng, k, count.unwrap_or(ctx.byz), &byz),
                };
                for &c in &chosen {
                    byz[c] = Some(mode);
                }
                if mode == ByzMode::Flood {
                    fast.extend(chosen);
                }
            }
            Strategy::LowerBound { target, delayed, corrupted } => {
                let target = peer(*target)?;
                let f = ctx.byz;
                let delayed = match delayed {
                    Some(list) => list.iter().map(|&p| peer(p)).collect::<Result<Vec<_>, _>>()?,
                    None => (k.saturating_sub(f)..k).collect(),
                };
                let corrupted = match corrupted {
                    Some(list) => list.iter().map(|&p| peer(p)).collect::<Result<Vec<_>, _>>()?,
                    None => (0..k.saturating_sub(f)).filter(|&p| p != target).collect(),
                };
                if delayed.len() > f || corrupted.len() > f {
                    return Err(ConfigError::Constraint("|R| <= f and |F| <= f".into()));
                }
                if delayed.iter().any(|p| corrupted.contains(p)) {
                    return Err(ConfigError::Constraint("R and F are disjoint".into()));
                }
                if delayed.contains(&target) || corrupted.contains(&target) {
                    return Err(ConfigError::Constraint("target outside R and F".into()));
                }
                for &c in &corrupted {
                    byz[c] = Some(ByzMode::Replay);
                }
                fast.extend(corrupted.iter().copied());
                slow = Some(SlowRule::new(k, &delayed, Until::Terminated(target)));
                attack = Some(AttackPlan { target, delayed, corrupted });
            }
        }
    }

    let byz_count = byz.iter().filter(|b| b.is_some()).count();
    if byz_count > ctx.byz {
        return Err(ConfigError::Constraint(format!(
            "{byz_count} byzantine peers exceed the budget of {}",
            ctx.byz
        )));
    }
    if ctx.cycles && crashes.iter().any(|c| !matches!(c, CrashRule::AtCycle { .. })) {
        return Err(ConfigError::Constraint(
            "cycle-based protocols allow crashes only at cycle boundaries".into(),
        ));
    }
    let adversary = Composite::new(k, latency).with_crashes(crashes).with_fast(&fast);
    let adversary = match slow {
        Some(s) => adversary.with_slow(s),
        None => adversary,
    };
    Ok(Plan { adversary, byz, attack })
}

/// `count` distinct peers not already byzantine, chosen uniformly.
fn pick(rng: &mut ChaCha8Rng, k: usize, count: usize, byz: &[Option<ByzMode>]) -> Vec<usize> {
    let mut free: Vec<usize> = (0..k).filter(|&p| byz[p].is_none()).collect();
    free.shuffle(rng);
    free.truncate(count);
    free.sort_unstable();
    free
}
