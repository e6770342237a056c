//! Scenario configs (`dr-scenario/1`) and running one seed of one.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::{
    parse_strategy, resolve, ByzMode, Composite, Corrupted, Corruptible, Plan, PlanContext, Recorder, Replay,
    Strategy,
};
use crate::error::ConfigError;
use crate::invariants;
use crate::metrics::{summarize, ComplexityReport, Row, Verdict};
use crate::model::{InputArray, Source};
use crate::odc::{run_odc, DataSourceSet, NetSpec, OdcMode, OdcOutcome, SourceByz};
use crate::proto::committee::{committee, Committee, CommitteeMsg};
use crate::proto::crash_multi::{termination_phase, MultiCrash, MultiMsg, Variant};
use crate::proto::crash_single::{SingleCrash, SingleMsg};
use crate::proto::naive::{skipped, Mutant, Naive, PeerMsg};
use crate::proto::rand::{Flooder, RandMode, RandMsg, RandParams, RandPeer, Threshold};
use crate::proto::HEADER_BITS;
use crate::rng::{stream, INPUT_STREAM, PLAN_STREAM};
use crate::sim::{
    audit_crash_legality, audit_cycle_contract, CheckLevel, Engine, EngineConfig, Handler, Message,
};
use crate::trace::ExecutionTrace;

pub const SCHEMA: &str = "dr-scenario/1";
pub const DEFAULT_PHI: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "crash1")]
    Crash1,
    #[serde(rename = "crashF")]
    CrashF,
    #[serde(rename = "crashF_opt")]
    CrashFOpt,
    #[serde(rename = "byz_committee")]
    ByzCommittee,
    #[serde(rename = "byz_2cycle")]
    Byz2Cycle,
    #[serde(rename = "byz_multicycle")]
    ByzMulticycle,
    #[serde(rename = "naive")]
    Naive,
    /// Skips one cell and trusts a majority of `k−f−1` peers for it.
    #[serde(rename = "naive_mutant")]
    NaiveMutant,
    #[serde(rename = "odc_naive")]
    OdcNaive,
    #[serde(rename = "odc_download")]
    OdcDownload,
}

impl Protocol {
    pub const ALL: [Protocol; 10] = [
        Protocol::Crash1,
        Protocol::CrashF,
        Protocol::CrashFOpt,
        Protocol::ByzCommittee,
        Protocol::Byz2Cycle,
        Protocol::ByzMulticycle,
        Protocol::Naive,
        Protocol::NaiveMutant,
        Protocol::OdcNaive,
        Protocol::OdcDownload,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Crash1 => "crash1",
            Protocol::CrashF => "crashF",
            Protocol::CrashFOpt => "crashF_opt",
            Protocol::ByzCommittee => "byz_committee",
            Protocol::Byz2Cycle => "byz_2cycle",
            Protocol::ByzMulticycle => "byz_multicycle",
            Protocol::Naive => "naive",
            Protocol::NaiveMutant => "naive_mutant",
            Protocol::OdcNaive => "odc_naive",
            Protocol::OdcDownload => "odc_download",
        }
    }

    pub fn parse(s: &str) -> Result<Protocol, ConfigError> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::Unknown { what: "protocol", name: s.to_string() })
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Protocol::Byz2Cycle | Protocol::ByzMulticycle)
    }

    pub fn uses_beta(self) -> bool {
        self.is_randomized()
    }

    pub fn is_odc(self) -> bool {
        matches!(self, Protocol::OdcNaive | Protocol::OdcDownload)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the input array comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    /// `random`, `zeros`, `ones` or `alternating`.
    Named(String),
    Bits { bits: String },
    Cells { cells: Vec<u32> },
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec::Named("random".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdcSpec {
    pub m: usize,
    pub beta_d: f64,
    /// Spread of honest sources around a common base.
    pub spread: u32,
    /// Behaviours handed out round-robin to the byzantine sources.
    pub source_adversary: Vec<SourceByz>,
    /// CSV of `source,index,value`; overrides `n` and random generation.
    pub sources_csv: Option<String>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub id: String,
    pub protocol: Protocol,
    pub n: usize,
    pub k: usize,
    /// Crash or byzantine budget.
    pub f: usize,
    pub beta: f64,
    pub phi: u64,
    pub c: f64,
    pub width: u8,
    pub adversary: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub check: CheckLevel,
    pub input: InputSpec,
    pub pacing: bool,
    pub seg_len: Option<usize>,
    pub threshold: Threshold,
    pub odc: Option<OdcSpec>,
    /// Deliberate protocol bug, for checking that the harness catches it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Peer 1 hands reassigned cells to the next peer over.
    SkewedReassignment,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    schema: Option<String>,
    id: Option<String>,
    protocol: Option<String>,
    n: Option<usize>,
    k: Option<usize>,
    f: Option<usize>,
    beta: Option<f64>,
    phi: Option<u64>,
    c: Option<f64>,
    width: Option<u8>,
    adversary: Option<Value>,
    seed: Option<u64>,
    seeds: Option<Value>,
    check: Option<CheckLevel>,
    input: Option<InputSpec>,
    pacing: Option<bool>,
    seg_len: Option<usize>,
    threshold: Option<Threshold>,
    m: Option<usize>,
    beta_d: Option<f64>,
    spread: Option<u32>,
    source_adversary: Option<Value>,
    sources_csv: Option<String>,
    mutation: Option<Mutation>,
}

/// Everything wrong with a config, one item per problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigError> for ConfigErrors {
    fn from(e: ConfigError) -> Self {
        ConfigErrors(vec![e])
    }
}

/// Seeds from a number, a list, or a string `a..b` (inclusive).
pub fn parse_seeds(v: &Value) -> Result<Vec<u64>, ConfigError> {
    match v {
        Value::Number(n) => n.as_u64().map(|s| vec![s]).ok_or_else(|| ConfigError::Invalid("seed must be a u64".into())),
        Value::Array(list) => list
            .iter()
            .map(|s| s.as_u64().ok_or_else(|| ConfigError::Invalid("seeds must be u64 values".into())))
            .collect(),
        Value::String(s) => parse_seed_range(s),
        _ => Err(ConfigError::Invalid("seeds: number, list or \"a..b\"".into())),
    }
}

pub fn parse_seed_range(s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("seed range `{s}`: expected a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigErrors> {
    let raw: Raw = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(format!("schema: {e}")))?;
    let mut errs = Vec::new();

    let schema = raw.schema.unwrap_or_else(|| SCHEMA.to_string());
    if schema != SCHEMA {
        errs.push(ConfigError::Invalid(format!("schema `{schema}` is not `{SCHEMA}`")));
    }
    let protocol = match raw.protocol.as_deref().map(Protocol::parse) {
        Some(Ok(p)) => Some(p),
        Some(Err(e)) => {
            errs.push(e);
            None
        }
        None => {
            errs.push(ConfigError::Missing("protocol"));
            None
        }
    };
    let k = raw.k.unwrap_or_else(|| {
        errs.push(ConfigError::Missing("k"));
        0
    });
    let odc_csv = raw.sources_csv.clone();
    let n = match (raw.n, protocol.is_some_and(Protocol::is_odc) && odc_csv.is_some()) {
        (Some(n), _) => n,
        (None, true) => 0,
        (None, false) => {
            errs.push(ConfigError::Missing("n"));
            0
        }
    };
    let width = raw.width.unwrap_or(if protocol.is_some_and(Protocol::is_odc) { 32 } else { 1 });
    if !(1..=32).contains(&width) {
        errs.push(ConfigError::Constraint("1 <= width <= 32".into()));
    }
    let beta = raw.beta.unwrap_or(0.0);
    let f = raw.f.unwrap_or_else(|| match protocol {
        Some(Protocol::Crash1) => 1,
        Some(p) if !p.uses_beta() => (beta * k as f64).floor() as usize,
        _ => 0,
    });
    let c = raw.c.unwrap_or(1.0);
    if c < 1.0 {
        errs.push(ConfigError::Constraint("c >= 1".into()));
    }
    let seeds = match (&raw.seeds, raw.seed) {
        (Some(v), _) => parse_seeds(v).unwrap_or_else(|e| {
            errs.push(e);
            Vec::new()
        }),
        (None, Some(s)) => vec![s],
        (None, None) => vec![0],
    };
    let adversary = match &raw.adversary {
        None => vec![Strategy::Uniform { d: 1.0 }],
        Some(Value::Array(list)) => list
            .iter()
            .filter_map(|v| parse_strategy(v).map_err(|e| errs.push(e)).ok())
            .collect(),
        Some(v) => parse_strategy(v).map(|s| vec![s]).unwrap_or_else(|e| {
            errs.push(e);
            Vec::new()
        }),
    };
    let default_phi = match protocol {
        Some(p) if p.is_randomized() => DEFAULT_PHI.max(HEADER_BITS + 64 + n as u64 * width as u64),
        _ => DEFAULT_PHI,
    };
    let phi = raw.phi.unwrap_or(default_phi);
    if phi == 0 {
        errs.push(ConfigError::Constraint("phi >= 1".into()));
    }

    let odc = if protocol.is_some_and(Protocol::is_odc) {
        let source_adversary = match &raw.source_adversary {
            None => vec![SourceByz::Inflate],
            Some(Value::String(s)) => serde_json::from_value(Value::String(s.clone()))
                .map(|b| vec![b])
                .unwrap_or_else(|_| {
                    errs.push(ConfigError::Unknown { what: "source adversary", name: s.clone() });
                    Vec::new()
                }),
            Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|e| {
                errs.push(ConfigError::Invalid(format!("source_adversary: {e}")));
                Vec::new()
            }),
        };
        let m = raw.m.unwrap_or_else(|| {
            if odc_csv.is_none() {
                errs.push(ConfigError::Missing("m"));
            }
            0
        });
        Some(OdcSpec {
            m,
            beta_d: raw.beta_d.unwrap_or(0.0),
            spread: raw.spread.unwrap_or(16),
            source_adversary,
            sources_csv: odc_csv,
        })
    } else {
        None
    };

    let Some(protocol) = protocol else { return Err(ConfigErrors(errs)) };
    let sc = Scenario {
        schema,
        id: raw.id.unwrap_or_else(|| protocol.name().to_string()),
        protocol,
        n,
        k,
        f,
        beta,
        phi,
        c,
        width,
        adversary,
        seeds,
        check: raw.check.unwrap_or_default(),
        input: raw.input.unwrap_or_default(),
        pacing: raw.pacing.unwrap_or(true),
        seg_len: raw.seg_len,
        threshold: raw.threshold.unwrap_or_default(),
        odc,
        mutation: raw.mutation,
    };
    if errs.is_empty() {
        if let Err(mut more) = sc.validate() {
            errs.append(&mut more.0);
        }
    }
    if errs.is_empty() {
        Ok(sc)
    } else {
        Err(ConfigErrors(errs))
    }
}

impl Scenario {
    /// A scenario with defaults for everything but the essentials.
    pub fn new(protocol: Protocol, n: usize, k: usize) -> Scenario {
        let width = if protocol.is_odc() { 32 } else { 1 };
        Scenario {
            schema: SCHEMA.into(),
            id: protocol.name().into(),
            protocol,
            n,
            k,
            f: usize::from(protocol == Protocol::Crash1),
            beta: 0.0,
            phi: if protocol.is_randomized() { DEFAULT_PHI.max(HEADER_BITS + 64 + n as u64) } else { DEFAULT_PHI },
            c: 1.0,
            width,
            adversary: vec![Strategy::Uniform { d: 1.0 }],
            seeds: vec![0],
            check: CheckLevel::Bounds,
            input: InputSpec::default(),
            pacing: true,
            seg_len: None,
            threshold: Threshold::default(),
            odc: None,
            mutation: None,
        }
    }

    /// Parameter legality for the protocol, every violated constraint listed.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let (n, k, f) = (self.n, self.k, self.f);
        let mut need = |ok: bool, what: &str| {
            if !ok {
                errs.push(ConfigError::Constraint(what.to_string()));
            }
        };
        need(k >= 1, "k >= 1");
        if self.mutation.is_some() {
            need(matches!(self.protocol, Protocol::CrashF | Protocol::CrashFOpt), "mutation applies to crashF");
        }
        need(n >= 1 || (self.protocol.is_odc() && self.odc.as_ref().is_some_and(|o| o.sources_csv.is_some())), "n >= 1");
        match self.protocol {
            Protocol::Crash1 => {
                need(k >= 3, "k >= 3");
                need(f <= 1, "f <= 1");
            }
            Protocol::CrashF | Protocol::CrashFOpt => need(f < k, "f < k"),
            Protocol::ByzCommittee => need(2 * f + 1 <= k, "2f+1 ≤ k"),
            Protocol::Byz2Cycle | Protocol::ByzMulticycle => {
                need((0.0..0.5).contains(&self.beta), "0 ≤ β < 1/2");
                need(self.seg_len.is_none_or(|s| s >= 1), "seg_len >= 1");
            }
            Protocol::Naive => need(f < k, "f < k"),
            Protocol::NaiveMutant => need(f + 2 <= k, "f ≤ k−2"),
            Protocol::OdcNaive | Protocol::OdcDownload => {
                if let Some(o) = &self.odc {
                    need(o.beta_d <= 0.5, "β_d ≤ 1/2");
                    if o.sources_csv.is_none() {
                        let size = 2 * ((o.m as f64 * o.beta_d) - 1e-9).ceil().max(0.0) as usize + 1;
                        need(size <= o.m, "2⌈mβ_d⌉+1 ≤ m");
                    }
                }
                if self.protocol == Protocol::OdcDownload {
                    need(3 * f < k, "f < k/3");
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn rand_params(&self) -> Result<RandParams, ConfigError> {
        let mode = match self.protocol {
            Protocol::ByzMulticycle => RandMode::MultiCycle,
            _ => RandMode::TwoCycle,
        };
        let mut p = match self.seg_len {
            Some(s) => RandParams::with_seg_len(self.n, self.k, self.beta, self.c, s, mode)?,
            None => {
                let mut p = RandParams::two_cycle(self.n, self.k, self.beta, self.c)?;
                p.mode = mode;
                p
            }
        };
        p.threshold = self.threshold;
        Ok(p)
    }

    /// Randomized scenarios whose segment length misses the high-probability
    /// premise; their correctness is only conditional.
    pub fn outside_guarantee(&self) -> bool {
        self.protocol.is_randomized() && self.rand_params().is_ok_and(|p| !p.query_all && !p.premise_holds())
    }

    /// Byzantine budget.
    pub fn byz_budget(&self) -> usize {
        match self.protocol {
            Protocol::ByzCommittee | Protocol::Naive | Protocol::NaiveMutant | Protocol::OdcDownload => self.f,
            Protocol::Byz2Cycle | Protocol::ByzMulticycle => (self.beta * self.k as f64 + 1e-9).floor() as usize,
            _ => 0,
        }
    }

    pub fn crash_budget(&self) -> usize {
        match self.protocol {
            Protocol::Crash1 => 1,
            Protocol::CrashF | Protocol::CrashFOpt => self.f,
            // crashed and byzantine peers share the β budget
            Protocol::Byz2Cycle | Protocol::ByzMulticycle => self.byz_budget(),
            _ => 0,
        }
    }

    pub fn f_or_beta(&self) -> String {
        if self.protocol.uses_beta() {
            format!("{}", self.beta)
        } else {
            self.f.to_string()
        }
    }

    pub fn adversary_label(&self) -> String {
        let names: Vec<String> = self
            .adversary
            .iter()
            .map(|s| {
                serde_json::to_value(s)
                    .ok()
                    .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
                    .unwrap_or_default()
            })
            .collect();
        names.join("+")
    }

    fn plan_context(&self, seed: u64) -> PlanContext {
        let (phases, stages, max_cycle) = match self.protocol {
            Protocol::Crash1 => ((1, 2), 3, 0),
            Protocol::CrashF | Protocol::CrashFOpt => ((0, termination_phase(self.n, self.k, self.f)), 3, 0),
            Protocol::Byz2Cycle | Protocol::ByzMulticycle => {
                ((0, 0), 0, self.rand_params().map_or(0, |p| p.last_cycle()))
            }
            _ => ((0, 0), 0, 0),
        };
        PlanContext {
            k: self.k,
            f: self.crash_budget(),
            byz: self.byz_budget(),
            cycles: self.protocol.is_randomized(),
            phases,
            stages,
            max_cycle,
            seed,
        }
    }

    fn engine_config(&self, seed: u64, record_events: bool) -> EngineConfig {
        EngineConfig {
            phi: self.phi,
            pacing: self.pacing,
            cycles: self.protocol.is_randomized(),
            record_events,
            check: self.check,
            max_crashes: self.crash_budget(),
            seed,
            ..EngineConfig::default()
        }
    }

    /// The input array for one seed.
    pub fn input_array(&self, seed: u64) -> Result<InputArray, ConfigError> {
        let n = self.n;
        let cells: Vec<u32> = match &self.input {
            InputSpec::Named(name) => match name.as_str() {
                "random" => {
                    let mut rng = stream(seed, INPUT_STREAM);
                    return Ok(if self.width == 1 {
                        InputArray::random_bits(n, &mut rng)
                    } else {
                        let top = if self.width >= 32 { u32::MAX } else { (1 << self.width) - 1 };
                        let cells = (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0..=top)).collect();
                        InputArray::words(self.width, cells)?
                    });
                }
                "zeros" => vec![0; n],
                "ones" => vec![1; n],
                "alternating" => (0..n).map(|i| (i % 2) as u32).collect(),
                other => return Err(ConfigError::Unknown { what: "input", name: other.to_string() }),
            },
            InputSpec::Bits { bits } => bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(ConfigError::Invalid(format!("input bits: unexpected `{c}`"))),
                })
                .collect::<Result<_, _>>()?,
            InputSpec::Cells { cells } => cells.clone(),
        };
        if cells.len() != n {
            return Err(ConfigError::Invalid(format!("input has {} cells, n = {n}", cells.len())));
        }
        Ok(InputArray::words(self.width, cells)?)
    }

    pub fn row(&self, seed: u64, report: &ComplexityReport) -> Row {
        Row {
            scenario: self.id.clone(),
            seed,
            protocol: self.protocol.name().to_string(),
            n: self.n,
            k: self.k,
            f_or_beta: self.f_or_beta(),
            adversary: self.adversary_label(),
            report: report.clone(),
        }
    }
}

/// One finished seed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    /// One trace, or one per downloaded source for the oracle application.
    pub traces: Vec<ExecutionTrace>,
    pub report: ComplexityReport,
    pub odc: Option<OdcOutcome>,
    /// Set for lower-bound attack runs: the input the attack run used.
    pub attacked: bool,
}

impl RunOutcome {
    pub fn trace(&self) -> &ExecutionTrace {
        &self.traces[0]
    }
}

pub fn run_seed(sc: &Scenario, seed: u64) -> Result<RunOutcome, ConfigError> {
    run_seed_with(sc, seed, false)
}

/// As [`run_seed`], optionally keeping the per-event log.
pub fn run_seed_with(sc: &Scenario, seed: u64, record_events: bool) -> Result<RunOutcome, ConfigError> {
    if sc.protocol.is_odc() {
        return run_odc_seed(sc, seed, record_events);
    }
    let plan = resolve(&sc.adversary, &sc.plan_context(seed))?;
    let mut cfg = sc.engine_config(seed, record_events);
    if sc.protocol.is_randomized() {
        let byz = plan.byz.iter().filter(|b| b.is_some()).count();
        cfg.max_crashes = cfg.max_crashes.saturating_sub(byz);
    }
    let scenario_json = scenario_json(sc, seed);
    let (n, k) = (sc.n, sc.k);

    if plan.attack.is_some() {
        let trace = match sc.protocol {
            Protocol::Naive => attack(sc, cfg, &plan, scenario_json, |_| Box::new(Naive::new(n)))?,
            Protocol::NaiveMutant => {
                attack(sc, cfg, &plan, scenario_json, |i| Box::new(Mutant::new(n, k, sc.f, i)))?
            }
            _ => return Err(ConfigError::Constraint("lower_bound applies to naive and naive_mutant".into())),
        };
        return Ok(finish(seed, trace, true));
    }

    let input = sc.input_array(seed)?;
    let expected = input.cells().to_vec();
    let trace = match sc.protocol {
        Protocol::Crash1 => run_plain(cfg, &input, expected, &plan, scenario_json, |i| {
            Box::new(SingleCrash::new(n, k, i)) as Box<dyn Handler<SingleMsg>>
        })?,
        Protocol::CrashF | Protocol::CrashFOpt => {
            let variant = if sc.protocol == Protocol::CrashF { Variant::Plain } else { Variant::TimeOptimized };
            let skew = sc.mutation == Some(Mutation::SkewedReassignment);
            run_plain(cfg, &input, expected, &plan, scenario_json, |i| {
                let p = MultiCrash::new(n, k, sc.f, i, variant);
                let p = if skew && i == 0 { p.with_skewed_reassignment() } else { p };
                Box::new(p) as Box<dyn Handler<MultiMsg>>
            })?
        }
        Protocol::ByzCommittee => {
            committee(1, k, sc.f)?;
            let (phi, w, f) = (sc.phi, sc.width, sc.f);
            run_byz(cfg, &input, expected, &plan, sc.width, scenario_json, |i| {
                Box::new(Committee::new(n, k, f, i, phi, w)) as Box<dyn Handler<CommitteeMsg>>
            }, None::<fn() -> Box<dyn Handler<CommitteeMsg>>>)?
        }
        Protocol::Byz2Cycle | Protocol::ByzMulticycle => {
            let params = Arc::new(sc.rand_params()?);
            let honest: Arc<Vec<bool>> = Arc::new(plan.byz.iter().map(|b| b.is_none()).collect());
            let flood_params = params.clone();
            run_byz(
                cfg,
                &input,
                expected,
                &plan,
                sc.width,
                scenario_json,
                |i| Box::new(RandPeer::new(params.clone(), i, Some(honest.clone()))) as Box<dyn Handler<RandMsg>>,
                Some(move || Box::new(Flooder::new(flood_params.clone())) as Box<dyn Handler<RandMsg>>),
            )?
        }
        Protocol::Naive => run_byz(cfg, &input, expected, &plan, sc.width, scenario_json, |_| {
            Box::new(Naive::new(n)) as Box<dyn Handler<PeerMsg>>
        }, None::<fn() -> Box<dyn Handler<PeerMsg>>>)?,
        Protocol::NaiveMutant => run_byz(cfg, &input, expected, &plan, sc.width, scenario_json, |i| {
            Box::new(Mutant::new(n, k, sc.f, i)) as Box<dyn Handler<PeerMsg>>
        }, None::<fn() -> Box<dyn Handler<PeerMsg>>>)?,
        Protocol::OdcNaive | Protocol::OdcDownload => unreachable!("handled above"),
    };
    Ok(finish(seed, trace, false))
}

fn finish(seed: u64, trace: ExecutionTrace, attacked: bool) -> RunOutcome {
    let report = summarize(&trace);
    RunOutcome { seed, traces: vec![trace], report, odc: None, attacked }
}

fn scenario_json(sc: &Scenario, seed: u64) -> Value {
    let mut v = serde_json::to_value(sc).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.remove("seeds");
        map.insert("seed".into(), seed.into());
    }
    v
}

fn collect(r: Result<ExecutionTrace, crate::error::SimError>) -> ExecutionTrace {
    r.unwrap_or_else(|e| e.into_trace().expect("engine errors carry a trace"))
}

fn run_plain<'a, M: Message + 'a>(
    cfg: EngineConfig,
    source: &'a dyn Source,
    expected: Vec<u32>,
    plan: &Plan,
    scenario: Value,
    honest: impl Fn(usize) -> Box<dyn Handler<M> + 'a>,
) -> Result<ExecutionTrace, ConfigError> {
    let k = plan.byz.len();
    let handlers = (0..k).map(honest).collect();
    let engine =
        Engine::new(cfg, source, expected, handlers, &plan.byz_mask(), Box::new(plan.adversary.clone()))?;
    Ok(collect(engine.with_scenario(scenario).run()))
}

#[allow(clippy::too_many_arguments)]
fn run_byz<'a, M: Corruptible + 'a, H, F>(
    cfg: EngineConfig,
    source: &'a dyn Source,
    expected: Vec<u32>,
    plan: &Plan,
    width: u8,
    scenario: Value,
    honest: H,
    flood: Option<F>,
) -> Result<ExecutionTrace, ConfigError>
where
    H: Fn(usize) -> Box<dyn Handler<M> + 'a>,
    F: Fn() -> Box<dyn Handler<M> + 'a>,
{
    let k = plan.byz.len();
    let handlers = (0..k)
        .map(|i| match (plan.byz[i], &flood) {
            (None, _) => honest(i),
            (Some(ByzMode::Flood), Some(make)) => make(),
            (Some(mode), _) => Box::new(Corrupted::new(honest(i), mode, width)) as Box<dyn Handler<M> + 'a>,
        })
        .collect();
    let engine =
        Engine::new(cfg, source, expected, handlers, &plan.byz_mask(), Box::new(plan.adversary.clone()))?;
    Ok(collect(engine.with_scenario(scenario).run()))
}

/// The lower-bound execution pattern: a failure-free all-zeros reference
/// run is recorded, then replayed by the corrupted set against an input
/// that differs in the target's unqueried cell, while the delayed set is
/// held back until the target terminates.
fn attack<'a>(
    sc: &Scenario,
    cfg: EngineConfig,
    plan: &Plan,
    scenario: Value,
    make: impl Fn(usize) -> Box<dyn Handler<PeerMsg> + 'a>,
) -> Result<ExecutionTrace, ConfigError> {
    let plan_attack = plan.attack.as_ref().expect("attack plan present");
    let (n, k) = (sc.n, sc.k);
    let reference = InputArray::zeros(n);
    let logs: Vec<Rc<RefCell<Vec<(usize, PeerMsg)>>>> = (0..k).map(|_| Rc::default()).collect();
    let handlers: Vec<Box<dyn Handler<PeerMsg> + 'a>> = (0..k)
        .map(|i| {
            if plan_attack.corrupted.contains(&i) {
                Box::new(Recorder::new(make(i), logs[i].clone())) as Box<dyn Handler<PeerMsg>>
            } else {
                make(i)
            }
        })
        .collect();
    let ref_cfg = EngineConfig { max_crashes: 0, record_events: false, ..cfg.clone() };
    let ref_trace = collect(
        Engine::new(ref_cfg, &reference, vec![0; n], handlers, &vec![false; k], Box::new(Composite::uniform(k, 1.0)))?
            .run(),
    );
    drop(ref_trace);

    let target_cell = skipped(plan_attack.target, n);
    let input = reference.with_cell(target_cell, 1);
    let expected = input.cells().to_vec();
    let handlers: Vec<Box<dyn Handler<PeerMsg> + 'a>> = (0..k)
        .map(|i| {
            if plan_attack.corrupted.contains(&i) {
                let script = logs[i].borrow().clone();
                Box::new(Replay::new(script)) as Box<dyn Handler<PeerMsg>>
            } else {
                make(i)
            }
        })
        .collect();
    let engine = Engine::new(cfg, &input, expected, handlers, &plan.byz_mask(), Box::new(plan.adversary.clone()))?;
    Ok(collect(engine.with_scenario(scenario).run()))
}

fn run_odc_seed(sc: &Scenario, seed: u64, record_events: bool) -> Result<RunOutcome, ConfigError> {
    let spec = sc.odc.as_ref().ok_or(ConfigError::Missing("m"))?;
    let data = odc_data(sc, seed)?;
    let net = NetSpec {
        k: sc.k,
        f: sc.f,
        phi: sc.phi,
        adversary: sc.adversary.clone(),
        seed,
        check: sc.check,
        record_events,
    };
    let mode = if sc.protocol == Protocol::OdcNaive { OdcMode::Naive } else { OdcMode::DownloadBased };
    let out = run_odc(&data, &net, mode, spec.beta_d)?;
    let mut report = combine(&out.reports);
    let in_range = out.res.iter().flatten().all(|r| data.outside_range(r).is_none());
    let completed = out.reports.iter().all(|r| r.verdict != Verdict::Deadlock && r.verdict != Verdict::Livelock);
    report.verdict = if in_range && completed && out.honest_exact { Verdict::Correct } else { Verdict::Incorrect };
    Ok(RunOutcome { seed, traces: out.traces.clone(), report, odc: Some(out), attacked: false })
}

/// The data sources for one seed of an oracle scenario.
pub fn odc_data(sc: &Scenario, seed: u64) -> Result<DataSourceSet, ConfigError> {
    let spec = sc.odc.as_ref().ok_or(ConfigError::Missing("m"))?;
    let mut data = match &spec.sources_csv {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Invalid(format!("sources_csv `{path}`: {e}")))?;
            DataSourceSet::from_csv(&text, sc.width)?
        }
        None => {
            let mut rng = stream(seed, INPUT_STREAM);
            DataSourceSet::random(sc.n, sc.width, spec.spread, vec![None; spec.m], &mut rng)?
        }
    };
    let m = data.m();
    let count = ((m as f64 * spec.beta_d) + 1e-9).floor() as usize;
    if !spec.source_adversary.is_empty() && count > 0 {
        let mut rng = stream(seed, PLAN_STREAM + 1);
        let mut ids: Vec<usize> = (0..m).collect();
        rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
        let mut chosen = ids[..count.min(m - 1)].to_vec();
        chosen.sort_unstable();
        for (r, j) in chosen.into_iter().enumerate() {
            data.byz[j] = Some(spec.source_adversary[r % spec.source_adversary.len()]);
        }
    }
    Ok(data)
}

/// Downloads run one after another: queries add up per peer, time adds up.
fn combine(reports: &[ComplexityReport]) -> ComplexityReport {
    let k = reports.first().map_or(0, |r| r.q_per_peer.len());
    let mut q_per_peer: Vec<Option<u64>> = vec![Some(0); k];
    for r in reports {
        for (acc, q) in q_per_peer.iter_mut().zip(&r.q_per_peer) {
            *acc = match (*acc, q) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
    }
    ComplexityReport {
        q_max: q_per_peer.iter().flatten().copied().max().unwrap_or(0),
        q_per_peer,
        m_total: reports.iter().map(|r| r.m_total).sum(),
        m_bits: reports.iter().map(|r| r.m_bits).sum(),
        t: reports.iter().map(|r| r.t).sum(),
        verdict: Verdict::Correct,
        phases: None,
        cycles: None,
        det_queries_mean: None,
        premise_holds: None,
    }
}

/// Bound and invariant violations for one run, empty when everything holds.
/// Unconditional correctness is expected except for the under-querying
/// mutant and for randomized runs whose honest-pick premise failed.
pub fn check_run(sc: &Scenario, out: &RunOutcome) -> Vec<String> {
    let mut v = Vec::new();
    if sc.check == CheckLevel::Off {
        return v;
    }
    let r = &out.report;
    let (n, k, f) = (sc.n, sc.k, sc.f);
    let expect_correct = match sc.protocol {
        Protocol::NaiveMutant => false,
        p if p.is_randomized() => r.premise_holds != Some(false),
        _ => true,
    };
    if expect_correct && !r.verdict.is_correct() {
        v.push(format!("verdict {}", r.verdict));
    }
    for t in &out.traces {
        if let Err(e) = crate::metrics::check_query_ledger(t) {
            v.push(e);
        }
    }
    let t = out.trace();
    match sc.protocol {
        Protocol::Crash1 => {
            let b = invariants::single_crash_bound(n, k);
            if r.q_max > b {
                v.push(format!("Q_max {} > {b}", r.q_max));
            }
        }
        Protocol::CrashF | Protocol::CrashFOpt => {
            let b = invariants::multi_crash_bound(n, k, f);
            if r.q_max > b {
                v.push(format!("Q_max {} > {b}", r.q_max));
            }
            let top = termination_phase(n, k, f);
            if invariants::max_phase(t).is_some_and(|p| p > top) {
                v.push(format!("phase count exceeds {top}"));
            }
            if sc.check == CheckLevel::Full {
                if let Err(e) = invariants::assignment_coherence(t) {
                    v.push(format!("assignment coherence: {e}"));
                }
                if let Some((peer, phase, unknown, bound)) = invariants::unknown_bound_violations(t, f).first() {
                    v.push(format!("peer {peer} starts phase {phase} with {unknown} unknown > {bound:.2}"));
                }
            }
        }
        Protocol::ByzCommittee => {
            let b = invariants::committee_bound(n, k, f);
            if r.q_max > b {
                v.push(format!("Q_max {} > {b}", r.q_max));
            }
        }
        Protocol::Byz2Cycle | Protocol::ByzMulticycle => {
            if let Err(e) = audit_cycle_contract(t) {
                v.push(format!("cycle contract: {e}"));
            }
            if let Err(e) = audit_crash_legality(t) {
                v.push(format!("crash legality: {e}"));
            }
        }
        _ => {}
    }
    v
}
