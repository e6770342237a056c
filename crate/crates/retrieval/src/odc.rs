//! Oracle data collection: `m` data sources, some of them byzantine, each
//! downloaded by the peer network; the per-cell median over a fixed set of
//! `2⌈mβ_d⌉+1` sources lands inside the honest range.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adversary::{resolve, Corrupted, PlanContext, Strategy};
use crate::error::ConfigError;
use crate::metrics::{summarize, ComplexityReport};
use crate::model::{median, Source};
use crate::proto::committee::{Committee, CommitteeMsg};
use crate::proto::naive::Naive;
use crate::sim::{CheckLevel, Engine, EngineConfig, Handler};
use crate::trace::ExecutionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceByz {
    /// Reports far above the true value.
    Inflate,
    /// Reports 0.
    Deflate,
    /// Inflates to even peers, deflates to odd ones.
    Equivocate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSourceSet {
    pub n: usize,
    pub width: u8,
    pub arrays: Vec<Vec<u32>>,
    pub byz: Vec<Option<SourceByz>>,
}

impl DataSourceSet {
    pub fn new(width: u8, arrays: Vec<Vec<u32>>, byz: Vec<Option<SourceByz>>) -> Result<Self, ConfigError> {
        let n = arrays.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(ConfigError::Invalid("data sources need n >= 1 cells".into()));
        }
        if arrays.iter().any(|a| a.len() != n) {
            return Err(ConfigError::Invalid("all sources must have the same length".into()));
        }
        if byz.len() != arrays.len() {
            return Err(ConfigError::Invalid("one byzantine flag per source".into()));
        }
        if byz.iter().all(|b| b.is_some()) {
            return Err(ConfigError::Constraint("at least one honest source".into()));
        }
        let mask = mask(width);
        if arrays.iter().flatten().any(|&v| v > mask) {
            return Err(ConfigError::Invalid(format!("value exceeds width {width}")));
        }
        Ok(DataSourceSet { n, width, arrays, byz })
    }

    /// Honest sources are `base + noise` per cell with `noise ≤ spread`.
    pub fn random<R: rand::Rng>(
        n: usize,
        width: u8,
        spread: u32,
        byz: Vec<Option<SourceByz>>,
        rng: &mut R,
    ) -> Result<Self, ConfigError> {
        let top = mask(width).saturating_sub(spread).min(1 << 20);
        let base: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=top)).collect();
        let arrays =
            byz.iter().map(|_| base.iter().map(|&b| b + rng.gen_range(0..=spread)).collect()).collect();
        DataSourceSet::new(width, arrays, byz)
    }

    pub fn m(&self) -> usize {
        self.arrays.len()
    }

    /// `σ(i)`: min and max over honest sources at cell `i` (1-based).
    pub fn honest_range(&self, i: usize) -> (u32, u32) {
        let mut vals = self.honest().map(|j| self.arrays[j][i - 1]);
        let first = vals.next().expect("an honest source exists");
        vals.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    fn honest(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m()).filter(|&j| self.byz[j].is_none())
    }

    /// First cell (1-based) outside its honest range, if any.
    pub fn outside_range(&self, res: &[u32]) -> Option<usize> {
        (1..=self.n).find(|&i| {
            let (lo, hi) = self.honest_range(i);
            res.get(i - 1).is_none_or(|&v| v < lo || v > hi)
        })
    }

    pub fn view(&self, j: usize) -> SourceView<'_> {
        SourceView { set: self, j }
    }

    /// Rows `source,index,value`, both 1-based, with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,index,value\n");
        for (j, a) in self.arrays.iter().enumerate() {
            for (i, v) in a.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", j + 1, i + 1, v);
            }
        }
        out
    }

    /// Parse `source,index,value` rows; a leading header line is skipped.
    /// Every source is honest until flagged.
    pub fn from_csv(text: &str, width: u8) -> Result<Self, ConfigError> {
        let mut cells: Vec<(usize, usize, u32)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("source")) {
                continue;
            }
            let bad = || ConfigError::Invalid(format!("line {}: expected source,index,value", ln + 1));
            let mut parts = line.split(',').map(str::trim);
            let mut next = || parts.next().ok_or_else(bad);
            let j: usize = next()?.parse().map_err(|_| bad())?;
            let i: usize = next()?.parse().map_err(|_| bad())?;
            let v: u32 = next()?.parse().map_err(|_| bad())?;
            if j == 0 || i == 0 {
                return Err(ConfigError::Invalid(format!("line {}: ids are 1-based", ln + 1)));
            }
            cells.push((j, i, v));
        }
        let m = cells.iter().map(|c| c.0).max().unwrap_or(0);
        let n = cells.iter().map(|c| c.1).max().unwrap_or(0);
        let mut arrays = vec![vec![None; n]; m];
        for (j, i, v) in cells {
            arrays[j - 1][i - 1] = Some(v);
        }
        let arrays = arrays
            .into_iter()
            .enumerate()
            .map(|(j, a)| {
                a.into_iter()
                    .enumerate()
                    .map(|(i, v)| v.ok_or_else(|| ConfigError::Invalid(format!("source {} lacks index {}", j + 1, i + 1))))
                    .collect::<Result<Vec<u32>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        DataSourceSet::new(width, arrays, vec![None; m])
    }
}

fn mask(width: u8) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1 << width) - 1
    }
}

/// What peers see when querying source `j`.
pub struct SourceView<'a> {
    set: &'a DataSourceSet,
    j: usize,
}

impl Source for SourceView<'_> {
    fn n(&self) -> usize {
        self.set.n
    }

    fn width(&self) -> u8 {
        self.set.width
    }

    fn read(&self, peer: usize, i: usize) -> Option<u32> {
        let v = *self.set.arrays[self.j].get(i.checked_sub(1)?)?;
        let high = v.saturating_mul(4).saturating_add(1000).min(mask(self.set.width));
        Some(match self.set.byz[self.j] {
            None => v,
            Some(SourceByz::Inflate) => high,
            Some(SourceByz::Deflate) => 0,
            Some(SourceByz::Equivocate) if peer % 2 == 0 => high,
            Some(SourceByz::Equivocate) => 0,
        })
    }
}

/// The aggregation source set: the lowest `2⌈mβ_d⌉+1` source ids (0-based).
pub fn ads(m: usize, beta_d: f64) -> Result<Vec<usize>, ConfigError> {
    if !(0.0..=0.5).contains(&beta_d) {
        return Err(ConfigError::Constraint("0 <= beta_d <= 1/2".into()));
    }
    let size = 2 * ((m as f64 * beta_d) - 1e-9).ceil().max(0.0) as usize + 1;
    if size > m {
        return Err(ConfigError::Constraint(format!("|ADS| = 2⌈mβ_d⌉+1 = {size} exceeds m = {m}")));
    }
    Ok((0..size).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdcMode {
    /// Every peer reads every ADS source in full.
    Naive,
    /// Each ADS source goes through the committee download.
    DownloadBased,
}

/// The peer network a collection runs on.
#[derive(Debug, Clone)]
pub struct NetSpec {
    pub k: usize,
    /// Byzantine peers tolerated (download mode only).
    pub f: usize,
    pub phi: u64,
    pub adversary: Vec<Strategy>,
    pub seed: u64,
    pub check: CheckLevel,
    pub record_events: bool,
}

#[derive(Debug, Clone)]
pub struct OdcOutcome {
    /// Per peer, its median array; `None` for faulty peers.
    pub res: Vec<Option<Vec<u32>>>,
    /// One download per ADS source, in order.
    pub traces: Vec<ExecutionTrace>,
    pub reports: Vec<ComplexityReport>,
    /// Queries by nonfaulty peers over all downloads.
    pub total_queries: u64,
    /// Every download of an honest source gave every nonfaulty peer that exact array.
    pub honest_exact: bool,
}

impl OdcOutcome {
    /// The first nonfaulty peer's result.
    pub fn first(&self) -> Option<&[u32]> {
        self.res.iter().flatten().next().map(Vec::as_slice)
    }
}

pub fn run_odc(data: &DataSourceSet, net: &NetSpec, mode: OdcMode, beta_d: f64) -> Result<OdcOutcome, ConfigError> {
    let chosen = ads(data.m(), beta_d)?;
    if data.byz.iter().filter(|b| b.is_some()).count() as f64 > data.m() as f64 * beta_d + 1e-9 {
        return Err(ConfigError::Constraint("byzantine sources exceed m·β_d".into()));
    }
    let (k, n) = (net.k, data.n);
    if mode == OdcMode::DownloadBased && 3 * net.f >= k {
        return Err(ConfigError::Constraint("download-based collection needs f < k/3".into()));
    }
    let ctx = PlanContext {
        k,
        f: 0,
        byz: net.f,
        cycles: false,
        phases: (0, 0),
        stages: 0,
        max_cycle: 0,
        seed: net.seed,
    };
    let mut outputs: Vec<Vec<Vec<u32>>> = vec![Vec::new(); k];
    let mut faulty = vec![false; k];
    let mut traces = Vec::new();
    let mut honest_exact = true;
    for &j in &chosen {
        let plan = resolve(&net.adversary, &ctx)?;
        let view = data.view(j);
        let expected = data.arrays[j].clone();
        let cfg = EngineConfig {
            phi: net.phi,
            check: net.check,
            record_events: net.record_events,
            seed: net.seed.wrapping_add(j as u64),
            ..EngineConfig::default()
        };
        let byz = plan.byz_mask();
        let trace = match mode {
            OdcMode::Naive => {
                let handlers: Vec<Box<dyn Handler<CommitteeMsg>>> =
                    (0..k).map(|_| Box::new(Naive::new(n)) as Box<dyn Handler<CommitteeMsg>>).collect();
                Engine::new(cfg, &view, expected.clone(), handlers, &byz, Box::new(plan.adversary.clone()))?.run()
            }
            OdcMode::DownloadBased => {
                let handlers: Vec<Box<dyn Handler<CommitteeMsg>>> = (0..k)
                    .map(|i| {
                        let mut c = Committee::new(n, k, net.f, i, net.phi, data.width);
                        c.fill_on_stall = true;
                        let h: Box<dyn Handler<CommitteeMsg>> = Box::new(c);
                        match plan.byz[i] {
                            Some(m) => Box::new(Corrupted::new(h, m, data.width)) as Box<dyn Handler<CommitteeMsg>>,
                            None => h,
                        }
                    })
                    .collect();
                Engine::new(cfg, &view, expected.clone(), handlers, &byz, Box::new(plan.adversary.clone()))?.run()
            }
        };
        let trace = trace.unwrap_or_else(|e| e.into_trace().expect("engine errors carry a trace"));
        for p in &trace.peers {
            let i = p.id as usize - 1;
            match (&p.output, p.nonfaulty()) {
                (Some(out), true) => outputs[i].push(out.clone()),
                _ => faulty[i] = true,
            }
        }
        if data.byz[j].is_none() && !trace.all_correct() {
            honest_exact = false;
        }
        traces.push(trace);
    }
    let res = (0..k)
        .map(|p| (!faulty[p]).then(|| median_rows(&outputs[p], n)))
        .collect();
    let reports: Vec<ComplexityReport> = traces.iter().map(summarize).collect();
    let total_queries = traces.iter().flat_map(|t| t.nonfaulty().map(|p| p.query_count)).sum();
    Ok(OdcOutcome { res, traces, reports, total_queries, honest_exact })
}

/// Per-cell median over a peer's downloaded arrays.
pub fn median_rows(rows: &[Vec<u32>], n: usize) -> Vec<u32> {
    let mut col = Vec::with_capacity(rows.len());
    (0..n)
        .map(|i| {
            col.clear();
            col.extend(rows.iter().map(|r| r[i]));
            median(&mut col)
        })
        .collect()
}

/// Rows `index,value`, 1-based, with a header.
pub fn res_to_csv(res: &[u32]) -> String {
    let mut out = String::from("index,value\n");
    for (i, v) in res.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, v);
    }
    out
}
