//! Scenario runner: parses configs, sweeps seeds in parallel and writes
//! `results.csv`, `summary.txt` and optional per-run traces.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use retrieval::adversary::builtin_strategies;
use retrieval::error::ConfigError;
use retrieval::metrics::{aggregate, ComplexityReport, CSV_HEADER};
use retrieval::scenario::{check_run, parse_scenario, parse_seed_range, run_seed_with, Scenario};
use retrieval::sim::CheckLevel;

#[derive(Debug, Parser)]
#[command(name = "retrieval", version, about = "Run data-retrieval protocol experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every (scenario, seed) pair of a config file.
    Run(RunArgs),
    /// List the adversary strategies a config may name.
    Strategies,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// JSON scenario, or an array of scenarios.
    pub config: PathBuf,
    /// Override the seeds of every scenario, e.g. `1..100` (inclusive).
    #[arg(long)]
    pub seeds: Option<String>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Write a per-event JSON trace for every run.
    #[arg(long)]
    pub trace: bool,
    /// Leave the generation time out of the outputs.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Override the invariant-check level.
    #[arg(long, value_enum)]
    pub check: Option<Check>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Off,
    Bounds,
    Full,
}

impl From<Check> for CheckLevel {
    fn from(c: Check) -> Self {
        match c {
            Check::Off => CheckLevel::Off,
            Check::Bounds => CheckLevel::Bounds,
            Check::Full => CheckLevel::Full,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One finished (scenario, seed) pair.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: usize,
    pub seed: u64,
    pub report: Option<ComplexityReport>,
    pub csv: Option<String>,
    pub violations: Vec<String>,
    pub traces: Vec<String>,
}

/// What a suite run produced, before anything is written.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub scenarios: Vec<Scenario>,
    pub runs: Vec<RunResult>,
}

impl SuiteResult {
    pub fn violations(&self) -> usize {
        self.runs.iter().map(|r| r.violations.len()).sum()
    }

    pub fn csv(&self, timestamp: Option<u64>) -> String {
        let mut s = String::new();
        if let Some(t) = timestamp {
            let _ = writeln!(s, "# generated_at={t}");
        }
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.runs {
            if let Some(row) = &r.csv {
                s.push_str(row);
                s.push('\n');
            }
        }
        s
    }

    pub fn summary(&self, timestamp: Option<u64>) -> String {
        let mut s = String::new();
        if let Some(t) = timestamp {
            let _ = writeln!(s, "generated_at: {t}");
        }
        for (idx, sc) in self.scenarios.iter().enumerate() {
            let runs: Vec<&RunResult> = self.runs.iter().filter(|r| r.scenario == idx).collect();
            let reports: Vec<ComplexityReport> = runs.iter().filter_map(|r| r.report.clone()).collect();
            let _ = writeln!(
                s,
                "scenario {} ({}, n={}, k={}, f_or_beta={}, adversary={})",
                sc.id,
                sc.protocol.name(),
                sc.n,
                sc.k,
                sc.f_or_beta(),
                sc.adversary_label()
            );
            match aggregate(&reports) {
                Some(a) => {
                    let _ = writeln!(s, "  runs: {}", a.runs);
                    let _ = writeln!(s, "  Q_max: mean {:.3}, max {}, p95 {}", a.q_mean, a.q_max, a.q_p95);
                    let _ = writeln!(s, "  T: mean {:.3}, max {:.3}", a.t_mean, a.t_max);
                    let _ = writeln!(s, "  failures: {} ({:.4})", a.failures, a.failure_rate);
                }
                None => {
                    let _ = writeln!(s, "  runs: 0");
                }
            }
            let bad: Vec<&RunResult> = runs.iter().copied().filter(|r| !r.violations.is_empty()).collect();
            let _ = writeln!(s, "  violations: {}", bad.iter().map(|r| r.violations.len()).sum::<usize>());
            for r in bad.iter().take(20) {
                let _ = writeln!(s, "    seed {}: {}", r.seed, r.violations.join("; "));
            }
        }
        let _ = writeln!(s, "total violations: {}", self.violations());
        s
    }
}

/// Parse a config file holding one scenario object or an array of them.
pub fn load_config(text: &str) -> Result<Vec<Scenario>, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("schema: {e}"))?;
    let items = match v {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    let mut out = Vec::new();
    let mut errs = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match parse_scenario(&item.to_string()) {
            Ok(sc) => out.push(sc),
            Err(e) => errs.push(format!("scenario {}: {e}", i + 1)),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs.join("\n"))
    }
}

/// Run every (scenario, seed) pair on `parallel` threads, keeping
/// results in config order.
pub fn run_suite(scenarios: Vec<Scenario>, parallel: usize, trace: bool) -> Result<SuiteResult, CliError> {
    let jobs: Vec<(usize, u64)> =
        scenarios.iter().enumerate().flat_map(|(i, sc)| sc.seeds.iter().map(move |&s| (i, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let runs = pool.install(|| {
        jobs.par_iter().map(|&(i, seed)| run_one(i, &scenarios[i], seed, trace)).collect::<Vec<_>>()
    });
    Ok(SuiteResult { scenarios, runs })
}

fn run_one(idx: usize, sc: &Scenario, seed: u64, trace: bool) -> RunResult {
    match run_seed_with(sc, seed, trace) {
        Ok(out) => {
            let violations = check_run(sc, &out);
            let traces = if trace { out.traces.iter().map(|t| t.to_json()).collect() } else { Vec::new() };
            RunResult {
                scenario: idx,
                seed,
                csv: Some(sc.row(seed, &out.report).csv()),
                report: Some(out.report),
                violations,
                traces,
            }
        }
        Err(e) => RunResult {
            scenario: idx,
            seed,
            report: None,
            csv: None,
            violations: vec![format!("run failed: {e}")],
            traces: Vec::new(),
        },
    }
}

fn trace_name(sc: &Scenario, seed: u64, part: usize, parts: usize) -> String {
    let id: String = sc.id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if parts > 1 {
        format!("trace-{id}-{seed}-src{}.json", part + 1)
    } else {
        format!("trace-{id}-{seed}.json")
    }
}

fn write(path: &Path, body: &str, errors: &mut Vec<String>) {
    if let Err(e) = fs::write(path, body) {
        errors.push(format!("writing {}: {e}", path.display()));
    }
}

/// Write the artifacts of a suite; returns one message per failed write.
pub fn write_artifacts(res: &SuiteResult, out: &Path, timestamp: Option<u64>) -> Vec<String> {
    let mut errors = Vec::new();
    if let Err(e) = fs::create_dir_all(out) {
        errors.push(format!("creating {}: {e}", out.display()));
        return errors;
    }
    write(&out.join("results.csv"), &res.csv(timestamp), &mut errors);
    write(&out.join("summary.txt"), &res.summary(timestamp), &mut errors);
    for r in &res.runs {
        let sc = &res.scenarios[r.scenario];
        for (part, body) in r.traces.iter().enumerate() {
            write(&out.join(trace_name(sc, r.seed, part, r.traces.len())), body, &mut errors);
        }
    }
    errors
}

/// The `run` subcommand. Exit code 0 when every run is clean, 1 on a
/// violated invariant or bound, 2 on config or I/O errors.
pub fn run(args: &RunArgs) -> Result<i32, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Read { path: args.config.clone(), source })?;
    let config_err = |msg: String| CliError::Config { path: args.config.clone(), msg };
    let mut scenarios = load_config(&text).map_err(config_err)?;
    if let Some(range) = &args.seeds {
        let seeds = parse_seed_range(range).map_err(|e: ConfigError| config_err(e.to_string()))?;
        for sc in &mut scenarios {
            sc.seeds = seeds.clone();
        }
    }
    if let Some(c) = args.check {
        for sc in &mut scenarios {
            sc.check = c.into();
        }
    }
    let res = run_suite(scenarios, args.parallel, args.trace)?;
    let timestamp =
        (!args.no_timestamp).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    let io_errors = write_artifacts(&res, &args.out, timestamp);
    for e in &io_errors {
        eprintln!("error: {e}");
    }
    let v = res.violations();
    eprintln!("{} runs, {} violations; artifacts in {}", res.runs.len(), v, args.out.display());
    Ok(if !io_errors.is_empty() {
        2
    } else if v > 0 {
        1
    } else {
        0
    })
}

pub fn strategies() -> String {
    builtin_strategies().iter().map(|s| format!("{:<18} {}\n", s.name, s.summary)).collect()
}
