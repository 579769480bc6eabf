//! Seeded multi-trial sweeps over gate budgets.

use std::path::Path;
use std::time::Instant;

use gatetrim_core::decompose::random_target;
use gatetrim_core::gates::Position;
use gatetrim_core::optimizer::{run, OptimizerConfig};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::formats::{apply_setting, fmt_f64, read_key_values};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "GATETRIM_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n_qubits: usize,
    pub gate_budgets: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    /// Settings shared by every run; `m_gates` and `seed` are overwritten
    /// per run.
    pub optimizer: OptimizerConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=12).contains(&self.n_qubits) {
            return Err(format!("n_qubits must be in 1..=12, got {}", self.n_qubits));
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.gate_budgets.is_empty() {
            return Err("gate_budgets must not be empty".into());
        }
        let dim = 1usize << self.n_qubits;
        let max = Position::count(dim);
        if let Some(&m) = self.gate_budgets.iter().find(|&&m| m == 0 || m > max) {
            return Err(format!("gate budget {m} outside 1..={max}"));
        }
        for &m in &self.gate_budgets {
            let cfg = OptimizerConfig { m_gates: m, ..self.optimizer.clone() };
            cfg.validate(dim).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let mut n_qubits = None;
        let mut gate_budgets = None;
        let mut trials = None;
        let mut base_seed = 0;
        let mut optimizer = OptimizerConfig::default();
        for (line, key, value) in read_key_values(path)? {
            let bad = |what: &str| CliError::parse(path, line, format!("bad {what} '{value}'"));
            match key.as_str() {
                "n_qubits" => n_qubits = Some(value.parse().map_err(|_| bad("n_qubits"))?),
                "gate_budgets" | "budgets" => {
                    gate_budgets = Some(parse_budgets(&value).map_err(|_| bad("budget list"))?)
                }
                "trials" => trials = Some(value.parse().map_err(|_| bad("trial count"))?),
                "base_seed" => base_seed = value.parse().map_err(|_| bad("seed"))?,
                _ => match apply_setting(&mut optimizer, &key, &value) {
                    Ok(true) => {}
                    Ok(false) => return Err(CliError::parse(path, line, format!("unknown key '{key}'"))),
                    Err(msg) => return Err(CliError::parse(path, line, msg)),
                },
            }
        }
        let missing = |k: &str| CliError::parse(path, 0, format!("missing required key '{k}'"));
        let spec = Self {
            n_qubits: n_qubits.ok_or_else(|| missing("n_qubits"))?,
            gate_budgets: gate_budgets.ok_or_else(|| missing("gate_budgets"))?,
            trials: trials.ok_or_else(|| missing("trials"))?,
            base_seed,
            optimizer,
        };
        spec.validate().map_err(|m| CliError::parse(path, 0, m))?;
        Ok(spec)
    }
}

/// Parses `5,10,15`.
pub fn parse_budgets(s: &str) -> Result<Vec<usize>, std::num::ParseIntError> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed derivation: chained SplitMix64 over the three inputs.
pub fn derive_seed(base_seed: u64, budget: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ budget) ^ trial)
}

/// Target seed for a trial. Independent of the budget so every budget sees
/// the same targets.
pub fn target_seed(base_seed: u64, trial: usize) -> u64 {
    derive_seed(base_seed, 0, trial as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub m_gates: usize,
    pub trial: usize,
    pub target_seed: u64,
    pub optimizer_seed: u64,
    pub initial_loss: f64,
    pub converged_loss: f64,
    pub sweeps_to_converge: usize,
    pub updates: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
}

impl TrialRow {
    pub fn time_per_update_seconds(&self) -> f64 {
        self.wall_time_seconds / self.updates.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSummary {
    pub m_gates: usize,
    pub trials: usize,
    pub mean_initial_loss: f64,
    pub mean_converged_loss: f64,
    pub mean_sweeps: f64,
    pub mean_wall_time_seconds: f64,
    pub mean_time_per_update_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub n_qubits: usize,
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<BudgetSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Per-budget means in row order.
pub fn summarize(rows: &[TrialRow], budgets: &[usize]) -> Vec<BudgetSummary> {
    budgets
        .iter()
        .map(|&m| {
            let group: Vec<&TrialRow> = rows.iter().filter(|r| r.m_gates == m).collect();
            BudgetSummary {
                m_gates: m,
                trials: group.len(),
                mean_initial_loss: mean(group.iter().map(|r| r.initial_loss)),
                mean_converged_loss: mean(group.iter().map(|r| r.converged_loss)),
                mean_sweeps: mean(group.iter().map(|r| r.sweeps_to_converge as f64)),
                mean_wall_time_seconds: mean(group.iter().map(|r| r.wall_time_seconds)),
                mean_time_per_update_seconds: mean(group.iter().map(|r| r.time_per_update_seconds())),
            }
        })
        .collect()
}

fn pool_size() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .map_or(available, |n| n.min(available.max(1)))
}

/// Runs every `(budget, trial)` pair. Trials run concurrently; results are
/// assembled in `(budget, trial)` order.
pub fn run_experiment(spec: &ExperimentSpec) -> CliResult<ExperimentReport> {
    spec.validate().map_err(CliError::Input)?;
    let jobs: Vec<(usize, usize)> =
        spec.gate_budgets.iter().flat_map(|&m| (0..spec.trials).map(move |t| (m, t))).collect();
    let n_factors = Position::count(1 << spec.n_qubits);
    let work = |&(m, trial): &(usize, usize)| -> CliResult<TrialRow> {
        let tseed = target_seed(spec.base_seed, trial);
        let (u, _) = random_target(spec.n_qubits, n_factors, tseed).map_err(CliError::Core)?;
        let oseed = derive_seed(spec.base_seed, m as u64, trial as u64);
        let cfg = OptimizerConfig { m_gates: m, seed: oseed, ..spec.optimizer.clone() };
        let initial = gatetrim_core::optimizer::init_circuit(&u, &cfg).map_err(CliError::Optimizer)?;
        let initial_loss = gatetrim_core::optimizer::loss(&initial.matrix(), &u).map_err(CliError::Core)?;
        let start = Instant::now();
        let out = run(&u, &cfg).map_err(CliError::Optimizer)?;
        let wall = start.elapsed().as_secs_f64();
        Ok(TrialRow {
            m_gates: m,
            trial,
            target_seed: tseed,
            optimizer_seed: oseed,
            initial_loss,
            converged_loss: out.loss,
            sweeps_to_converge: out.sweeps,
            updates: out.trace.len(),
            converged: out.converged,
            wall_time_seconds: wall,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pool_size())
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| jobs.par_iter().map(work).collect::<CliResult<Vec<_>>>())?;
    let summaries = summarize(&rows, &spec.gate_budgets);
    Ok(ExperimentReport { n_qubits: spec.n_qubits, rows, summaries })
}

pub const REPORT_HEADER: [&str; 14] = [
    "kind",
    "n_qubits",
    "m_gates",
    "trial",
    "target_seed",
    "optimizer_seed",
    "initial_loss",
    "converged_loss",
    "sweeps_to_converge",
    "updates",
    "converged",
    "wall_time_seconds",
    "time_per_update_seconds",
    "trials",
];

/// Columns holding wall-clock measurements.
pub const WALL_TIME_COLUMNS: [&str; 2] = ["wall_time_seconds", "time_per_update_seconds"];

/// One `trial` row per run followed by one `mean` row per budget. Fields
/// that do not apply to a row kind are left empty.
pub fn format_report(report: &ExperimentReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    let n = report.n_qubits.to_string();
    for r in &report.rows {
        w.write_record([
            "trial".to_string(),
            n.clone(),
            r.m_gates.to_string(),
            r.trial.to_string(),
            r.target_seed.to_string(),
            r.optimizer_seed.to_string(),
            fmt_f64(r.initial_loss),
            fmt_f64(r.converged_loss),
            r.sweeps_to_converge.to_string(),
            r.updates.to_string(),
            r.converged.to_string(),
            fmt_f64(r.wall_time_seconds),
            fmt_f64(r.time_per_update_seconds()),
            String::new(),
        ])
        .expect("in-memory write");
    }
    for s in &report.summaries {
        w.write_record([
            "mean".to_string(),
            n.clone(),
            s.m_gates.to_string(),
            String::new(),
            String::new(),
            String::new(),
            fmt_f64(s.mean_initial_loss),
            fmt_f64(s.mean_converged_loss),
            fmt_f64(s.mean_sweeps),
            String::new(),
            String::new(),
            fmt_f64(s.mean_wall_time_seconds),
            fmt_f64(s.mean_time_per_update_seconds),
            s.trials.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn parse_report(text: &str, path: &Path) -> CliResult<ExperimentReport> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::parse(path, 1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != REPORT_HEADER {
        return Err(CliError::parse(path, 1, "unexpected report header"));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut n_qubits = 0;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::parse(path, line, e.to_string()))?;
        let bad = |c: usize| CliError::parse(path, line, format!("bad {} '{}'", REPORT_HEADER[c], &rec[c]));
        let int = |c: usize| rec[c].parse::<u64>().map_err(|_| bad(c));
        let real = |c: usize| rec[c].parse::<f64>().map_err(|_| bad(c));
        n_qubits = int(1)? as usize;
        match &rec[0] {
            "trial" => rows.push(TrialRow {
                m_gates: int(2)? as usize,
                trial: int(3)? as usize,
                target_seed: int(4)?,
                optimizer_seed: int(5)?,
                initial_loss: real(6)?,
                converged_loss: real(7)?,
                sweeps_to_converge: int(8)? as usize,
                updates: int(9)? as usize,
                converged: rec[10].parse().map_err(|_| bad(10))?,
                wall_time_seconds: real(11)?,
            }),
            "mean" => summaries.push(BudgetSummary {
                m_gates: int(2)? as usize,
                trials: int(13)? as usize,
                mean_initial_loss: real(6)?,
                mean_converged_loss: real(7)?,
                mean_sweeps: real(8)?,
                mean_wall_time_seconds: real(11)?,
                mean_time_per_update_seconds: real(12)?,
            }),
            other => return Err(CliError::parse(path, line, format!("unknown row kind '{other}'"))),
        }
    }
    Ok(ExperimentReport { n_qubits, rows, summaries })
}
