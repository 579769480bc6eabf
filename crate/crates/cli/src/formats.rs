//! On-disk formats.
//!
//! * Matrix CSV: a `rows,cols` header line, then one `re,im` line per entry
//!   in row-major order. Blank lines and lines starting with `#` are ignored.
//! * Circuit JSON: see [`CircuitDoc`].
//! * Trace CSV: one row per optimizer update.
//! * Key-value files: `key = value` per line, `#` comments.
//!
//! Floats are written with 17 significant digits so every file re-parses to
//! the exact values that were written.

use std::fs;
use std::path::Path;

use gatetrim_core::gates::{euler_decompose, position_to_transition};
use gatetrim_core::numerics::Mat2;
use gatetrim_core::optimizer::{OptimizerConfig, TraceRecord};
use gatetrim_core::{Circuit, ComplexMatrix, Position, TwoLevelGate};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Blocks farther than this from unitary report the angles of their polar
/// factor.
pub const EULER_UNITARY_TOL: f64 = 1e-8;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> CliResult<f64> {
    let v: f64 =
        s.trim().parse().map_err(|_| CliError::parse(path, line, format!("'{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("non-finite value '{}'", s.trim())));
    }
    Ok(v)
}

/// Parses matrix CSV text; `path` only labels error messages.
pub fn parse_matrix(text: &str, path: &Path) -> CliResult<ComplexMatrix> {
    let mut lines =
        text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "empty matrix file"))?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 2 {
        return Err(CliError::parse(path, hline, "expected a 'rows,cols' header"));
    }
    let parse_dim = |s: &str| {
        s.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::parse(path, hline, format!("bad dimension '{}'", s.trim())))
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut data = Vec::with_capacity(rows * cols);
    for (line, entry) in lines {
        let parts: Vec<&str> = entry.split(',').collect();
        if parts.len() != 2 {
            return Err(CliError::parse(path, line, "expected 're,im'"));
        }
        data.push(Complex64::new(parse_f64(path, line, parts[0])?, parse_f64(path, line, parts[1])?));
    }
    if data.len() != rows * cols {
        return Err(CliError::parse(
            path,
            hline,
            format!("header says {rows}x{cols} = {} entries, found {}", rows * cols, data.len()),
        ));
    }
    ComplexMatrix::new(rows, cols, data).map_err(CliError::Core)
}

pub fn read_matrix(path: &Path) -> CliResult<ComplexMatrix> {
    parse_matrix(&read(path)?, path)
}

pub fn format_matrix(m: &ComplexMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for z in m.as_slice() {
        out.push_str(&fmt_f64(z.re));
        out.push(',');
        out.push_str(&fmt_f64(z.im));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> CliResult<()> {
    write_file(path, &format_matrix(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerDoc {
    pub alpha: f64,
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
    /// True when the block itself is not unitary and the angles describe
    /// its polar factor.
    pub from_polar_factor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDoc {
    /// 1-based position in the product.
    pub index: usize,
    /// 1-based row/column pair.
    pub i: usize,
    pub j: usize,
    /// Block rows, each entry `[re, im]`.
    pub block: [[[f64; 2]; 2]; 2],
    /// `null` when the block is singular.
    pub euler: Option<EulerDoc>,
    pub transition: TransitionDoc,
    pub unitarity_residual: f64,
}

/// Basis states coupled by a gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSummary {
    pub loss: Option<f64>,
    pub unitarity_error: f64,
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
}

pub const CONVENTION: &str = "left-to-right-product";

/// Circuit JSON. The matrix is `gates[0]·gates[1]·…`, so the last gate acts
/// first on a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitDoc {
    pub dim: usize,
    pub n_qubits: usize,
    pub convention: String,
    pub gates: Vec<GateDoc>,
    pub summary: Option<CircuitSummary>,
}

fn euler_doc(block: &Mat2) -> Option<EulerDoc> {
    let (unitary, from_polar_factor) = if block.unitarity_residual() <= EULER_UNITARY_TOL {
        (*block, false)
    } else {
        (block.nearest_unitary().ok()?, true)
    };
    let a = euler_decompose(&unitary, EULER_UNITARY_TOL).ok()?;
    Some(EulerDoc { alpha: a.alpha, theta: a.theta, phi: a.phi, lambda: a.lambda, from_polar_factor })
}

impl CircuitDoc {
    pub fn from_circuit(c: &Circuit, summary: Option<CircuitSummary>) -> CliResult<Self> {
        let n = c.n_qubits();
        let gates = c
            .gates()
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let (i, j) = g.position().one_based();
                let (from, to) = position_to_transition(i, j, n).map_err(CliError::Core)?;
                let b = g.block();
                Ok(GateDoc {
                    index: k + 1,
                    i,
                    j,
                    block: std::array::from_fn(|r| std::array::from_fn(|c| [b.0[2 * r + c].re, b.0[2 * r + c].im])),
                    euler: euler_doc(b),
                    transition: TransitionDoc { from, to },
                    unitarity_residual: g.unitarity_residual(),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Self { dim: c.dim(), n_qubits: n, convention: CONVENTION.to_string(), gates, summary })
    }

    pub fn to_circuit(&self) -> CliResult<Circuit> {
        if self.convention != CONVENTION {
            return Err(CliError::Input(format!("unsupported product convention '{}'", self.convention)));
        }
        let gates = self
            .gates
            .iter()
            .map(|g| {
                let position = Position::from_one_based(g.i, g.j)?;
                let block = Mat2(std::array::from_fn(|e| {
                    let [re, im] = g.block[e / 2][e % 2];
                    Complex64::new(re, im)
                }));
                TwoLevelGate::new(self.dim, position, block)
            })
            .collect::<gatetrim_core::Result<Vec<_>>>()
            .map_err(CliError::Core)?;
        Circuit::new(self.dim, gates).map_err(CliError::Core)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("circuit documents always serialize");
        s.push('\n');
        s
    }
}

pub fn read_circuit(path: &Path) -> CliResult<CircuitDoc> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))
}

pub fn write_circuit(path: &Path, doc: &CircuitDoc) -> CliResult<()> {
    write_file(path, &doc.to_json())
}

pub const TRACE_HEADER: [&str; 13] = [
    "iteration",
    "working_index",
    "position_i",
    "position_j",
    "loss",
    "penalized_objective",
    "penalized_objective_before",
    "grad_norm",
    "lambda",
    "mu",
    "unitarity_residual_of_gate",
    "skipped_candidates",
    "sweep",
];

/// Trace CSV with 1-based positions. `sweep` is the 1-based sweep the
/// update belongs to.
pub fn format_trace(trace: &[TraceRecord], m_gates: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in trace {
        let (i, j) = r.chosen_position.one_based();
        w.write_record([
            r.iteration.to_string(),
            r.working_index.to_string(),
            i.to_string(),
            j.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.penalized_objective),
            fmt_f64(r.penalized_objective_before),
            fmt_f64(r.grad_norm),
            fmt_f64(r.lambda),
            fmt_f64(r.mu),
            fmt_f64(r.unitarity_residual_of_gate),
            r.skipped_candidates.to_string(),
            (r.iteration / m_gates.max(1) + 1).to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn parse_trace(text: &str, path: &Path) -> CliResult<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::parse(path, 1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(CliError::parse(path, 1, "unexpected trace header"));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::parse(path, line, e.to_string()))?;
        let int = |c: usize| {
            rec[c].parse::<usize>().map_err(|_| CliError::parse(path, line, format!("bad integer '{}'", &rec[c])))
        };
        let real = |c: usize| parse_f64(path, line, &rec[c]);
        out.push(TraceRecord {
            iteration: int(0)?,
            working_index: int(1)?,
            chosen_position: Position::from_one_based(int(2)?, int(3)?)
                .map_err(|e| CliError::parse(path, line, e.to_string()))?,
            loss: real(4)?,
            penalized_objective: real(5)?,
            penalized_objective_before: real(6)?,
            grad_norm: real(7)?,
            lambda: real(8)?,
            mu: real(9)?,
            unitarity_residual_of_gate: real(10)?,
            skipped_candidates: int(11)?,
        });
    }
    Ok(out)
}

/// `key = value` pairs with 1-based line numbers.
pub fn parse_key_values(text: &str, path: &Path) -> CliResult<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::parse(path, k + 1, format!("expected 'key = value', got '{line}'")))?;
        out.push((k + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> CliResult<Vec<(usize, String, String)>> {
    parse_key_values(&read(path)?, path)
}

/// Applies one optimizer setting. Returns `Ok(false)` for an unknown key.
pub fn apply_setting(cfg: &mut OptimizerConfig, key: &str, value: &str) -> Result<bool, String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
        value.parse().map_err(|_| format!("bad value '{value}' for {key}"))
    }
    fn named<T: std::str::FromStr<Err = gatetrim_core::Error>>(value: &str) -> Result<T, String> {
        value.parse().map_err(|e: gatetrim_core::Error| e.to_string())
    }
    match key.replace('-', "_").as_str() {
        "m_gates" | "gates" => cfg.m_gates = num(key, value)?,
        "lambda0" => cfg.lambda0 = num(key, value)?,
        "mu0" => cfg.mu0 = num(key, value)?,
        "s1" => cfg.s1 = num(key, value)?,
        "s2" => cfg.s2 = num(key, value)?,
        "grad_threshold" => cfg.grad_threshold = num(key, value)?,
        "lambda_min" => cfg.lambda_min = num(key, value)?,
        "lambda_max" => cfg.lambda_max = num(key, value)?,
        "selection" => cfg.selection = named(value)?,
        "init" => cfg.init = named(value)?,
        "unitarize" => cfg.unitarize = named(value)?,
        "penalty_target" => cfg.penalty_target = named(value)?,
        "tol_rel" | "tol" => cfg.tol_rel = num(key, value)?,
        "max_sweeps" => cfg.max_sweeps = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "unitary_tol" => cfg.unitary_tol = num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Reads an optimizer config file; unknown keys are errors.
pub fn read_optimizer_config(path: &Path, base: OptimizerConfig) -> CliResult<OptimizerConfig> {
    let mut cfg = base;
    for (line, key, value) in read_key_values(path)? {
        match apply_setting(&mut cfg, &key, &value) {
            Ok(true) => {}
            Ok(false) => return Err(CliError::parse(path, line, format!("unknown key '{key}'"))),
            Err(msg) => return Err(CliError::parse(path, line, msg)),
        }
    }
    Ok(cfg)
}

pub fn format_config(cfg: &OptimizerConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    put("m_gates", cfg.m_gates.to_string());
    put("lambda0", fmt_f64(cfg.lambda0));
    put("mu0", fmt_f64(cfg.mu0));
    put("s1", fmt_f64(cfg.s1));
    put("s2", fmt_f64(cfg.s2));
    put("grad_threshold", fmt_f64(cfg.grad_threshold));
    put("lambda_min", fmt_f64(cfg.lambda_min));
    put("lambda_max", fmt_f64(cfg.lambda_max));
    put("selection", cfg.selection.to_string());
    put("init", cfg.init.to_string());
    put("unitarize", cfg.unitarize.to_string());
    put("penalty_target", cfg.penalty_target.to_string());
    put("tol_rel", fmt_f64(cfg.tol_rel));
    put("max_sweeps", cfg.max_sweeps.to_string());
    put("seed", cfg.seed.to_string());
    put("unitary_tol", fmt_f64(cfg.unitary_tol));
    s
}

/// `|m_ij|` as a plain `rows × cols` CSV.
pub fn format_heatmap(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|z| fmt_f64(z.norm())).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
