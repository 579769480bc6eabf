//! Argument definitions and subcommand bodies. Each command writes its
//! human-readable report to the supplied writer.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gatetrim_core::decompose::two_level_decompose;
use gatetrim_core::evaluate::{
    apply_circuit, apply_matrix, fidelity, normalize, reference_unitary, unitarity_error, w_state, StateVector,
};
use gatetrim_core::optimizer::{
    init_circuit, loss, run, InitStrategy, OptimizerConfig, PenaltyTarget, Selection, Unitarize,
};
use gatetrim_core::{Circuit, ComplexMatrix, Error as CoreError};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::experiment::{format_report, parse_budgets, run_experiment, ExperimentSpec};
use crate::formats::{
    fmt_f64, format_heatmap, format_trace, read_circuit, read_matrix, read_optimizer_config, write_circuit, write_file,
    write_matrix, CircuitDoc, CircuitSummary,
};

#[derive(Debug, Parser)]
#[command(name = "gatetrim", version, about = "Approximate unitaries with a fixed number of two-level gates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact two-level decomposition of a unitary.
    Decompose(DecomposeArgs),
    /// Optimize a circuit of a fixed number of gates.
    Reduce(ReduceArgs),
    /// Apply a circuit or matrix to a state and compare with a reference.
    Evaluate(EvaluateArgs),
    /// Multi-trial sweep over gate budgets.
    Experiment(ExperimentArgs),
    /// Entry magnitudes of a matrix.
    Heatmap(HeatmapArgs),
    /// Write the built-in 3-qubit example matrix.
    Example(ExampleArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Matrix CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Circuit JSON destination.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Largest accepted ‖U†U − I‖_F.
    #[arg(long, default_value_t = gatetrim_core::decompose::DEFAULT_UNITARY_TOL)]
    pub unitary_tol: f64,
}

/// Optimizer overrides. Unset flags keep the value from `--config`, or the
/// built-in default.
#[derive(Debug, Args)]
pub struct OptimizerArgs {
    /// Key-value file with optimizer settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub s1: Option<f64>,
    #[arg(long)]
    pub s2: Option<f64>,
    #[arg(long)]
    pub grad_threshold: Option<f64>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// cyclic | random
    #[arg(long)]
    pub selection: Option<Selection>,
    /// random_subset | prefix | identity
    #[arg(long)]
    pub init: Option<InitStrategy>,
    /// penalty_only | project_each_update | project_at_end
    #[arg(long)]
    pub unitarize: Option<Unitarize>,
    /// nearest_unitary | zero
    #[arg(long)]
    pub penalty_target: Option<PenaltyTarget>,
    /// Relative loss change per sweep that counts as converged.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Largest accepted ‖U†U − I‖_F for the target.
    #[arg(long)]
    pub unitary_tol: Option<f64>,
}

impl OptimizerArgs {
    /// Layers the config file, then the flags, over `base`.
    pub fn apply(&self, base: OptimizerConfig) -> CliResult<OptimizerConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_optimizer_config(path, base)?,
            None => base,
        };
        macro_rules! over {
            ($($f:ident => $t:ident),* $(,)?) => {$(
                if let Some(v) = self.$f.clone() {
                    cfg.$t = v;
                }
            )*};
        }
        over!(
            lambda0 => lambda0,
            mu0 => mu0,
            s1 => s1,
            s2 => s2,
            grad_threshold => grad_threshold,
            lambda_min => lambda_min,
            lambda_max => lambda_max,
            selection => selection,
            init => init,
            unitarize => unitarize,
            penalty_target => penalty_target,
            tol => tol_rel,
            max_sweeps => max_sweeps,
            unitary_tol => unitary_tol,
        );
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Target matrix CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Gate budget M.
    #[arg(long)]
    pub gates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimized circuit JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-update trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Initial circuit JSON, before any update.
    #[arg(long)]
    pub initial_output: Option<PathBuf>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Circuit JSON to evaluate.
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    pub circuit: Option<PathBuf>,
    /// Matrix CSV to evaluate instead of a circuit.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// `w3`, `wN` for the N-qubit W state, or a `d×1` matrix CSV path.
    #[arg(long, default_value = "w3")]
    pub state: String,
    /// Matrix CSV to compare against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// JSON report destination.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Key-value experiment file. Flags below override its entries.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Comma-separated gate budgets, e.g. `5,10,15`.
    #[arg(long)]
    pub budgets: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed for target and optimizer seed derivation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report CSV destination.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `args` (including the program name) and runs the command, as the
/// binary does.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Input(e.to_string()))?;
    execute(cli, out)
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Decompose(a) => decompose(&a, out),
        Command::Reduce(a) => reduce(&a, out),
        Command::Evaluate(a) => evaluate(&a, out),
        Command::Experiment(a) => experiment(&a, out),
        Command::Heatmap(a) => heatmap(&a, out),
        Command::Example(a) => example(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CliResult<()> {
    out.write_fmt(text).map_err(|e| CliError::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($t:tt)*) => { emit($out, format_args!($($t)*))? };
}

/// Square, power-of-two dimension, unitary within `tol`.
fn read_target(path: &Path, tol: f64) -> CliResult<ComplexMatrix> {
    let u = read_matrix(path)?;
    if !u.is_square() {
        return Err(CliError::Input(format!("{}: {}x{} matrix is not square", path.display(), u.rows(), u.cols())));
    }
    if u.rows() < 2 || !u.rows().is_power_of_two() {
        return Err(CliError::Input(format!("{}: dimension {} is not a power of two", path.display(), u.rows())));
    }
    let residual = u.unitarity_residual();
    if !(residual <= tol) {
        return Err(CliError::Precondition(CoreError::NotUnitary { residual, tol }));
    }
    Ok(u)
}

fn gate_table(out: &mut dyn Write, doc: &CircuitDoc) -> CliResult<()> {
    say!(
        out,
        "gate  i  j  transition      theta                  phi                    lambda                 alpha\n"
    );
    for g in &doc.gates {
        let transition = format!("{}->{}", g.transition.from, g.transition.to);
        match &g.euler {
            Some(e) => say!(
                out,
                "{:<4}  {}  {}  {:<14}  {:<21}  {:<21}  {:<21}  {}{}\n",
                g.index,
                g.i,
                g.j,
                transition,
                fmt_f64(e.theta),
                fmt_f64(e.phi),
                fmt_f64(e.lambda),
                fmt_f64(e.alpha),
                if e.from_polar_factor { "  (polar factor)" } else { "" }
            ),
            None => say!(out, "{:<4}  {}  {}  {:<14}  singular block\n", g.index, g.i, g.j, transition),
        }
    }
    Ok(())
}

pub fn decompose(a: &DecomposeArgs, out: &mut dyn Write) -> CliResult<()> {
    let u = read_target(&a.input, a.unitary_tol)?;
    let circuit = two_level_decompose(&u, a.unitary_tol).map_err(CliError::from_input)?;
    let y = circuit.matrix();
    let error = y.sub(&u).map_err(CliError::Core)?.frobenius_norm();
    let doc = CircuitDoc::from_circuit(
        &circuit,
        Some(CircuitSummary {
            loss: Some(0.5 * error * error),
            unitarity_error: unitarity_error(&y).map_err(CliError::Core)?,
            sweeps: None,
            converged: None,
        }),
    )?;
    if let Some(path) = &a.output {
        write_circuit(path, &doc)?;
    }
    say!(out, "gates: {}\n", circuit.len());
    say!(out, "reconstruction_error: {}\n", fmt_f64(error));
    gate_table(out, &doc)
}

pub fn reduce(a: &ReduceArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.optimizer.apply(OptimizerConfig::default())?;
    if let Some(m) = a.gates {
        cfg.m_gates = m;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let u = read_target(&a.input, cfg.unitary_tol)?;
    cfg.validate(u.rows()).map_err(|e| CliError::Input(e.to_string()))?;

    let initial = init_circuit(&u, &cfg).map_err(CliError::Optimizer)?;
    let initial_loss = loss(&initial.matrix(), &u).map_err(CliError::Core)?;
    if let Some(path) = &a.initial_output {
        let summary = summary_for(&initial, &u, None, None)?;
        write_circuit(path, &CircuitDoc::from_circuit(&initial, Some(summary))?)?;
    }

    let outcome = run(&u, &cfg).map_err(|e| match e {
        CoreError::NotUnitary { .. } => CliError::Precondition(e),
        other => CliError::Optimizer(other),
    })?;
    if !outcome.loss.is_finite() {
        return Err(CliError::Optimizer(CoreError::Domain("optimizer produced a non-finite loss".into())));
    }
    let summary = summary_for(&outcome.circuit, &u, Some(outcome.sweeps), Some(outcome.converged))?;
    let doc = CircuitDoc::from_circuit(&outcome.circuit, Some(summary.clone()))?;
    if let Some(path) = &a.output {
        write_circuit(path, &doc)?;
    }
    if let Some(path) = &a.trace {
        write_file(path, &format_trace(&outcome.trace, cfg.m_gates))?;
    }

    say!(out, "gates: {}\n", outcome.circuit.len());
    say!(out, "initial_loss: {}\n", fmt_f64(initial_loss));
    say!(out, "loss: {}\n", fmt_f64(outcome.loss));
    say!(out, "unitarity_error: {}\n", fmt_f64(summary.unitarity_error));
    say!(out, "sweeps: {}\n", outcome.sweeps);
    say!(out, "converged: {}\n", outcome.converged);
    say!(out, "updates: {}\n", outcome.trace.len());
    gate_table(out, &doc)
}

fn summary_for(
    c: &Circuit,
    u: &ComplexMatrix,
    sweeps: Option<usize>,
    converged: Option<bool>,
) -> CliResult<CircuitSummary> {
    let y = c.matrix();
    Ok(CircuitSummary {
        loss: Some(loss(&y, u).map_err(CliError::Core)?),
        unitarity_error: unitarity_error(&y).map_err(CliError::Core)?,
        sweeps,
        converged,
    })
}

/// Resolves `w3`, `wN` or a state CSV path.
pub fn load_state(spec: &str) -> CliResult<StateVector> {
    let lower = spec.to_ascii_lowercase();
    if let Some(n) = lower.strip_prefix('w').and_then(|r| r.parse::<usize>().ok()) {
        if n > 20 {
            return Err(CliError::Input(format!("W state on {n} qubits is too large")));
        }
        return w_state(n).map_err(|e| CliError::Input(e.to_string()));
    }
    let path = Path::new(spec);
    let m = read_matrix(path)?;
    if m.cols() != 1 {
        return Err(CliError::Input(format!(
            "{}: state must be a {}x1 column, got {}x{}",
            spec,
            m.rows(),
            m.rows(),
            m.cols()
        )));
    }
    StateVector::new(m.as_slice().to_vec()).map_err(|e| CliError::Input(format!("{spec}: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReport {
    pub amplitudes: Vec<[f64; 2]>,
    pub norm: f64,
    pub normalized: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub input_norm: f64,
    pub candidate: StateReport,
    pub reference: Option<StateReport>,
    pub fidelity: Option<f64>,
}

fn state_report(s: &StateVector) -> CliResult<(StateReport, StateVector)> {
    let (unit, norm) = normalize(s).map_err(CliError::Core)?;
    let pairs = |v: &StateVector| v.amplitudes().iter().map(|z| [z.re, z.im]).collect();
    Ok((StateReport { amplitudes: pairs(s), norm, normalized: pairs(&unit) }, unit))
}

pub fn evaluate_report(
    candidate: &Candidate,
    state: &StateVector,
    reference: Option<&ComplexMatrix>,
) -> CliResult<EvaluationReport> {
    let y_s = match candidate {
        Candidate::Circuit(c) => apply_circuit(c, state),
        Candidate::Matrix(m) => apply_matrix(m, state),
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    let (cand, cand_unit) = state_report(&y_s)?;
    let (reference, fid) = match reference {
        Some(u) => {
            let u_s = apply_matrix(u, state).map_err(|e| CliError::Input(e.to_string()))?;
            let (r, r_unit) = state_report(&u_s)?;
            let f = fidelity(&cand_unit, &r_unit).map_err(CliError::Core)?;
            (Some(r), Some(f))
        }
        None => (None, None),
    };
    Ok(EvaluationReport { input_norm: state.norm(), candidate: cand, reference, fidelity: fid })
}

pub enum Candidate {
    Circuit(Circuit),
    Matrix(ComplexMatrix),
}

pub fn evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> CliResult<()> {
    let candidate = match (&a.circuit, &a.matrix) {
        (Some(path), _) => Candidate::Circuit(read_circuit(path)?.to_circuit()?),
        (None, Some(path)) => Candidate::Matrix(read_matrix(path)?),
        (None, None) => return Err(CliError::Input("one of --circuit or --matrix is required".into())),
    };
    let state = load_state(&a.state)?;
    let reference = a.reference.as_deref().map(read_matrix).transpose()?;
    let report = evaluate_report(&candidate, &state, reference.as_ref())?;

    let block = |out: &mut dyn Write, name: &str, r: &StateReport| -> CliResult<()> {
        say!(out, "{name} amplitudes:\n");
        for (k, [re, im]) in r.amplitudes.iter().enumerate() {
            say!(out, "  {k:>3}  {}  {}\n", fmt_f64(*re), fmt_f64(*im));
        }
        say!(out, "{name} norm: {}\n", fmt_f64(r.norm));
        Ok(())
    };
    block(out, "candidate", &report.candidate)?;
    if let Some(r) = &report.reference {
        block(out, "reference", r)?;
    }
    if let Some(f) = report.fidelity {
        say!(out, "fidelity: {}\n", fmt_f64(f));
    }
    if let Some(path) = &a.output {
        let mut json = serde_json::to_string_pretty(&report).expect("reports always serialize");
        json.push('\n');
        write_file(path, &json)?;
    }
    Ok(())
}

pub fn experiment(a: &ExperimentArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec {
            n_qubits: 3,
            gate_budgets: Vec::new(),
            trials: 1,
            base_seed: 0,
            optimizer: OptimizerConfig::default(),
        },
    };
    spec.optimizer = a.optimizer.apply(spec.optimizer)?;
    if let Some(n) = a.qubits {
        spec.n_qubits = n;
    }
    if let Some(b) = &a.budgets {
        spec.gate_budgets = parse_budgets(b).map_err(|_| CliError::Input(format!("bad budget list '{b}'")))?;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(s) = a.seed {
        spec.base_seed = s;
    }
    spec.validate().map_err(CliError::Input)?;

    let report = run_experiment(&spec)?;
    write_file(&a.output, &format_report(&report))?;
    say!(out, "n_qubits: {}  trials: {}  base_seed: {}\n", spec.n_qubits, spec.trials, spec.base_seed);
    say!(out, "M     mean_loss              mean_sweeps  mean_wall_s            mean_s_per_update\n");
    for s in &report.summaries {
        say!(
            out,
            "{:<4}  {:<21}  {:<11.2}  {:<21}  {}\n",
            s.m_gates,
            fmt_f64(s.mean_converged_loss),
            s.mean_sweeps,
            fmt_f64(s.mean_wall_time_seconds),
            fmt_f64(s.mean_time_per_update_seconds)
        );
    }
    Ok(())
}

pub fn heatmap(a: &HeatmapArgs, out: &mut dyn Write) -> CliResult<()> {
    let m = read_matrix(&a.input)?;
    write_file(&a.output, &format_heatmap(&m))?;
    say!(out, "wrote {}x{} magnitudes to {}\n", m.rows(), m.cols(), a.output.display());
    Ok(())
}

pub fn example(a: &ExampleArgs, out: &mut dyn Write) -> CliResult<()> {
    let u = reference_unitary();
    write_matrix(&a.output, &u)?;
    say!(out, "wrote 8x8 example matrix to {}\n", a.output.display());
    say!(out, "unitarity_error: {}\n", fmt_f64(u.unitarity_residual()));
    Ok(())
}
