//! Gate-budgeted block-coordinate optimizer.
//!
//! Each iteration picks one gate `X_w` of the circuit `X_1 ⋯ X_M`, freezes
//! `A = X_1 ⋯ X_{w−1}` and `B = X_{w+1} ⋯ X_M`, solves the block subproblem
//! at every free position, and keeps the best position and block. The
//! penalty weights are then rescaled from the block gradient norm.

mod config;
mod subproblem;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{InitStrategy, OptimizerConfig, PenaltyTarget, Selection, Unitarize};
pub use subproblem::{solve_block_qp, BlockProblem, Context, SubproblemResult};

use crate::decompose::{truncate_circuit, two_level_decompose, TruncateStrategy};
use crate::error::{Error, Result};
use crate::gates::{check_dim, Circuit, Position, TwoLevelGate};
use crate::numerics::{ComplexMatrix, Mat2};

/// Objectives closer than this are treated as equal when ranking positions.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Loss scale below which sweep-to-sweep changes are rounding noise.
pub const LOSS_FLOOR: f64 = 1e-20;

/// `½‖y − u‖²`.
pub fn loss(y: &ComplexMatrix, u: &ComplexMatrix) -> Result<f64> {
    Ok(0.5 * y.sub(u)?.frobenius_norm().powi(2))
}

/// Builds the starting circuit of `cfg.m_gates` gates.
///
/// The decomposition-based strategies pad with identity blocks at the
/// lexicographically first unused positions when the exact decomposition
/// is shorter than the budget.
pub fn init_circuit(u: &ComplexMatrix, cfg: &OptimizerConfig) -> Result<Circuit> {
    let d = u.rows();
    check_dim(d)?;
    cfg.validate(d)?;
    let m = cfg.m_gates;
    let strategy = match cfg.init {
        InitStrategy::Identity => {
            let gates = Position::all(d).take(m).map(|p| TwoLevelGate::identity(d, p)).collect::<Result<Vec<_>>>()?;
            return Circuit::new(d, gates);
        }
        InitStrategy::RandomSubset => TruncateStrategy::RandomSubset,
        InitStrategy::Prefix => TruncateStrategy::Prefix,
    };
    let full = two_level_decompose(u, cfg.unitary_tol)?;
    let mut gates =
        if full.len() >= m { truncate_circuit(&full, m, strategy, cfg.seed)?.into_gates() } else { full.into_gates() };
    let used: Vec<Position> = gates.iter().map(|g| g.position()).collect();
    let free = Position::all(d).filter(|p| !used.contains(p));
    for p in free.take(m - gates.len()) {
        gates.push(TwoLevelGate::identity(d, p)?);
    }
    Circuit::new(d, gates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// 1-based index of the updated gate.
    pub working_index: usize,
    pub chosen_position: Position,
    /// `½‖Y − U‖²` after the update, recomputed from the full circuit.
    pub loss: f64,
    /// Penalized block objective after the update.
    pub penalized_objective: f64,
    /// Penalized block objective of the previous gate under the same
    /// context and penalty.
    pub penalized_objective_before: f64,
    pub grad_norm: f64,
    /// Penalty weights in force during the update.
    pub lambda: f64,
    pub mu: f64,
    pub unitarity_residual_of_gate: f64,
    /// Candidate positions dropped because their subproblem was singular.
    pub skipped_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    target: ComplexMatrix,
    cfg: OptimizerConfig,
    circuit: Circuit,
    lambda: f64,
    mu: f64,
    sweep: usize,
    iteration: usize,
    trace: Vec<TraceRecord>,
    rng: ChaCha8Rng,
}

impl OptimizerState {
    pub fn new(u: &ComplexMatrix, cfg: &OptimizerConfig) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::Shape(format!("{}x{} target is not square", u.rows(), u.cols())));
        }
        check_dim(u.rows())?;
        cfg.validate(u.rows())?;
        let residual = u.unitarity_residual();
        if !(residual <= cfg.unitary_tol) {
            return Err(Error::NotUnitary { residual, tol: cfg.unitary_tol });
        }
        let circuit = init_circuit(u, cfg)?;
        Self::with_circuit(u, cfg, circuit)
    }

    /// Starts from a caller-supplied circuit instead of [`init_circuit`].
    pub fn with_circuit(u: &ComplexMatrix, cfg: &OptimizerConfig, circuit: Circuit) -> Result<Self> {
        cfg.validate(u.rows())?;
        if circuit.dim() != u.rows() || circuit.len() != cfg.m_gates {
            return Err(Error::Shape(format!(
                "circuit has {} gates of dim {}, expected {} of dim {}",
                circuit.len(),
                circuit.dim(),
                cfg.m_gates,
                u.rows()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if !circuit.gates().iter().all(|g| seen.insert(g.position())) {
            return Err(Error::Config("circuit positions must be pairwise distinct".into()));
        }
        // selection draws use their own stream so they never perturb init
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            target: u.clone(),
            cfg: cfg.clone(),
            circuit,
            lambda: cfg.lambda0,
            mu: cfg.mu0,
            sweep: 0,
            iteration: 0,
            trace: Vec::new(),
            rng,
        })
    }

    pub fn target(&self) -> &ComplexMatrix {
        &self.target
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sweep(&self) -> usize {
        self.sweep
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn loss(&self) -> f64 {
        loss(&self.circuit.matrix(), &self.target).expect("dims checked on construction")
    }

    /// 0-based index of the next working gate.
    pub fn select_working_gate(&mut self) -> usize {
        let m = self.circuit.len();
        match self.cfg.selection {
            Selection::Cyclic => self.iteration % m,
            Selection::Random => self.rng.random_range(0..m),
        }
    }

    /// `(A, B)` around gate `w` (0-based).
    pub fn compute_context(&self, w: usize) -> (ComplexMatrix, ComplexMatrix) {
        let d = self.circuit.dim();
        let gates = self.circuit.gates();
        let mut a = ComplexMatrix::identity(d);
        for g in &gates[..w] {
            g.apply_right_in_place(&mut a).expect("dims checked");
        }
        let mut b = ComplexMatrix::identity(d);
        for g in gates[w + 1..].iter().rev() {
            g.apply_left_in_place(&mut b).expect("dims checked");
        }
        (a, b)
    }

    /// Lexicographic positions not held by any gate other than `w`.
    pub fn candidate_positions(&self, w: usize) -> Vec<Position> {
        let taken: Vec<Position> =
            self.circuit.gates().iter().enumerate().filter(|(k, _)| *k != w).map(|(_, g)| g.position()).collect();
        Position::all(self.circuit.dim()).filter(|p| !taken.contains(p)).collect()
    }

    /// Re-optimizes gate `w` (0-based) over all candidate positions and
    /// appends the resulting trace record.
    pub fn update_gate(&mut self, w: usize) -> Result<TraceRecord> {
        if w >= self.circuit.len() {
            return Err(Error::Config(format!("gate index {w} out of range")));
        }
        let (a, b) = self.compute_context(w);
        let ctx = Context::new(a, b, &self.target)?;
        let lambda = self.lambda;
        let target = self.cfg.penalty_target;
        let project = self.cfg.unitarize == Unitarize::ProjectEachUpdate;
        let incumbent = self.circuit.gates()[w];

        struct Pick {
            objective: f64,
            problem: BlockProblem,
            anchor: Mat2,
            block: Mat2,
        }
        let mut best: Option<Pick> = None;
        let mut at_incumbent: Option<(BlockProblem, Mat2)> = None;
        let mut skipped = 0;
        let mut last_err = None;
        for p in self.candidate_positions(w) {
            let problem = ctx.problem(p);
            let anchor = problem.anchor(target, lambda);
            if p == incumbent.position() {
                at_incumbent = Some((problem.clone(), anchor));
            }
            let solved = problem.solve(lambda, &anchor).and_then(|x| if project { x.nearest_unitary() } else { Ok(x) });
            let block = match solved {
                Ok(x) => x,
                Err(e) => {
                    skipped += 1;
                    last_err = Some(e);
                    continue;
                }
            };
            let objective = problem.penalized(&block, lambda, &anchor);
            if !objective.is_finite() {
                skipped += 1;
                continue;
            }
            if best.as_ref().is_none_or(|b| objective < b.objective - TIE_TOLERANCE) {
                best = Some(Pick { objective, problem, anchor, block });
            }
        }
        let (inc_problem, inc_anchor) = at_incumbent.expect("incumbent position is always a candidate");
        let incumbent_objective = inc_problem.penalized(incumbent.block(), lambda, &inc_anchor);
        let mut pick = match best {
            Some(p) => p,
            None => return Err(last_err.unwrap_or(Error::Singular { pivot: 0.0, threshold: 0.0 })),
        };
        // A projected solution can be worse than the unitary block it would
        // replace; keeping the incumbent preserves descent.
        if project && pick.objective > incumbent_objective {
            pick = Pick {
                objective: incumbent_objective,
                problem: inc_problem,
                anchor: inc_anchor,
                block: *incumbent.block(),
            };
        }

        let before = ctx.data_objective(&incumbent, &self.target)?
            + lambda * incumbent.block().sub(&inc_anchor).frobenius_norm().powi(2);
        let gate = TwoLevelGate::new(self.circuit.dim(), pick.problem.position(), pick.block)?;
        let after =
            ctx.data_objective(&gate, &self.target)? + lambda * pick.block.sub(&pick.anchor).frobenius_norm().powi(2);
        let grad = pick.problem.gradient(&pick.block, lambda, &pick.anchor);
        self.circuit.gates_mut()[w] = gate;

        let record = TraceRecord {
            iteration: self.iteration,
            working_index: w + 1,
            chosen_position: gate.position(),
            loss: self.loss(),
            penalized_objective: after,
            penalized_objective_before: before,
            grad_norm: grad.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            lambda,
            mu: self.mu,
            unitarity_residual_of_gate: gate.unitarity_residual(),
            skipped_candidates: skipped,
        };
        self.trace.push(record.clone());
        Ok(record)
    }

    /// Block gradient norm of gate `w` (0-based) at its current block under
    /// the current penalty weight.
    pub fn grad_norm(&self, w: usize) -> Result<f64> {
        let (a, b) = self.compute_context(w);
        let ctx = Context::new(a, b, &self.target)?;
        let gate = self.circuit.gates()[w];
        let problem = ctx.problem(gate.position());
        let anchor = problem.anchor(self.cfg.penalty_target, self.lambda);
        let g = problem.gradient(gate.block(), self.lambda, &anchor);
        Ok(g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn adapt_penalties(&mut self, g: f64) -> (f64, f64) {
        let (lambda, mu) = adapt_penalties(self.lambda, self.mu, g, &self.cfg);
        self.lambda = lambda;
        self.mu = mu;
        (lambda, mu)
    }

    /// One select / update / adapt cycle.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let w = self.select_working_gate();
        let record = self.update_gate(w)?;
        self.adapt_penalties(record.grad_norm);
        self.iteration += 1;
        Ok(record)
    }

    /// Polar-projects every block that admits it.
    fn project_all(&mut self) {
        for g in self.circuit.gates_mut() {
            if let Ok(w) = g.block().nearest_unitary() {
                *g = g.with_block(w);
            }
        }
    }
}

/// Rescales the penalty weights: shrink after a gradient above the
/// threshold, grow otherwise. Only `lambda` is clamped.
pub fn adapt_penalties(lambda: f64, mu: f64, g: f64, cfg: &OptimizerConfig) -> (f64, f64) {
    let s = if g > cfg.grad_threshold { cfg.s1 } else { cfg.s2 };
    ((s * lambda).clamp(cfg.lambda_min, cfg.lambda_max), s * mu)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub circuit: Circuit,
    pub trace: Vec<TraceRecord>,
    pub sweeps: usize,
    pub converged: bool,
    /// Loss of the returned circuit.
    pub loss: f64,
    pub lambda: f64,
    pub mu: f64,
}

/// Runs sweeps of `M` updates until the loss changes by less than
/// `tol_rel` (relative) over a sweep or `max_sweeps` is reached.
pub fn run(u: &ComplexMatrix, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    let state = OptimizerState::new(u, cfg)?;
    run_from(state)
}

/// Continues an existing state with the same stopping rule as [`run`].
pub fn run_from(mut state: OptimizerState) -> Result<RunOutcome> {
    let m = state.circuit.len();
    let mut previous = state.loss();
    let mut converged = false;
    while state.sweep < state.cfg.max_sweeps {
        let mut current = previous;
        for _ in 0..m {
            current = state.step()?.loss;
        }
        state.sweep += 1;
        let change = (current - previous).abs();
        if change == 0.0 || change < state.cfg.tol_rel * previous.max(LOSS_FLOOR) {
            converged = true;
            break;
        }
        previous = current;
    }
    if state.cfg.unitarize == Unitarize::ProjectAtEnd {
        state.project_all();
    }
    let loss = state.loss();
    Ok(RunOutcome {
        circuit: state.circuit,
        trace: state.trace,
        sweeps: state.sweep,
        converged,
        loss,
        lambda: state.lambda,
        mu: state.mu,
    })
}
