//! Exact two-level decomposition and random circuit generation.

use num_complex::Complex64;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gates::{check_dim, Circuit, Position, TwoLevelGate};
use crate::numerics::{random_unitary_with, ComplexMatrix, Mat2, ONE};

/// Default unitarity tolerance for decomposition inputs.
pub const DEFAULT_UNITARY_TOL: f64 = 1e-8;

/// Subdiagonal entries at or below this magnitude are treated as already
/// eliminated.
const ELIMINATION_EPS: f64 = 1e-14;

/// Decomposes a unitary into at most `d(d−1)/2` two-level gates.
///
/// Column `c` is cleared from the bottom up with gates on `(c, k)`,
/// `k = d−1, …, c+1`; each rotation leaves a real positive pivot. Leftover
/// diagonal phases are folded into the last gate touching their index, so
/// an input that is already a single two-level gate comes back unchanged.
pub fn two_level_decompose(u: &ComplexMatrix, tol: f64) -> Result<Circuit> {
    if !u.is_square() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", u.rows(), u.cols())));
    }
    let d = u.rows();
    check_dim(d)?;
    let residual = u.unitarity_residual();
    if !(residual <= tol) {
        return Err(Error::NotUnitary { residual, tol });
    }

    let mut work = u.clone();
    let mut gates: Vec<TwoLevelGate> = Vec::new();
    for c in 0..d - 1 {
        for k in (c + 1..d).rev() {
            let y = work[(k, c)];
            if y.norm() <= ELIMINATION_EPS {
                continue;
            }
            let x = work[(c, c)];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let rotation = Mat2::new(x.conj() / r, y.conj() / r, -y / r, x / r);
            let g = TwoLevelGate::new(d, Position::new(c, k)?, rotation)?;
            g.apply_left_in_place(&mut work)?;
            work[(k, c)] = Complex64::new(0.0, 0.0);
            // The circuit stores the inverse rotations in elimination order.
            gates.push(g.with_block(rotation.adjoint()));
        }
    }

    let mut untouched = Vec::new();
    for c in 0..d {
        let z = work[(c, c)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { ONE };
        if (phase - ONE).norm() <= 1e-15 {
            continue;
        }
        // The diagonal phase commutes past every later gate that does not
        // touch index c, so it lands on the last gate that does.
        match gates.iter_mut().rev().find(|g| g.position().i() == c || g.position().j() == c) {
            Some(g) => {
                let slot = if g.position().i() == c { Mat2::diag(phase, ONE) } else { Mat2::diag(ONE, phase) };
                *g = g.with_block(g.block().mul(&slot));
            }
            None => untouched.push((c, phase)),
        }
    }
    // Every pair containing an untouched index is still free.
    for pair in untouched.chunks(2) {
        if let [(a, pa), (b, pb)] = *pair {
            gates.push(TwoLevelGate::new(d, Position::new(a, b)?, Mat2::diag(pa, pb))?);
            continue;
        }
        let (c, phase) = pair[0];
        let (position, block) = if c + 1 < d {
            (Position::new(c, c + 1)?, Mat2::diag(phase, ONE))
        } else {
            (Position::new(c - 1, c)?, Mat2::diag(ONE, phase))
        };
        gates.push(TwoLevelGate::new(d, position, block)?);
    }
    Circuit::new(d, gates)
}

/// Random unitary built as a product of `n_factors` Haar-random two-level
/// gates at pairwise-distinct random positions. Returns the matrix and the
/// generating circuit.
pub fn random_target(n_qubits: usize, n_factors: usize, seed: u64) -> Result<(ComplexMatrix, Circuit)> {
    let d = 1usize << n_qubits;
    check_dim(d)?;
    let available = Position::count(d);
    if n_factors == 0 || n_factors > available {
        return Err(Error::Config(format!(
            "n_factors must be in 1..={available} for {n_qubits} qubits, got {n_factors}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<Position> = Position::all(d).collect();
    let chosen = index::sample(&mut rng, available, n_factors);
    let mut gates = Vec::with_capacity(n_factors);
    for k in chosen {
        let block = Mat2::try_from(&random_unitary_with(&mut rng, 2))?;
        gates.push(TwoLevelGate::new(d, positions[k], block)?);
    }
    let circuit = Circuit::new(d, gates)?;
    Ok((circuit.matrix(), circuit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncateStrategy {
    RandomSubset,
    Prefix,
}

/// Keeps `m` gates of `c` in their original relative order.
pub fn truncate_circuit(c: &Circuit, m: usize, strategy: TruncateStrategy, seed: u64) -> Result<Circuit> {
    if m == 0 || m > c.len() {
        return Err(Error::Config(format!("cannot keep {m} gates of a {}-gate circuit", c.len())));
    }
    let keep: Vec<usize> = match strategy {
        TruncateStrategy::Prefix => (0..m).collect(),
        TruncateStrategy::RandomSubset => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = index::sample(&mut rng, c.len(), m).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    Circuit::new(c.dim(), keep.into_iter().map(|k| c.gates()[k]).collect())
}
