//! State vectors, normalization and fidelity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gates::{check_dim, Circuit};
use crate::numerics::{ComplexMatrix, ComplexVector, ZERO};

/// Tolerance of [`StateVector::is_normalized`].
pub const NORMALIZED_TOL: f64 = 1e-10;

/// Inputs to [`fidelity`] must be within this distance of unit norm.
pub const FIDELITY_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: ComplexVector,
}

impl StateVector {
    /// Amplitudes are indexed by the big-endian binary basis label, so
    /// index 1 is `|0…01⟩`. Normalization is not required.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        check_dim(dim)?;
        Ok(Self { n_qubits: dim.trailing_zeros() as usize, amplitudes: ComplexVector::new(amplitudes)? })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::Shape(format!("basis index {index} outside dimension {dim}")));
        }
        let mut v = vec![ZERO; dim];
        v[index] = Complex64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.dim()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORMALIZED_TOL
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n_qubits: self.n_qubits,
            amplitudes: ComplexVector::new(self.amplitudes.iter().map(|a| a * s).collect())
                .expect("scaling keeps the dimension"),
        }
    }
}

/// `(|0…01⟩ + |0…10⟩ + … + |10…0⟩)/√n`.
pub fn w_state(n_qubits: usize) -> Result<StateVector> {
    if n_qubits < 2 {
        return Err(Error::Domain(format!("W state needs at least 2 qubits, got {n_qubits}")));
    }
    let dim = 1usize << n_qubits;
    let amp = Complex64::new(1.0 / (n_qubits as f64).sqrt(), 0.0);
    let mut v = vec![ZERO; dim];
    for q in 0..n_qubits {
        v[1 << q] = amp;
    }
    StateVector::new(v)
}

/// `m·s`.
pub fn apply_matrix(m: &ComplexMatrix, s: &StateVector) -> Result<StateVector> {
    if m.cols() != s.dim() || m.rows() != s.dim() {
        return Err(Error::Shape(format!(
            "cannot apply {}x{} matrix to a state of dim {}",
            m.rows(),
            m.cols(),
            s.dim()
        )));
    }
    let out = m.mul_vec(&s.amplitudes)?;
    StateVector::new(out.into_inner())
}

/// `matrix(c)·s`, applying the last gate first.
pub fn apply_circuit(c: &Circuit, s: &StateVector) -> Result<StateVector> {
    if c.dim() != s.dim() {
        return Err(Error::Shape(format!("circuit of dim {} on a state of dim {}", c.dim(), s.dim())));
    }
    let mut amps = s.amplitudes().to_vec();
    for g in c.gates().iter().rev() {
        g.apply_to_amplitudes(&mut amps)?;
    }
    StateVector::new(amps)
}

/// Returns the unit-norm state and the original norm.
pub fn normalize(s: &StateVector) -> Result<(StateVector, f64)> {
    let norm = s.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Domain(format!("cannot normalize a state of norm {norm}")));
    }
    Ok((s.scale(Complex64::new(1.0 / norm, 0.0)), norm))
}

/// `|⟨ψ|φ⟩|²` for unit-norm states, clipped to `[0, 1]`.
pub fn fidelity(psi: &StateVector, phi: &StateVector) -> Result<f64> {
    if psi.dim() != phi.dim() {
        return Err(Error::Shape(format!("states of dim {} and {}", psi.dim(), phi.dim())));
    }
    for (name, s) in [("first", psi), ("second", phi)] {
        if (s.norm() - 1.0).abs() > FIDELITY_NORM_TOL {
            return Err(Error::Domain(format!(
                "{name} state has norm {:.9}; normalize before computing fidelity",
                s.norm()
            )));
        }
    }
    let overlap = psi.amplitudes.inner(&phi.amplitudes)?;
    Ok(overlap.norm_sqr().clamp(0.0, 1.0))
}

/// `‖m†m − I‖_F`.
pub fn unitarity_error(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    Ok(m.unitarity_residual())
}

const REFERENCE_RE: [[f64; 8]; 8] = [
    [-0.113, -0.041, 0.223, -0.192, -0.308, -0.321, 0.051, 0.509],
    [-0.044, -0.556, -0.142, 0.216, -0.256, 0.310, 0.103, 0.027],
    [-0.057, 0.183, -0.031, -0.180, 0.059, -0.423, -0.199, 0.062],
    [0.141, -0.582, -0.168, -0.455, 0.151, 0.020, -0.256, -0.035],
    [0.102, -0.074, 0.187, 0.347, 0.280, -0.348, 0.041, -0.191],
    [0.196, -0.014, 0.378, 0.048, 0.021, 0.139, 0.040, -0.178],
    [0.464, 0.362, -0.365, 0.280, -0.094, 0.152, 0.057, 0.267],
    [0.319, 0.022, 0.334, 0.056, 0.154, -0.025, -0.209, -0.255],
];

const REFERENCE_IM: [[f64; 8]; 8] = [
    [-0.573, 0.008, -0.006, 0.089, 0.214, -0.208, 0.122, -0.011],
    [-0.087, -0.195, -0.002, 0.401, -0.301, -0.197, -0.138, -0.306],
    [0.186, 0.029, -0.271, -0.088, -0.538, -0.423, -0.234, -0.254],
    [0.083, 0.020, -0.414, -0.181, 0.310, -0.058, 0.073, 0.026],
    [0.108, -0.309, -0.179, 0.378, 0.132, -0.323, 0.331, 0.280],
    [-0.151, 0.149, -0.139, -0.233, -0.230, 0.055, 0.610, -0.465],
    [0.038, 0.001, -0.352, 0.021, 0.331, -0.149, -0.031, -0.278],
    [-0.428, 0.153, -0.242, 0.258, -0.018, 0.252, -0.505, -0.004],
];

/// Example 3-qubit unitary with entries rounded to three decimals.
/// Because of the rounding it is unitary only to about `4e-3`.
pub fn reference_unitary() -> ComplexMatrix {
    ComplexMatrix::from_fn(8, 8, |r, c| Complex64::new(REFERENCE_RE[r][c], REFERENCE_IM[r][c]))
}
