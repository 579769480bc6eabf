//! Two-level gates, circuits built from them, and ZYZ Euler angles.
//!
//! A two-level gate on a `d`-dimensional space is the identity except on the
//! rows/columns `i < j`, where it acts as a 2×2 block `[[α, β], [γ, δ]]`.
//! Positions are stored 0-based; every external format uses 1-based indices.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, Mat2};

/// Below this magnitude a cosine/sine factor of the Ry rotation counts as zero
/// and the Euler decomposition is treated as gimbal-locked.
const GIMBAL_EPS: f64 = 1e-12;

/// An ordered pair of basis indices `i < j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    i: usize,
    j: usize,
}

impl Position {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i >= j {
            return Err(Error::Domain(format!("position requires i < j, got ({i}, {j})")));
        }
        Ok(Self { i, j })
    }

    pub fn from_one_based(i: usize, j: usize) -> Result<Self> {
        if i == 0 || j == 0 {
            return Err(Error::Domain(format!("1-based position ({i}, {j}) contains 0")));
        }
        Self::new(i - 1, j - 1)
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn one_based(&self) -> (usize, usize) {
        (self.i + 1, self.j + 1)
    }

    /// All positions for dimension `d` in lexicographic order.
    pub fn all(d: usize) -> impl Iterator<Item = Position> {
        (0..d).flat_map(move |i| (i + 1..d).map(move |j| Position { i, j }))
    }

    pub fn count(d: usize) -> usize {
        d * d.saturating_sub(1) / 2
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, j) = self.one_based();
        write!(f, "({i}, {j})")
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::Shape(format!("dimension {dim} is not a power of two >= 2")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelGate {
    dim: usize,
    position: Position,
    block: Mat2,
}

impl TwoLevelGate {
    pub fn new(dim: usize, position: Position, block: Mat2) -> Result<Self> {
        check_dim(dim)?;
        if position.j >= dim {
            return Err(Error::Domain(format!("position {position} outside dimension {dim}")));
        }
        if !block.is_finite() {
            return Err(Error::NonFinite { row: position.i, col: position.j });
        }
        Ok(Self { dim, position, block })
    }

    pub fn identity(dim: usize, position: Position) -> Result<Self> {
        Self::new(dim, position, Mat2::IDENTITY)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn block(&self) -> &Mat2 {
        &self.block
    }

    pub fn with_block(&self, block: Mat2) -> Self {
        Self { block, ..*self }
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.block.unitarity_residual()
    }

    /// Dense `d×d` form.
    pub fn embed(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(self.dim);
        let Position { i, j } = self.position;
        let [a, b, c, d] = self.block.0;
        m[(i, i)] = a;
        m[(i, j)] = b;
        m[(j, i)] = c;
        m[(j, j)] = d;
        m
    }

    /// `m ← embed(self)·m`, touching rows `i` and `j` only.
    pub fn apply_left_in_place(&self, m: &mut ComplexMatrix) -> Result<()> {
        if m.rows() != self.dim {
            return Err(Error::Shape(format!(
                "gate of dim {} applied from the left to a {}x{} matrix",
                self.dim,
                m.rows(),
                m.cols()
            )));
        }
        let Position { i, j } = self.position;
        let [a, b, c, d] = self.block.0;
        let row_i = m.row(i).to_vec();
        let row_j = m.row(j).to_vec();
        for (k, out) in m.row_mut(i).iter_mut().enumerate() {
            *out = a * row_i[k] + b * row_j[k];
        }
        for (k, out) in m.row_mut(j).iter_mut().enumerate() {
            *out = c * row_i[k] + d * row_j[k];
        }
        Ok(())
    }

    /// `m ← m·embed(self)`, touching columns `i` and `j` only.
    pub fn apply_right_in_place(&self, m: &mut ComplexMatrix) -> Result<()> {
        if m.cols() != self.dim {
            return Err(Error::Shape(format!(
                "gate of dim {} applied from the right to a {}x{} matrix",
                self.dim,
                m.rows(),
                m.cols()
            )));
        }
        let Position { i, j } = self.position;
        let [a, b, c, d] = self.block.0;
        for r in 0..m.rows() {
            let (x, y) = (m[(r, i)], m[(r, j)]);
            m[(r, i)] = x * a + y * c;
            m[(r, j)] = x * b + y * d;
        }
        Ok(())
    }

    pub fn apply_left(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = m.clone();
        self.apply_left_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_right(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut out = m.clone();
        self.apply_right_in_place(&mut out)?;
        Ok(out)
    }

    /// Applies the gate to a state vector in place (two amplitudes).
    pub fn apply_to_amplitudes(&self, amps: &mut [Complex64]) -> Result<()> {
        if amps.len() != self.dim {
            return Err(Error::Shape(format!("gate of dim {} applied to state of dim {}", self.dim, amps.len())));
        }
        let Position { i, j } = self.position;
        let [a, b, c, d] = self.block.0;
        let (x, y) = (amps[i], amps[j]);
        amps[i] = a * x + b * y;
        amps[j] = c * x + d * y;
        Ok(())
    }
}

/// Ordered gate list whose matrix is `embed(g₁)·embed(g₂)·…·embed(g_M)`;
/// the last gate acts first on a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    dim: usize,
    gates: Vec<TwoLevelGate>,
}

impl Circuit {
    pub fn new(dim: usize, gates: Vec<TwoLevelGate>) -> Result<Self> {
        check_dim(dim)?;
        if let Some(g) = gates.iter().find(|g| g.dim != dim) {
            return Err(Error::Shape(format!("gate of dim {} in a circuit of dim {dim}", g.dim)));
        }
        Ok(Self { dim, gates })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn gates(&self) -> &[TwoLevelGate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub(crate) fn gates_mut(&mut self) -> &mut [TwoLevelGate] {
        &mut self.gates
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(self.dim);
        for g in &self.gates {
            g.apply_right_in_place(&mut m).expect("gate dims checked on construction");
        }
        m
    }

    pub fn into_gates(self) -> Vec<TwoLevelGate> {
        self.gates
    }
}

/// `e^{iα}·Rz(θ)·Ry(φ)·Rz(λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub alpha: f64,
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
}

pub fn rz(angle: f64) -> Mat2 {
    Mat2::diag(Complex64::from_polar(1.0, -angle / 2.0), Complex64::from_polar(1.0, angle / 2.0))
}

pub fn ry(angle: f64) -> Mat2 {
    let (s, c) = (angle / 2.0).sin_cos();
    Mat2::new(Complex64::new(c, 0.0), Complex64::new(-s, 0.0), Complex64::new(s, 0.0), Complex64::new(c, 0.0))
}

/// Wraps into `(−π, π]`.
fn wrap_angle(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    } else if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

pub fn euler_compose(a: &EulerAngles) -> Mat2 {
    rz(a.theta).mul(&ry(a.phi)).mul(&rz(a.lambda)).scale(Complex64::from_polar(1.0, a.alpha))
}

/// ZYZ decomposition of a (near-)unitary 2×2 block.
///
/// Canonical output: `φ ∈ [0, π]`, `θ, λ, α ∈ (−π, π]`, and `λ = 0` when the
/// rotation is gimbal-locked (`φ ∈ {0, π}`).
pub fn euler_decompose(b: &Mat2, tol: f64) -> Result<EulerAngles> {
    let residual = b.unitarity_residual();
    if !(residual <= tol) {
        return Err(Error::NotUnitary { residual, tol });
    }
    let half_phase = b.det().arg() / 2.0;
    let v = b.scale(Complex64::from_polar(1.0, -half_phase));
    let (cos_part, sin_part) = (v.get(0, 0).norm(), v.get(1, 0).norm());
    let phi = 2.0 * sin_part.atan2(cos_part);

    // v00 = e^{-i(θ+λ)/2} cos(φ/2), v10 = e^{i(θ-λ)/2} sin(φ/2)
    let (theta, lambda) = if sin_part < GIMBAL_EPS {
        (-2.0 * v.get(0, 0).arg(), 0.0)
    } else if cos_part < GIMBAL_EPS {
        (2.0 * v.get(1, 0).arg(), 0.0)
    } else {
        let sum = -2.0 * v.get(0, 0).arg();
        let diff = 2.0 * v.get(1, 0).arg();
        ((sum + diff) / 2.0, (sum - diff) / 2.0)
    };
    let theta = wrap_angle(theta);
    let lambda = wrap_angle(lambda);

    // Wrapping θ or λ by 2π flips the sign of the ZYZ product; recover the
    // global phase against the larger entry of the first column.
    let zyz = euler_compose(&EulerAngles { alpha: 0.0, theta, phi, lambda });
    let k = if cos_part >= sin_part { 0 } else { 2 };
    let alpha = wrap_angle((b.0[k] / zyz.0[k]).arg());
    Ok(EulerAngles { alpha, theta, phi, lambda })
}

/// Basis labels `(|j−1⟩, |i−1⟩)` for a 1-based position: the gate's `(i, j)`
/// entry is the amplitude of the transition from the first to the second.
/// Labels are big-endian `n_qubits`-bit strings.
pub fn position_to_transition(i: usize, j: usize, n_qubits: usize) -> Result<(String, String)> {
    let d = 1usize
        .checked_shl(n_qubits as u32)
        .filter(|_| n_qubits < usize::BITS as usize)
        .ok_or_else(|| Error::Domain(format!("{n_qubits} qubits is too many")))?;
    if !(1 <= i && i < j && j <= d) {
        return Err(Error::Domain(format!("position ({i}, {j}) out of range for {n_qubits} qubits")));
    }
    let label = |k: usize| format!("{:0width$b}", k, width = n_qubits);
    Ok((label(j - 1), label(i - 1)))
}
