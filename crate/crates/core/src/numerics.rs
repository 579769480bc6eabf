//! Dense complex linear algebra used by the decomposition and the optimizer.
//!
//! Matrices are stored row-major. Vectorization stacks rows, which makes the
//! identity `vec(A X B) = (A ⊗ Bᵀ) vec(X)` hold exactly (see [`kron`]).

use std::ops::{Deref, DerefMut, Index, IndexMut};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative pivot threshold for [`solve_linear`].
pub const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Shape("vector must have at least one entry".into()));
        }
        if let Some(k) = entries.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite { row: k, col: 0 });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![ZERO; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian inner product `⟨self|other⟩` (conjugate-linear in `self`).
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!("inner product of dims {} and {}", self.dim(), other.dim())));
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

impl Deref for ComplexVector {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ComplexVector {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting empty shapes and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        if let Some(k) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite { row: k / cols, col: k % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m.data[k * n + k] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Convenience constructor from nested rows of `(re, im)` pairs.
    pub fn from_rows(rows: &[Vec<(f64, f64)>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&(re, im)| Complex64::new(re, im)).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if self.cols != v.dim() {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} matrix to vector of dim {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let out = (0..self.rows).map(|r| self.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect();
        Ok(ComplexVector(out))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot subtract {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `‖M†M − I‖_F`; only meaningful for square matrices.
    pub fn unitarity_residual(&self) -> f64 {
        let gram = self.adjoint().matmul(self).expect("adjoint is conformable");
        gram.sub(&Self::identity(self.cols)).expect("gram is square").frobenius_norm()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (br, bc) = (other.rows, other.cols);
        Self::from_fn(self.rows * br, self.cols * bc, |r, c| self[(r / br, c / bc)] * other[(r % br, c % bc)])
    }

    /// Row-stacking vectorization.
    pub fn vectorize(&self) -> ComplexVector {
        ComplexVector(self.data.clone())
    }

    pub fn devectorize(v: &ComplexVector, rows: usize, cols: usize) -> Result<Self> {
        if v.dim() != rows * cols {
            return Err(Error::Shape(format!("vector of dim {} cannot fill a {rows}x{cols} matrix", v.dim())));
        }
        Self::new(rows, cols, v.0.clone())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}

/// Kronecker product. With row-stacking [`vectorize`],
/// `vectorize(A·X·B) = kron(A, Bᵀ) · vectorize(X)`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

pub fn vectorize(a: &ComplexMatrix) -> ComplexVector {
    a.vectorize()
}

pub fn devectorize(v: &ComplexVector, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    ComplexMatrix::devectorize(v, rows, cols)
}

/// Gaussian elimination with partial pivoting.
///
/// A pivot smaller than [`PIVOT_TOLERANCE`] times the largest entry of `m`
/// is reported as [`Error::Singular`].
pub fn solve_linear(m: &ComplexMatrix, rhs: &ComplexVector) -> Result<ComplexVector> {
    let n = m.rows();
    if !m.is_square() || rhs.dim() != n {
        return Err(Error::Shape(format!(
            "cannot solve {}x{} system with rhs of dim {}",
            m.rows(),
            m.cols(),
            rhs.dim()
        )));
    }
    let scale = m.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let threshold = PIVOT_TOLERANCE * scale;
    let mut a = m.clone();
    let mut x = rhs.clone();

    for col in 0..n {
        let (pivot_row, pivot) =
            (col..n)
                .map(|r| (r, a[(r, col)].norm()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= threshold || pivot == 0.0 {
            return Err(Error::Singular { pivot, threshold });
        }
        if pivot_row != col {
            for c in 0..n {
                a.data.swap(col * n + c, pivot_row * n + c);
            }
            x.0.swap(col, pivot_row);
        }
        let inv = ONE / a[(col, col)];
        for r in col + 1..n {
            let factor = a[(r, col)] * inv;
            if factor == ZERO {
                continue;
            }
            for c in col..n {
                let v = a[(col, c)];
                a[(r, c)] -= factor * v;
            }
            let xc = x[col];
            x[r] -= factor * xc;
        }
    }
    for r in (0..n).rev() {
        let mut acc = x[r];
        for c in r + 1..n {
            acc -= a[(r, c)] * x[c];
        }
        x[r] = acc / a[(r, r)];
    }
    Ok(x)
}

/// A 2×2 complex matrix `[[a, b], [c, d]]` stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [Complex64; 4]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([ONE, ZERO, ZERO, ONE]);
    pub const ZERO: Mat2 = Mat2([ZERO, ZERO, ZERO, ZERO]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self([a, b, c, d])
    }

    pub fn diag(a: Complex64, d: Complex64) -> Self {
        Self([a, ZERO, ZERO, d])
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.0[2 * r + c]
    }

    pub fn mul(&self, o: &Self) -> Self {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Self([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }

    pub fn adjoint(&self) -> Self {
        let [a, b, c, d] = self.0;
        Self([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    pub fn det(&self) -> Complex64 {
        let [a, b, c, d] = self.0;
        a * d - b * c
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.0;
        for (x, y) in out.iter_mut().zip(o.0) {
            *x += y;
        }
        Self(out)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-ONE))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.adjoint().mul(self).sub(&Self::IDENTITY).frobenius_norm()
    }

    fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == ZERO {
            return None;
        }
        let [a, b, c, d] = self.0;
        Some(Self([d, -b, -c, a]).scale(ONE / det))
    }

    /// Unitary polar factor `W` of `self = W·P`, the Frobenius-nearest
    /// unitary matrix.
    pub fn nearest_unitary(&self) -> Result<Self> {
        let norm_sq = self.0.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let abs_det = self.det().norm();
        if !(abs_det > 1e-14 * norm_sq) {
            return Err(Error::SingularProjection { det: abs_det });
        }
        // sqrt of a 2x2 PSD matrix H: (H + sqrt(det H) I) / sqrt(tr H + 2 sqrt(det H))
        let gram = self.adjoint().mul(self);
        let t = (gram.0[0].re + gram.0[3].re + 2.0 * abs_det).sqrt();
        let p = gram.add(&Self::IDENTITY.scale(Complex64::new(abs_det, 0.0))).scale(Complex64::new(1.0 / t, 0.0));
        let p_inv = p.inverse().ok_or(Error::SingularProjection { det: abs_det })?;
        let mut w = self.mul(&p_inv);
        // One Newton step W <- (W + W^{-†}) / 2 removes rounding drift.
        if let Some(inv) = w.inverse() {
            w = w.add(&inv.adjoint()).scale(Complex64::new(0.5, 0.0));
        }
        Ok(w)
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix { rows: 2, cols: 2, data: self.0.to_vec() }
    }
}

impl TryFrom<&ComplexMatrix> for Mat2 {
    type Error = Error;
    fn try_from(m: &ComplexMatrix) -> Result<Self> {
        if m.rows() != 2 || m.cols() != 2 {
            return Err(Error::Shape(format!("expected a 2x2 matrix, got {}x{}", m.rows(), m.cols())));
        }
        let s = m.as_slice();
        Ok(Self([s[0], s[1], s[2], s[3]]))
    }
}

pub fn nearest_unitary_2x2(b: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(Mat2::try_from(b)?.nearest_unitary()?.to_matrix())
}

/// Haar-distributed `d×d` unitary drawn from `rng`.
///
/// Columns of a complex Gaussian matrix are orthonormalized by modified
/// Gram-Schmidt (two passes). The implied `R` factor has a positive real
/// diagonal, which is the phase fix that makes the result Haar.
pub fn random_unitary_with<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = (0..d)
        .map(|_| (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect())
        .collect();
    for k in 0..d {
        for _ in 0..2 {
            for j in 0..k {
                let proj: Complex64 = cols[j].iter().zip(&cols[k]).map(|(q, v)| q.conj() * v).sum();
                let qj = cols[j].clone();
                for (v, q) in cols[k].iter_mut().zip(qj) {
                    *v -= proj * q;
                }
            }
        }
        let norm = cols[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for v in cols[k].iter_mut() {
            *v /= norm;
        }
    }
    ComplexMatrix::from_fn(d, d, |r, c| cols[c][r])
}

pub fn random_unitary(d: usize, seed: u64) -> Result<ComplexMatrix> {
    if d < 2 {
        return Err(Error::Domain(format!("random_unitary needs d >= 2, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_unitary_with(&mut rng, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn max_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.sub(b).unwrap().as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn matmul_identity_and_pauli_x() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(matmul(&i2, &i2).unwrap(), i2);
        let x = ComplexMatrix::from_rows(&[vec![(0., 0.), (1., 0.)], vec![(1., 0.), (0., 0.)]]).unwrap();
        assert_eq!(matmul(&x, &x).unwrap(), i2);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let p = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = ZERO;
                for k in 0..4 {
                    acc += a[(i, k)] * b[(k, j)];
                }
                assert!((p[(i, j)] - acc).norm() < 1e-15);
            }
        }
        assert!(matches!(b.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(ComplexMatrix::identity(3).adjoint(), ComplexMatrix::identity(3));
        let m = ComplexMatrix::from_rows(&[vec![(0., 0.), (0., 1.)], vec![(0., 0.), (0., 0.)]]).unwrap();
        let expected = ComplexMatrix::from_rows(&[vec![(0., 0.), (0., 0.)], vec![(0., -1.), (0., 0.)]]).unwrap();
        assert_eq!(m.adjoint(), expected);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 3, 5);
        assert_eq!(a.adjoint().adjoint(), a);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(ComplexMatrix::zeros(3, 3).frobenius_norm(), 0.0);
        assert!((ComplexMatrix::identity(8).frobenius_norm() - 8f64.sqrt()).abs() < 1e-15);
        for d in [2, 4, 8] {
            let u = random_unitary(d, d as u64).unwrap();
            assert!((u.frobenius_norm() - (d as f64).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn kron_examples() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
        let a = ComplexMatrix::from_rows(&[vec![(1., 0.), (0., 0.)], vec![(0., 0.), (2., 0.)]]).unwrap();
        let s = ComplexMatrix::from_rows(&[vec![(3., 0.)]]).unwrap();
        let expected = ComplexMatrix::from_rows(&[vec![(3., 0.), (0., 0.)], vec![(0., 0.), (6., 0.)]]).unwrap();
        assert_eq!(kron(&a, &s), expected);
    }

    /// Row stacking pairs with `A ⊗ Bᵀ`; column stacking would need `Bᵀ ⊗ A`.
    /// Only the former agrees with the matmul oracle under our `vectorize`.
    #[test]
    fn vec_identity_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 2);
            let x = random_matrix(&mut rng, 2, 2);
            let b = random_matrix(&mut rng, 2, 2);
            let direct = a.matmul(&x).unwrap().matmul(&b).unwrap().vectorize();
            let row_form = kron(&a, &b.transpose()).mul_vec(&x.vectorize()).unwrap();
            let col_form = kron(&b.transpose(), &a).mul_vec(&x.vectorize()).unwrap();
            let err = |v: &ComplexVector| v.iter().zip(direct.iter()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            assert!(err(&row_form) < 1e-12);
            assert!(err(&col_form) > 1e-3);
        }
    }

    #[test]
    fn vectorize_round_trip() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(devectorize(&vectorize(&i2), 2, 2).unwrap(), i2);
        let m = ComplexMatrix::zeros(2, 3);
        assert_eq!(vectorize(&m).dim(), 6);
        assert!(devectorize(&vectorize(&m), 4, 2).is_err());
    }

    #[test]
    fn solve_linear_examples() {
        let b = ComplexVector::new(vec![c(1., 2.), c(-3., 0.5)]).unwrap();
        assert_eq!(solve_linear(&ComplexMatrix::identity(2), &b).unwrap(), b);
        let d = ComplexMatrix::from_rows(&[vec![(2., 0.), (0., 0.)], vec![(0., 0.), (4., 0.)]]).unwrap();
        let x = solve_linear(&d, &ComplexVector::new(vec![c(2., 0.), c(4., 0.)]).unwrap()).unwrap();
        assert!((x[0] - ONE).norm() < 1e-15 && (x[1] - ONE).norm() < 1e-15);
    }

    #[test]
    fn solve_linear_residual_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_matrix(&mut rng, 8, 8);
        let rhs = ComplexVector::new((0..8).map(|_| c(rng.random(), rng.random())).collect()).unwrap();
        let x = solve_linear(&a, &rhs).unwrap();
        let r = a.mul_vec(&x).unwrap();
        let res: f64 = r.iter().zip(rhs.iter()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        assert!(res < 1e-10);
    }

    /// 1000 random systems up to dim 80, each a unitary plus a bounded
    /// perturbation so that the condition number stays small.
    #[test]
    fn solve_linear_residual_bound_many() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for k in 0..1000 {
            let n = 2 + (k * 7919) % 79;
            let u = random_unitary_with(&mut rng, n);
            let noise = random_matrix(&mut rng, n, n).scale(c(0.1 / n as f64, 0.0));
            let m = u.sub(&noise).unwrap();
            let rhs = ComplexVector::new((0..n).map(|_| c(rng.random(), rng.random())).collect()).unwrap();
            let x = solve_linear(&m, &rhs).unwrap();
            let r = m.mul_vec(&x).unwrap();
            let res = r.iter().zip(rhs.iter()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
            assert!(res <= 1e-10 * rhs.norm(), "n={n} residual {res}");
        }
    }

    #[test]
    fn solve_linear_reports_singular_pivot() {
        let m = ComplexMatrix::from_rows(&[vec![(1., 0.), (2., 0.)], vec![(2., 0.), (4., 0.)]]).unwrap();
        let rhs = ComplexVector::new(vec![ONE, ONE]).unwrap();
        match solve_linear(&m, &rhs) {
            Err(Error::Singular { pivot, threshold }) => assert!(pivot <= threshold),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn nearest_unitary_fixed_point_and_scaling() {
        let u = Mat2::try_from(&random_unitary(2, 9).unwrap()).unwrap();
        let w = u.nearest_unitary().unwrap();
        assert!(w.sub(&u).frobenius_norm() < 1e-12);
        let two = ComplexMatrix::identity(2).scale(c(2.0, 0.0));
        let w = nearest_unitary_2x2(&two).unwrap();
        assert!(max_diff(&w, &ComplexMatrix::identity(2)) < 1e-15);
        assert!(matches!(Mat2::new(ONE, ONE, ONE, ONE).nearest_unitary(), Err(Error::SingularProjection { .. })));
    }

    /// The polar factor must be at least as close as any sampled unitary.
    #[test]
    fn nearest_unitary_beats_sampled_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let u = Mat2::try_from(&random_unitary_with(&mut rng, 2)).unwrap();
            let noise = Mat2(std::array::from_fn(|_| c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))));
            let b = u.add(&noise);
            let w = b.nearest_unitary().unwrap();
            assert!(w.unitarity_residual() < 1e-12);
            let best = b.sub(&w).frobenius_norm();
            let mut sample_min = f64::INFINITY;
            for _ in 0..20_000 {
                let v = Mat2::try_from(&random_unitary_with(&mut rng, 2)).unwrap();
                sample_min = sample_min.min(b.sub(&v).frobenius_norm());
            }
            assert!(best <= sample_min + 1e-6, "{best} vs {sample_min}");
        }
    }

    #[test]
    fn random_unitary_is_deterministic_and_unitary() {
        assert_eq!(random_unitary(4, 1).unwrap(), random_unitary(4, 1).unwrap());
        assert_ne!(random_unitary(4, 1).unwrap(), random_unitary(4, 2).unwrap());
        for d in [2, 4, 8] {
            assert!(random_unitary(d, 42).unwrap().unitarity_residual() < 1e-10);
        }
        assert!(random_unitary(1, 0).is_err());
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(ComplexMatrix::new(0, 2, vec![]).is_err());
        assert!(ComplexMatrix::new(2, 2, vec![ONE; 3]).is_err());
        assert!(matches!(
            ComplexMatrix::new(1, 2, vec![ONE, c(f64::NAN, 0.0)]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    proptest! {
        #[test]
        fn adjoint_reverses_products(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 3, 4);
            let b = random_matrix(&mut rng, 4, 3);
            let lhs = a.matmul(&b).unwrap().adjoint();
            let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
            prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn frobenius_is_unitarily_invariant(seed in any::<u64>(), d in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_unitary_with(&mut rng, d);
            let a = random_matrix(&mut rng, d, d);
            let lhs = u.matmul(&a).unwrap().frobenius_norm();
            prop_assert!((lhs - a.frobenius_norm()).abs() < 1e-10);
        }

        #[test]
        fn vec_identity_holds_for_rectangular_shapes(seed in any::<u64>(), m in 1usize..4, n in 1usize..4, p in 1usize..4, q in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, m, n);
            let x = random_matrix(&mut rng, n, p);
            let b = random_matrix(&mut rng, p, q);
            let direct = a.matmul(&x).unwrap().matmul(&b).unwrap().vectorize();
            let via_kron = kron(&a, &b.transpose()).mul_vec(&x.vectorize()).unwrap();
            for (u, v) in direct.iter().zip(via_kron.iter()) {
                prop_assert!((u - v).norm() < 1e-12);
            }
        }

        #[test]
        fn devectorize_inverts_vectorize(seed in any::<u64>(), r in 1usize..6, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, r, k);
            prop_assert_eq!(devectorize(&vectorize(&a), r, k).unwrap(), a);
        }
    }
}
