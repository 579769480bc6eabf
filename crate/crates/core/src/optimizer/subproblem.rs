//! The per-gate quadratic subproblem.
//!
//! With `A`, `B` fixed, `A·X·B` is affine in the four free entries
//! `x = (x_ii, x_ij, x_ji, x_jj)` of the block at `(i, j)`, so
//! `½‖A X B − U‖²` is a 4×4 Hermitian quadratic form in `x`.

use num_complex::Complex64;

use super::config::PenaltyTarget;
use crate::error::{Error, Result};
use crate::gates::{Position, TwoLevelGate};
use crate::numerics::{solve_linear, ComplexMatrix, ComplexVector, Mat2, ZERO};

/// Everything about the fixed factors that the subproblem at any position needs.
#[derive(Debug, Clone)]
pub struct Context {
    a: ComplexMatrix,
    b: ComplexMatrix,
    /// `A†A`
    ga: ComplexMatrix,
    /// `B B†`
    gb: ComplexMatrix,
    /// `A† (U − AB) B†`
    h: ComplexMatrix,
    /// `‖U − AB‖²`
    base_sq: f64,
}

impl Context {
    pub fn new(a: ComplexMatrix, b: ComplexMatrix, u: &ComplexMatrix) -> Result<Self> {
        let d = u.rows();
        for (name, m) in [("A", &a), ("B", &b), ("U", u)] {
            if m.rows() != d || m.cols() != d {
                return Err(Error::Shape(format!("{name} is {}x{}, expected {d}x{d}", m.rows(), m.cols())));
            }
        }
        let r0 = u.sub(&a.matmul(&b)?)?;
        let a_adj = a.adjoint();
        let b_adj = b.adjoint();
        let h = a_adj.matmul(&r0)?.matmul(&b_adj)?;
        let ga = a_adj.matmul(&a)?;
        let gb = b.matmul(&b_adj)?;
        let base_sq = r0.frobenius_norm().powi(2);
        Ok(Self { a, b, ga, gb, h, base_sq })
    }

    pub fn a(&self) -> &ComplexMatrix {
        &self.a
    }

    pub fn b(&self) -> &ComplexMatrix {
        &self.b
    }

    pub fn problem(&self, position: Position) -> BlockProblem {
        let idx = [position.i(), position.j()];
        let mut gram = [[ZERO; 4]; 4];
        let mut rhs = [ZERO; 4];
        for r in 0..2 {
            for c in 0..2 {
                let k = 2 * r + c;
                for r2 in 0..2 {
                    for c2 in 0..2 {
                        gram[k][2 * r2 + c2] = self.ga[(idx[r], idx[r2])] * self.gb[(idx[c2], idx[c])];
                    }
                }
                let mut acc = self.h[(idx[r], idx[c])];
                for &s in &idx {
                    acc += self.ga[(idx[r], s)] * self.gb[(s, idx[c])];
                }
                rhs[k] = acc;
            }
        }
        let mut constant = self.base_sq;
        for &s in &idx {
            constant += 2.0 * self.h[(s, s)].re;
            for &s2 in &idx {
                constant += (self.ga[(s, s2)] * self.gb[(s2, s)]).re;
            }
        }
        BlockProblem { position, gram, rhs, constant }
    }

    /// `½‖A·X·B − U‖²` evaluated directly.
    pub fn data_objective(&self, gate: &TwoLevelGate, u: &ComplexMatrix) -> Result<f64> {
        let y = gate.apply_right(&self.a)?.matmul(&self.b)?;
        Ok(0.5 * y.sub(u)?.frobenius_norm().powi(2))
    }
}

/// `f(x) = ½(x†Gx − 2 Re x†h + c) + λ‖x − w‖²` at one position.
#[derive(Debug, Clone)]
pub struct BlockProblem {
    position: Position,
    gram: [[Complex64; 4]; 4],
    rhs: [Complex64; 4],
    constant: f64,
}

impl BlockProblem {
    pub fn position(&self) -> Position {
        self.position
    }

    fn gram_times(&self, x: &Mat2) -> [Complex64; 4] {
        let mut out = [ZERO; 4];
        for (k, row) in self.gram.iter().enumerate() {
            out[k] = row.iter().zip(x.0.iter()).map(|(g, v)| g * v).sum();
        }
        out
    }

    pub fn data_objective(&self, x: &Mat2) -> f64 {
        let gx = self.gram_times(x);
        let mut quad = 0.0;
        let mut lin = 0.0;
        for ((xk, gk), hk) in x.0.iter().zip(&gx).zip(&self.rhs) {
            quad += (xk.conj() * gk).re;
            lin += (xk.conj() * hk).re;
        }
        0.5 * (quad - 2.0 * lin + self.constant)
    }

    pub fn penalized(&self, x: &Mat2, lambda: f64, anchor: &Mat2) -> f64 {
        self.data_objective(x) + lambda * x.sub(anchor).frobenius_norm().powi(2)
    }

    /// Gradient with respect to the 8 real coordinates, packed as
    /// `∂/∂Re x_k + i·∂/∂Im x_k`.
    pub fn gradient(&self, x: &Mat2, lambda: f64, anchor: &Mat2) -> [Complex64; 4] {
        let gx = self.gram_times(x);
        let mut g = [ZERO; 4];
        for k in 0..4 {
            g[k] = gx[k] - self.rhs[k] + 2.0 * lambda * (x.0[k] - anchor.0[k]);
        }
        g
    }

    pub fn solve(&self, lambda: f64, anchor: &Mat2) -> Result<Mat2> {
        let shift = Complex64::new(2.0 * lambda, 0.0);
        let m = ComplexMatrix::from_fn(4, 4, |r, c| if r == c { self.gram[r][c] + shift } else { self.gram[r][c] });
        let rhs: Vec<Complex64> = (0..4).map(|k| self.rhs[k] + shift * anchor.0[k]).collect();
        let x = solve_linear(&m, &ComplexVector::new(rhs)?)?;
        let block = Mat2([x[0], x[1], x[2], x[3]]);
        if !block.is_finite() {
            return Err(Error::Singular { pivot: f64::NAN, threshold: 0.0 });
        }
        Ok(block)
    }

    /// Penalty centre for this position. Irrelevant when `lambda == 0`.
    pub fn anchor(&self, target: PenaltyTarget, lambda: f64) -> Mat2 {
        match target {
            PenaltyTarget::Zero => Mat2::ZERO,
            PenaltyTarget::NearestUnitary if lambda == 0.0 => Mat2::IDENTITY,
            PenaltyTarget::NearestUnitary => {
                self.solve(0.0, &Mat2::ZERO).and_then(|x| x.nearest_unitary()).unwrap_or(Mat2::IDENTITY)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub position: Position,
    pub block: Mat2,
    /// Penalized objective at `block`.
    pub objective: f64,
    /// Penalty centre used.
    pub anchor: Mat2,
    /// Only the full constrained solve produces multipliers; the reduced
    /// solve eliminates them.
    pub kkt_multiplier_norm: Option<f64>,
}

/// Minimizes `½‖A·X·B − U‖² + λ‖x − w‖²` over blocks at `position`, where
/// `w` is chosen by `target`. `mu` is accepted for interface symmetry; the
/// equality constraint is eliminated so no multiplier is needed.
pub fn solve_block_qp(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    u: &ComplexMatrix,
    position: Position,
    lambda: f64,
    _mu: f64,
    target: PenaltyTarget,
) -> Result<SubproblemResult> {
    if position.j() >= u.rows() {
        return Err(Error::Shape(format!("position {position} outside dimension {}", u.rows())));
    }
    let ctx = Context::new(a.clone(), b.clone(), u)?;
    let problem = ctx.problem(position);
    let anchor = problem.anchor(target, lambda);
    let block = problem.solve(lambda, &anchor)?;
    Ok(SubproblemResult {
        position,
        block,
        objective: problem.penalized(&block, lambda, &anchor),
        anchor,
        kkt_multiplier_norm: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{random_unitary, random_unitary_with, ONE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(d, d, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
    }

    /// Solves the constrained problem over all `d²` entries of `X` through
    /// the bordered system `[[Q + 2λI, D†], [D, 0]]`, with `Q = K†K`,
    /// `K = A ⊗ Bᵀ`, and `D` pinning every entry outside the block to the
    /// identity. Returns the block and the multiplier norm.
    fn full_kkt(
        a: &ComplexMatrix,
        b: &ComplexMatrix,
        u: &ComplexMatrix,
        p: Position,
        lambda: f64,
        anchor: &Mat2,
    ) -> (Mat2, f64) {
        let d = u.rows();
        let n = d * d;
        let k = a.kron(&b.transpose());
        let q = k.adjoint().matmul(&k).unwrap();
        let rhs_data = k.adjoint().mul_vec(&u.vectorize()).unwrap();
        let free = [p.i() * d + p.i(), p.i() * d + p.j(), p.j() * d + p.i(), p.j() * d + p.j()];
        let fixed: Vec<usize> = (0..n).filter(|e| !free.contains(e)).collect();
        let size = n + fixed.len();
        let mut m = ComplexMatrix::zeros(size, size);
        let mut rhs = vec![ZERO; size];
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = q[(r, c)];
            }
            m[(r, r)] += Complex64::new(2.0 * lambda, 0.0);
            rhs[r] = rhs_data[r];
        }
        for (slot, &e) in free.iter().enumerate() {
            rhs[e] += 2.0 * lambda * anchor.0[slot];
        }
        for (row, &e) in fixed.iter().enumerate() {
            m[(n + row, e)] = ONE;
            m[(e, n + row)] = ONE;
            let (r, c) = (e / d, e % d);
            let pinned = if r == c { ONE } else { ZERO };
            rhs[n + row] = pinned;
            // the penalty on a pinned entry is a constant absorbed by its multiplier
            rhs[e] += 2.0 * lambda * pinned;
        }
        let z = solve_linear(&m, &ComplexVector::new(rhs).unwrap()).unwrap();
        let block = Mat2([z[free[0]], z[free[1]], z[free[2]], z[free[3]]]);
        let mult = z[n..].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        (block, mult)
    }

    fn direct(a: &ComplexMatrix, b: &ComplexMatrix, u: &ComplexMatrix, p: Position, x: &Mat2) -> f64 {
        let g = TwoLevelGate::new(u.rows(), p, *x).unwrap();
        0.5 * a.matmul(&g.embed()).unwrap().matmul(b).unwrap().sub(u).unwrap().frobenius_norm().powi(2)
    }

    #[test]
    fn exact_interpolation_of_a_single_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = Mat2::try_from(&random_unitary_with(&mut rng, 2)).unwrap();
        let p = Position::new(2, 5).unwrap();
        let u = TwoLevelGate::new(8, p, block).unwrap().embed();
        let id = ComplexMatrix::identity(8);
        let r = solve_block_qp(&id, &id, &u, p, 0.0, 0.0, PenaltyTarget::Zero).unwrap();
        assert!(r.block.sub(&block).frobenius_norm() < 1e-12);
        assert!(r.objective.abs() < 1e-12);
        assert_eq!(r.kkt_multiplier_norm, None);
    }

    #[test]
    fn huge_ridge_shrinks_block_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b, u) =
            (random_unitary_with(&mut rng, 4), random_unitary_with(&mut rng, 4), random_unitary_with(&mut rng, 4));
        let p = Position::new(1, 3).unwrap();
        let r = solve_block_qp(&a, &b, &u, p, 1e12, 0.0, PenaltyTarget::Zero).unwrap();
        assert!(r.block.frobenius_norm() < 1e-10);
        let limit = direct(&a, &b, &u, p, &Mat2::ZERO);
        assert!((r.objective - limit).abs() < 1e-8, "{} vs {limit}", r.objective);
    }

    #[test]
    fn huge_penalty_towards_unitary_lands_on_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, u) =
            (random_unitary_with(&mut rng, 4), random_unitary_with(&mut rng, 4), random_unitary_with(&mut rng, 4));
        let p = Position::new(0, 2).unwrap();
        let r = solve_block_qp(&a, &b, &u, p, 1e12, 0.0, PenaltyTarget::NearestUnitary).unwrap();
        assert!(r.block.sub(&r.anchor).frobenius_norm() < 1e-10);
        assert!(r.block.unitarity_residual() < 1e-9);
        let free = solve_block_qp(&a, &b, &u, p, 0.0, 0.0, PenaltyTarget::Zero).unwrap();
        assert!(free.block.nearest_unitary().unwrap().sub(&r.anchor).frobenius_norm() < 1e-12);
    }

    #[test]
    fn reduced_matches_full_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in [2usize, 4] {
            for trial in 0..20 {
                let (a, b, u) = if trial % 2 == 0 {
                    (
                        random_unitary_with(&mut rng, d),
                        random_unitary_with(&mut rng, d),
                        random_unitary_with(&mut rng, d),
                    )
                } else {
                    (gaussian(&mut rng, d), gaussian(&mut rng, d), gaussian(&mut rng, d))
                };
                for p in Position::all(d) {
                    for lambda in [0.0, 0.1, 3.0] {
                        for target in [PenaltyTarget::Zero, PenaltyTarget::NearestUnitary] {
                            let r = solve_block_qp(&a, &b, &u, p, lambda, 0.1, target).unwrap();
                            let (full, mult) = full_kkt(&a, &b, &u, p, lambda, &r.anchor);
                            let err = r.block.sub(&full).frobenius_norm();
                            assert!(err < 1e-8, "d={d} {p} λ={lambda}: {err}");
                            assert!(mult.is_finite());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_objective_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 4, 8] {
            let (a, b, u) = (gaussian(&mut rng, d), gaussian(&mut rng, d), random_unitary_with(&mut rng, d));
            let ctx = Context::new(a.clone(), b.clone(), &u).unwrap();
            for p in Position::all(d) {
                let x = Mat2::try_from(&gaussian(&mut rng, 2)).unwrap();
                let closed = ctx.problem(p).data_objective(&x);
                let dense = direct(&a, &b, &u, p, &x);
                let via_ctx = ctx.data_objective(&TwoLevelGate::new(d, p, x).unwrap(), &u).unwrap();
                assert!((closed - dense).abs() < 1e-9 * (1.0 + dense), "{closed} vs {dense}");
                assert!((via_ctx - dense).abs() < 1e-9 * (1.0 + dense));
            }
        }
    }

    #[test]
    fn grid_search_cannot_beat_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, b, u) = (gaussian(&mut rng, 2), gaussian(&mut rng, 2), random_unitary_with(&mut rng, 2));
        let p = Position::new(0, 1).unwrap();
        let lambda = 0.1;
        let r = solve_block_qp(&a, &b, &u, p, lambda, 0.0, PenaltyTarget::Zero).unwrap();
        let f = |x: &Mat2| direct(&a, &b, &u, p, x) + lambda * x.frobenius_norm().powi(2);
        let step = 0.05;
        let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let mut best = f64::INFINITY;
        for code in 0..5usize.pow(8) {
            let mut x = r.block;
            let mut rest = code;
            for k in 0..4 {
                let re = offsets[rest % 5] * step;
                rest /= 5;
                let im = offsets[rest % 5] * step;
                rest /= 5;
                x.0[k] += Complex64::new(re, im);
            }
            best = best.min(f(&x));
        }
        assert!(r.objective <= best + 1e-12);
        assert!(best - r.objective < 1e-3);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2usize, 4, 8] {
            let (a, b, u) = (gaussian(&mut rng, d), gaussian(&mut rng, d), random_unitary(d, 9).unwrap());
            let ctx = Context::new(a, b, &u).unwrap();
            let p = Position::new(0, d - 1).unwrap();
            let problem = ctx.problem(p);
            let x = Mat2::try_from(&gaussian(&mut rng, 2)).unwrap();
            let anchor = Mat2::try_from(&random_unitary_with(&mut rng, 2)).unwrap();
            let lambda = 0.7;
            let g = problem.gradient(&x, lambda, &anchor);
            let h = 1e-6;
            for k in 0..4 {
                for (dir, analytic) in [(Complex64::new(h, 0.0), g[k].re), (Complex64::new(0.0, h), g[k].im)] {
                    let mut plus = x;
                    plus.0[k] += dir;
                    let mut minus = x;
                    minus.0[k] -= dir;
                    let fd = (problem.penalized(&plus, lambda, &anchor) - problem.penalized(&minus, lambda, &anchor))
                        / (2.0 * h);
                    let scale = analytic.abs().max(1.0);
                    assert!((fd - analytic).abs() < 1e-5 * scale, "d={d} k={k}: {fd} vs {analytic}");
                }
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_the_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, b, u) = (gaussian(&mut rng, 4), gaussian(&mut rng, 4), random_unitary_with(&mut rng, 4));
        let ctx = Context::new(a, b, &u).unwrap();
        for p in Position::all(4) {
            let problem = ctx.problem(p);
            for lambda in [0.0, 0.1, 10.0] {
                let anchor = problem.anchor(PenaltyTarget::NearestUnitary, lambda);
                let x = problem.solve(lambda, &anchor).unwrap();
                let g = problem.gradient(&x, lambda, &anchor);
                let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!(norm < 1e-8, "{norm}");
            }
        }
    }

    #[test]
    fn unpenalized_solve_is_plain_least_squares() {
        // λ = 0: the minimizer of ‖K_free x − (vec U − K vec X₀)‖ over the
        // four free columns of K = A ⊗ Bᵀ.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = 4;
        let (a, b, u) = (gaussian(&mut rng, d), gaussian(&mut rng, d), random_unitary_with(&mut rng, d));
        let p = Position::new(1, 2).unwrap();
        let k = a.kron(&b.transpose());
        let free = [p.i() * d + p.i(), p.i() * d + p.j(), p.j() * d + p.i(), p.j() * d + p.j()];
        let mut x0 = ComplexMatrix::identity(d);
        for &e in &free {
            x0[(e / d, e % d)] = ZERO;
        }
        let target = u.vectorize();
        let base = k.mul_vec(&x0.vectorize()).unwrap();
        let kf = ComplexMatrix::from_fn(d * d, 4, |r, c| k[(r, free[c])]);
        let resid = ComplexVector::new((0..d * d).map(|r| target[r] - base[r]).collect()).unwrap();
        let normal = kf.adjoint().matmul(&kf).unwrap();
        let rhs = kf.adjoint().mul_vec(&resid).unwrap();
        let x = solve_linear(&normal, &rhs).unwrap();
        let r = solve_block_qp(&a, &b, &u, p, 0.0, 0.0, PenaltyTarget::Zero).unwrap();
        for k in 0..4 {
            assert!((r.block.0[k] - x[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_context_without_penalty_is_singular() {
        let d = 4;
        let mut a = ComplexMatrix::identity(d);
        a[(0, 0)] = ZERO;
        a[(1, 1)] = ZERO;
        let id = ComplexMatrix::identity(d);
        let p = Position::new(0, 1).unwrap();
        let err = solve_block_qp(&a, &id, &id, p, 0.0, 0.0, PenaltyTarget::Zero).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(solve_block_qp(&a, &id, &id, p, 0.1, 0.0, PenaltyTarget::Zero).is_ok());
        // the fallback anchor is the identity block
        let r = solve_block_qp(&a, &id, &id, p, 0.1, 0.0, PenaltyTarget::NearestUnitary).unwrap();
        assert_eq!(r.anchor, Mat2::IDENTITY);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let id4 = ComplexMatrix::identity(4);
        let id8 = ComplexMatrix::identity(8);
        let p = Position::new(0, 1).unwrap();
        assert!(solve_block_qp(&id4, &id8, &id8, p, 0.1, 0.0, PenaltyTarget::Zero).is_err());
        let far = Position::new(0, 6).unwrap();
        assert!(solve_block_qp(&id4, &id4, &id4, far, 0.1, 0.0, PenaltyTarget::Zero).is_err());
    }
}
