use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gates::Position;

/// How the working gate is picked at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Cyclic,
    Random,
}

/// Where the initial M gates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Random subset of the exact decomposition of the target, in order.
    RandomSubset,
    /// First M gates of the exact decomposition.
    Prefix,
    /// Identity blocks at the M lexicographically first positions.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unitarize {
    /// Blocks are only pulled towards unitarity by the penalty term.
    PenaltyOnly,
    /// Every accepted block is replaced by its polar factor.
    ProjectEachUpdate,
    /// Blocks are polar-projected once after the last sweep.
    ProjectAtEnd,
}

/// Centre of the quadratic penalty `λ‖x − c‖²` on the four free block entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyTarget {
    /// `c = 0`: plain ridge term, the literal `λ·x†x` penalty.
    Zero,
    /// `c` = polar factor of the unpenalized block fit at the candidate
    /// position, so large `λ` pulls blocks onto the unitary group.
    NearestUnitary,
}

macro_rules! named_enum {
    ($ty:ty, $what:literal, { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(&self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", $what, " '{}' (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(Selection, "selection", { Selection::Cyclic => "cyclic", Selection::Random => "random" });
named_enum!(InitStrategy, "init strategy", {
    InitStrategy::RandomSubset => "random_subset",
    InitStrategy::Prefix => "prefix",
    InitStrategy::Identity => "identity",
});
named_enum!(Unitarize, "unitarize mode", {
    Unitarize::PenaltyOnly => "penalty_only",
    Unitarize::ProjectEachUpdate => "project_each_update",
    Unitarize::ProjectAtEnd => "project_at_end",
});
named_enum!(PenaltyTarget, "penalty target", {
    PenaltyTarget::Zero => "zero",
    PenaltyTarget::NearestUnitary => "nearest_unitary",
});

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Gate budget M.
    pub m_gates: usize,
    pub lambda0: f64,
    pub mu0: f64,
    /// Penalty multiplier after a large gradient, in (0, 1).
    pub s1: f64,
    /// Penalty multiplier after a small gradient, in (1, 2).
    pub s2: f64,
    /// Gradient norms strictly above this count as large.
    pub grad_threshold: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub selection: Selection,
    pub init: InitStrategy,
    pub unitarize: Unitarize,
    pub penalty_target: PenaltyTarget,
    /// Stop once the loss changes by less than this fraction over a sweep.
    pub tol_rel: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    /// Unitarity tolerance for the target matrix.
    pub unitary_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            m_gates: 10,
            lambda0: 0.1,
            mu0: 0.1,
            s1: 0.5,
            s2: 1.5,
            grad_threshold: 1e-3,
            lambda_min: 1e-6,
            lambda_max: 1e3,
            selection: Selection::Cyclic,
            init: InitStrategy::RandomSubset,
            unitarize: Unitarize::PenaltyOnly,
            penalty_target: PenaltyTarget::NearestUnitary,
            tol_rel: 1e-8,
            max_sweeps: 500,
            seed: 0,
            unitary_tol: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn with_gates(m_gates: usize) -> Self {
        Self { m_gates, ..Self::default() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let available = Position::count(dim);
        if self.m_gates == 0 || self.m_gates > available {
            return fail(format!("gate budget must be in 1..={available} for dimension {dim}, got {}", self.m_gates));
        }
        if !(self.s1 > 0.0 && self.s1 < 1.0) {
            return fail(format!("s1 must lie in (0, 1), got {}", self.s1));
        }
        if !(self.s2 > 1.0 && self.s2 < 2.0) {
            return fail(format!("s2 must lie in (1, 2), got {}", self.s2));
        }
        if !(self.lambda_min >= 0.0 && self.lambda_min <= self.lambda0 && self.lambda0 <= self.lambda_max) {
            return fail(format!(
                "need 0 <= lambda_min <= lambda0 <= lambda_max, got {} <= {} <= {}",
                self.lambda_min, self.lambda0, self.lambda_max
            ));
        }
        if !self.lambda_max.is_finite() || !self.mu0.is_finite() {
            return fail("lambda_max and mu0 must be finite".into());
        }
        if !(self.grad_threshold >= 0.0) || !(self.tol_rel >= 0.0) || !(self.unitary_tol >= 0.0) {
            return fail("grad_threshold, tol_rel and unitary_tol must be non-negative".into());
        }
        if self.max_sweeps == 0 {
            return fail("max_sweeps must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_names_round_trip() {
        for s in [Selection::Cyclic, Selection::Random] {
            assert_eq!(s.name().parse::<Selection>().unwrap(), s);
        }
        for s in [InitStrategy::RandomSubset, InitStrategy::Prefix, InitStrategy::Identity] {
            assert_eq!(s.to_string().parse::<InitStrategy>().unwrap(), s);
        }
        for s in [Unitarize::PenaltyOnly, Unitarize::ProjectEachUpdate, Unitarize::ProjectAtEnd] {
            assert_eq!(s.to_string().parse::<Unitarize>().unwrap(), s);
        }
        assert_eq!("zero".parse::<PenaltyTarget>().unwrap(), PenaltyTarget::Zero);
        assert!("sideways".parse::<Selection>().is_err());
    }

    #[test]
    fn validation() {
        let ok = OptimizerConfig::with_gates(10);
        assert!(ok.validate(8).is_ok());
        assert!(OptimizerConfig::with_gates(29).validate(8).is_err());
        assert!(OptimizerConfig::with_gates(0).validate(8).is_err());
        assert!(OptimizerConfig { s1: 1.0, ..ok.clone() }.validate(8).is_err());
        assert!(OptimizerConfig { s2: 2.0, ..ok.clone() }.validate(8).is_err());
        assert!(OptimizerConfig { lambda0: 1e4, ..ok.clone() }.validate(8).is_err());
        assert!(OptimizerConfig { lambda0: 1e-7, ..ok.clone() }.validate(8).is_err());
        assert!(OptimizerConfig { max_sweeps: 0, ..ok }.validate(8).is_err());
    }
}
