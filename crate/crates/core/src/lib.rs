//! Approximate a unitary with a fixed budget of two-level gates.
//!
//! The crate provides the exact two-level decomposition, ZYZ Euler angles
//! for 2×2 blocks, a block-coordinate optimizer that refits one gate at a
//! time over all free positions, and state/fidelity evaluation.

// `!(x <= tol)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decompose;
pub mod error;
pub mod evaluate;
pub mod gates;
pub mod numerics;
pub mod optimizer;

pub use error::{Error, Result};
pub use gates::{Circuit, EulerAngles, Position, TwoLevelGate};
pub use numerics::{ComplexMatrix, ComplexVector, Mat2};
pub use optimizer::{run, OptimizerConfig, RunOutcome, TraceRecord};
