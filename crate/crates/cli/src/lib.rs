//! File formats, experiment harness and subcommand implementations for the
//! `gatetrim` binary.

// `!(x <= tol)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod experiment;
pub mod formats;
