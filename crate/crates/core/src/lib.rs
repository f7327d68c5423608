//! Core of the chain-of-thought verification lab.
//!
//! Everything here is pure computation over finite objects: representation
//! spaces and quasimetric losses, chain rules and their trajectories,
//! exact risk functionals over finite-support distributions, the
//! amplification factor, the adversarial constructions, the arithmetic
//! example and the domain-adaptation bound on the oracle-trajectory risk.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reports and
//! the command-line front end live in the `cot-lab` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adaptation;
pub mod amplification;
pub mod arithmetic;
pub mod chain;
pub mod constructions;
mod dyadic;
pub mod error;
mod num;
pub mod risk;
pub mod spaces;

pub use error::{LabError, Result};

/// Absolute tolerance for equality assertions on risks and bounds.
pub const EQ_TOL: f64 = 1e-9;

/// Tolerance for axiom and stability checks.
pub const AXIOM_TOL: f64 = 1e-12;
