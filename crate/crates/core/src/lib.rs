// SPDX-License-Identifier: Apache-2.0

//! Quantum-jump simulation of resonantly driven, dissipative Rydberg
//! ensembles on two-dimensional lattices.
//!
//! Units: ħ = 1 and, by convention, the Rabi frequency Ω = 1, so rates are
//! in units of Ω and times in Ω⁻¹. Lengths are free; the default
//! configuration measures them in blockade distances.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod lattice;
pub mod mcwf;
pub mod observables;
pub mod oracle;

pub use error::{Error, Result};
