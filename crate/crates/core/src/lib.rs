//! Emission of a damped cavity mode driven by a periodically modulated
//! dipole with white-noise fluctuations, plus brute-force oracles for the
//! closed forms.
//!
//! Frequencies and rates are in units of the drive frequency.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod cli;
pub mod config;
pub mod correlation;
pub mod dipole;
pub mod error;
pub mod io;
pub mod oracle;
pub mod series;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
