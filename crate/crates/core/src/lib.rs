//! Quantum and classical dynamics of a tidally driven planar rotor.
//!
//! The model is a satellite spinning about its largest principal axis, kept
//! perpendicular to an eccentric Keplerian orbit. Times are in orbital periods
//! and the angular momentum `Jz` is measured in units of `I3 / T`; the only
//! quantum scale is `beta = hbar T / I3`.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod classical;
pub mod environment;
pub mod hyperion;
pub mod io;
pub mod error;
pub mod experiment;
pub mod orbit;
pub mod params;
pub mod quantum;
pub mod seeds;
pub mod special;

pub use error::{Error, Result};
