//! Modeling and data-analysis toolkit for cavity-coupled solid-state
//! spin-photon interfaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`units`]: the only place where wavelengths, ordinary frequencies,
//!   angular rates and linewidths are converted into one another.
//! - [`cavity`]: decay-rate bookkeeping, Purcell calculus and the
//!   input-output reflection coefficient of a single-sided cavity.
//! - [`protocol`]: the reflection-based photon-to-spin state-transfer
//!   protocol, its fidelity / success probability and 2D sweeps.
//! - [`fitting`]: a damped least-squares engine and the spectroscopy
//!   models (Fano-Lorentz, multi-Lorentzian, lifetime EMG, g² dip).
//! - [`budget`]: multiplicative optical loss chains.

pub mod budget;
pub mod cavity;
mod error;
pub mod fitting;
pub mod protocol;
pub mod quadrature;
pub mod units;

pub use error::{Error, Result};
