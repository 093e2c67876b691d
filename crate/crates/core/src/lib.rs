//! Desk-scale laboratory for 2d directed polymers in the critical disorder window.
//!
//! The crate evolves partition-function fields exactly on the lattice, splits
//! their time increments into drift and martingale parts, evaluates renewal
//! functions by dynamic programming, and compares everything against the
//! continuum special functions that describe the critical stochastic heat flow.
//!
//! Module map:
//!
//! * [`walk`]: step laws, exact transition kernels, return probabilities.
//! * [`disorder`]: Bernoulli weights from a counter-based hash, critical calibration.
//! * [`polymer`]: transfer-matrix fields `W_n`, `W̄_n` and rescaled pairings.
//! * [`semimartingale`]: drift/martingale split, quadratic variation, mollified densities.
//! * [`renewal`]: the renewal functions `U_N` and the exact variance formula.
//! * [`analytics`]: `f_s`, `G_θ`, iterated kernels and continuum oracles.
//! * [`harness`]: configs, replica-parallel runs, statistics, enumeration oracle.

pub mod analytics;
pub mod disorder;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod numeric;
pub mod polymer;
pub mod renewal;
pub mod semimartingale;
pub mod testfn;
pub mod walk;

pub use error::{Error, Result};
