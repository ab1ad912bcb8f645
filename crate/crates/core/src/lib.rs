//! Metropolis-Hastings samplers for a Bayesian elliptic inverse problem with
//! a uniform-series prior, and a finite-chain laboratory for spectral gaps.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`]: the series prior on `[-1, 1]^J` and the diffusion coefficient.
//! * [`forward`]: the 1D Darcy solve and the observation operator.
//! * [`posterior`]: Gaussian likelihood, synthetic data, likelihood bounds.
//! * [`samplers`]: reflection map, the IS / RWM / RURWM / RSRWM proposals and
//!   the chain driver.
//! * [`spectral`]: finite reversible kernels, gaps, conductance and the
//!   gap-transfer checks.
//! * [`diagnostics`]: autocorrelation, integrated autocorrelation time and
//!   the error-bound formulas.
//! * [`experiment`]: configuration, output files and the commands behind the
//!   `rmcmc` binary.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod field;
pub mod forward;
pub mod posterior;
pub mod rng;
pub mod samplers;
pub mod spectral;

pub use error::{Error, Result};
