//! Unsupervised ODE solvers built on echo-state reservoirs.
//!
//! A fixed random reservoir is driven by the time grid. Its hidden states and
//! their analytic time derivatives form a basis in which every candidate
//! solution is a linear readout that satisfies the initial condition exactly.
//! Training the readout then means minimizing the ODE residual:
//!
//! - linear first-order ODEs have a closed-form ridge solution ([`linear`]),
//! - Bernoulli-type ODEs start from a linearized closed form and are refined
//!   by gradient descent ([`bernoulli`], [`gd`]),
//! - systems share one reservoir across several readouts, optionally with an
//!   energy-conservation penalty ([`system`]).
//!
//! Hyperparameters are tuned with a trust-region Bayesian optimizer
//! ([`hyperopt`]), and [`harness`] holds classical integrators, comparison
//! reports and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernoulli;
pub mod coeff;
pub mod error;
pub mod gd;
pub mod harness;
pub mod hyperopt;
pub mod integrate;
pub mod linear;
pub mod reservoir;
pub mod sparse;
pub mod spectral;
pub mod system;
pub mod trial;

pub use error::{Error, Result};
pub use reservoir::{build_reservoir, check_derivative_identity, propagate, Activation, HyperParams, Reservoir, StateTrajectory};
pub use trial::{build_basis, evaluate, g_of_t, ReadoutWeights, TrialBasis};
