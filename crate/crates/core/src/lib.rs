//! Exact and asymptotic analysis of the contact process on a star graph: the reduced
//! `(hub, infected leaves)` chain, its stationary measure, capacities and hitting times,
//! closed-form asymptotics, and stochastic simulation.

pub mod asymptotics;
pub mod chain;
pub mod error;
pub mod numerics;
pub mod potential;
pub mod qsd;
pub mod sim;

pub use chain::{build_reduced_chain, build_trace_chain, ChainSpec, Mode, ModelParams, State};
pub use error::{Error, Result};
pub use numerics::{HpScalar, Precision, PrecisionPolicy, Scalar};
