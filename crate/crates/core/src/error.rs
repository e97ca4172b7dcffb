use thiserror::Error;

/// Errors raised by the numerical and potential-theoretic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("singular exponent {0} is not integrable (must lie in [0, 1))")]
    NonIntegrable(f64),

    #[error("quadrature did not reach the requested tolerance within {0} evaluations")]
    QuadratureBudget(usize),

    #[error("precision escalation exhausted at {bits} bits (last relative change {rel_change:e})")]
    PrecisionExhausted { bits: u32, rel_change: f64 },

    #[error("chain has no stationary distribution attached")]
    MissingStationary,

    #[error("stationary mass vanishes at state {0}")]
    ZeroStationaryMass(usize),

    #[error("chain is reducible; communicating classes: {0:?}")]
    Reducible(Vec<Vec<usize>>),

    #[error("state sets must be nonempty and disjoint")]
    BadStateSets,

    #[error("state index {0} is out of range")]
    StateOutOfRange(usize),

    #[error("target set is unreachable from state {0}")]
    Unreachable(usize),

    #[error("flow is supported on ({0}, {1}), which is not an edge of the chain")]
    FlowSupport(usize, usize),

    #[error("test flow must be nonzero")]
    ZeroFlow,

    #[error("test function violates its boundary constraint at state {0}")]
    Infeasible(usize),

    #[error("state {n} lies outside the admissible window [{lo}, {hi}]")]
    Window { n: usize, lo: usize, hi: usize },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("{0} sample(s) hit the event budget; the mean would be biased")]
    Truncated(usize),

    #[error("no samples")]
    NoSamples,

    #[error("simulation infeasible: {0}")]
    SimulationInfeasible(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
