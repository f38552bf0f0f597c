use thiserror::Error;

/// Errors surfaced by graph construction, functional evaluation, the
/// variational solver and the Monte Carlo estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degree parameter d must be >= 2, got {0}")]
    DegreeTooSmall(u32),

    #[error("radius {radius} for d={d} needs {needed} vertices, above the cap of {cap}")]
    InstanceTooLarge { d: u32, radius: u32, needed: u128, cap: u64 },

    #[error("renewal unit needs R >= 2, got {0}")]
    UnitRadiusTooSmall(u32),

    #[error("depth chain needs R >= 1, got {0}")]
    DepthRadiusTooSmall(u32),

    #[error("vector has {got} entries but the graph has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },

    #[error("probability vector entry {index} is {value}, must be >= 0 and finite")]
    NegativeEntry { index: usize, value: f64 },

    #[error("probability vector sums to {sum}, |sum - 1| exceeds {tol}")]
    NotNormalised { sum: f64, tol: f64 },

    #[error("entry {index} is {value}; strictly positive values required here")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("rho must be strictly positive, got {0}")]
    NonPositiveRho(f64),

    #[error("{what} must be strictly positive, got {value}")]
    NonPositiveParameter { what: &'static str, value: f64 },

    #[error("argument {value} outside the domain of {what}: {detail}")]
    OutOfDomain { what: &'static str, value: f64, detail: &'static str },

    #[error("root-finding bracket failed for {what}: {detail}")]
    BracketFailure { what: &'static str, detail: String },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("all {n} runs were killed before the horizon; -ln(1/n)/t = {exponent_lower_bound} is only a lower bound")]
    AllRunsKilled { n: u64, exponent_lower_bound: f64 },

    #[error("invalid grid spec '{spec}': {detail}")]
    BadGrid { spec: String, detail: String },

    #[error("invalid experiment header line '{line}': {detail}")]
    BadHeader { line: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
