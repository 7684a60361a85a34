//! Iterative deep Ritz solver for monotone elliptic problems.
//!
//! The crate trains tanh multilayer perceptrons against a sequence of convex
//! surrogate losses, each built around the previous iterate, and ships the
//! pieces needed to run and audit such experiments:
//!
//! - [`mlp`]: networks with exact spatial derivatives (forward mode) and exact
//!   parameter gradients of pointwise functionals (reverse mode), plus the
//!   curl ansatz for divergence-free vector fields.
//! - [`problems`]: weak-form problem descriptions, the benchmark catalog and
//!   numerical monotonicity checks.
//! - [`quadrature`]: seeded collocation sampling and tensor trapezoidal grids.
//! - [`loss`]: the empirical surrogate loss, the PINN baseline loss and the
//!   dual-potential estimate.
//! - [`trainer`]: Adam inner minimization.
//! - [`idrm`]: the outer loop, step-size exponents and backward-Euler time
//!   marching.
//! - [`report`]: error metrics, experiment configuration, presets and the
//!   artifact writers used by the command line tool.

pub mod dual;
pub mod idrm;
pub mod loss;
pub mod mlp;
pub mod problems;
pub mod quadrature;
pub mod report;
pub mod trainer;

pub use dual::{Dual, Real};
pub use mlp::{EvalResult, JetSpec, MlpNet, NetArch, ParamGradient};
pub use problems::{Domain, ProblemSpec};
pub use quadrature::{GridQuad, SampleBatch};

/// Errors raised anywhere in the solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {given}")]
    DimensionMismatch { expected: usize, given: usize },

    #[error("invalid network architecture: {0}")]
    InvalidArch(String),

    #[error("non-finite {what} at point {index}")]
    NonFinite { what: String, index: usize },

    #[error("unknown {kind} `{name}`; valid names: {}", .valid.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: Vec<String>,
    },

    #[error("grid step {h} does not divide edge length {edge}; nearest valid step is {suggested}")]
    GridStep { h: f64, edge: f64, suggested: f64 },

    #[error("rate exponents are degenerate for p = {p}, rho = {rho} ({reason}); give alpha explicitly")]
    DegenerateExponents { p: f64, rho: f64, reason: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("relative error undefined: reference solution has zero norm")]
    ZeroReferenceNorm,

    #[error("{0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("time level {level}: {source}")]
    AtTimeLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 for configuration problems, 2 for numerical or
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::UnknownName { .. }
            | Error::GridStep { .. }
            | Error::DegenerateExponents { .. }
            | Error::InvalidArch(_)
            | Error::DimensionMismatch { .. } => 1,
            Error::AtTimeLevel { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    pub(crate) fn non_finite(what: impl Into<String>, index: usize) -> Self {
        Error::NonFinite {
            what: what.into(),
            index,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
