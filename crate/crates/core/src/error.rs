use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::driver::SolveTrace;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid feasible set: {0}")]
    InvalidSet(String),

    #[error("feasible set is unbounded: every ellipsoid matrix is singular")]
    UnboundedSet,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("unknown problem `{name}`; available: {}", available.join(", "))]
    UnknownProblem { name: String, available: Vec<String> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backend unsupported: {0}")]
    BackendUnsupported(String),

    #[error("plugin contract violation: {0}")]
    PluginContract(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point infeasible (max constraint violation {violation:e})")]
    Infeasible { violation: f64 },

    #[error("missing gradient/Hessian variance bounds")]
    MissingVarianceBounds,

    #[error("iteration limit {limit} exceeded ({reason})")]
    IterationLimit {
        limit: usize,
        reason: &'static str,
        trace: Box<SolveTrace>,
    },
}

impl Error {
    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
