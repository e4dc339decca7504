//! Problems: objective oracles, feasible sets, smoothness constants and the
//! built-in test problems.

mod oracle;
mod problem;
mod registry;
mod set;

pub use oracle::{
    mean_gradient, mean_hessian, FiniteSum, Objective, PerturbedQuadraticSum, Quadratic,
    Rosenbrock,
};
pub use problem::{Oracle, ProblemBuilder, ProblemSpec, SmoothnessConstants};
pub use registry::{
    concave_quad, finite_sum_saddle, registry_get, registry_names, FINITE_SUM_DEFAULT_EPSILON,
    FINITE_SUM_DEFAULT_GAMMA,
};
pub use set::{FeasibleSet, SetKind, INNER_MAX_ITERS, INNER_TOL};

pub(crate) use set::{project_onto, EllipsoidPiece, Piece};
