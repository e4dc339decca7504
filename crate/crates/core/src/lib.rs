//! Second-order stationary points of smooth nonconvex functions over
//! intersections of origin-centred ellipsoids.
//!
//! The solver alternates two phases. A first-order phase (Frank-Wolfe or
//! projected gradient) drives the iterate to an ε-first-order stationary
//! point. The escape phase then minimises the Hessian quadratic form over the
//! feasible points on the gradient-orthogonal hyperplane; when that value is
//! below `-ργ` a convex-combination step leaves the saddle, otherwise the
//! iterate is returned as an (ε,γ)-second-order stationary point.
//!
//! A mini-batch variant ([`stochastic`]) works with finite-sum objectives and
//! replaces the tangent equality by a slack inequality.
//!
//! The crate is `no_std` (it needs `alloc`). IO, configuration files and the
//! command line live in the companion `saddle-escape` crate.
//!
//! ```
//! use saddle_escape_core::driver::{solve, SolveConfig};
//! use saddle_escape_core::model::registry_get;
//!
//! let problem = registry_get("quad-saddle").unwrap();
//! let config = SolveConfig::new(0.01, 0.05);
//! let (certificate, _trace) = solve(&problem, &config).unwrap();
//! assert!(certificate.is_sosp);
//! ```
#![no_std]

extern crate alloc;

mod brute;
pub mod driver;
pub mod error;
pub mod escape;
pub mod first_order;
pub mod linalg;
pub mod model;
pub mod stochastic;
pub mod trs;

pub use error::{Error, Result};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Tolerance used whenever a membership check guards an update.
pub const FEASIBILITY_TOL: f64 = 1e-9;
