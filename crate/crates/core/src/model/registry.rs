//! Built-in test problems with known strict saddles.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{Objective, PerturbedQuadraticSum, Quadratic, Rosenbrock};
use super::problem::{Oracle, ProblemSpec};
use super::set::FeasibleSet;
use crate::{Error, Matrix, Result, Vector};

const NAMES: [&str; 4] = ["quad-saddle", "concave-quad", "rosenbrock-ball", "finite-sum-saddle"];

/// Tolerances the finite-sum problem is tuned for: its planned batches fit
/// inside the sample population at these values.
pub const FINITE_SUM_DEFAULT_EPSILON: f64 = 0.1;
pub const FINITE_SUM_DEFAULT_GAMMA: f64 = 0.2;

const FINITE_SUM_SAMPLES: usize = 4000;
const FINITE_SUM_SEED: u64 = 0x5add1e;
const FINITE_SUM_SHIFT: f64 = 6e-4;
const FINITE_SUM_CURVATURE: f64 = 4e-4;

pub fn registry_names() -> Vec<String> {
    NAMES.iter().map(|s| s.to_string()).collect()
}

/// Looks up a built-in problem by name.
pub fn registry_get(name: &str) -> Result<ProblemSpec> {
    match name {
        "quad-saddle" => quad_saddle(),
        "concave-quad" => {
            let mut spec = concave_quad(
                Matrix::identity(2, 2),
                vec![diag(&[1.0, 4.0]), diag(&[4.0, 1.0])],
                Vector::from_column_slice(&[1e-3, 0.0]),
            )?;
            // the corners (±1/√5, ±1/√5) have the largest norm on this set
            spec.f_lower_bound = Some(-0.2);
            Ok(spec)
        }
        "rosenbrock-ball" => rosenbrock_ball(),
        "finite-sum-saddle" => finite_sum_saddle(
            FINITE_SUM_SAMPLES,
            FINITE_SUM_SEED,
            FINITE_SUM_SHIFT,
            FINITE_SUM_CURVATURE,
        ),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            available: registry_names(),
        }),
    }
}

fn diag(d: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(d))
}

fn saddle_hessian() -> Matrix {
    diag(&[1.0, -1.0])
}

/// `½(x₁² − x₂²)` over the unit disc.
fn quad_saddle() -> Result<ProblemSpec> {
    let f = Quadratic::homogeneous(saddle_hessian());
    ProblemSpec::builder(
        "quad-saddle",
        Oracle::Deterministic(Arc::new(f)),
        FeasibleSet::unit_ball(2),
        Vector::from_column_slice(&[1e-3, 0.0]),
    )
    .grad_lipschitz(1.0)
    .hess_lipschitz(1.0)
    .grad_bound(2.0)
    .f_lower_bound(-0.5)
    .build()
}

/// `−½ xᵀPx` over an ellipsoid intersection, `P` positive definite.
///
/// The lower bound is `−½ λ_max(P) · max‖x‖²`, with `max‖x‖²` bounded by
/// `(D/2)²`.
pub fn concave_quad(p: Matrix, shapes: Vec<Matrix>, x0: Vector) -> Result<ProblemSpec> {
    let set = FeasibleSet::new(shapes)?;
    let eig = crate::linalg::sym_eig(&p)?;
    if eig.min() <= 0.0 {
        return Err(Error::InvalidArgument("concave-quad needs P positive definite".into()));
    }
    let l = eig.max();
    let radius = set.diameter() / 2.0;
    let f_lb = -0.5 * l * radius * radius;
    let f = Quadratic::homogeneous(-p);
    ProblemSpec::builder("concave-quad", Oracle::Deterministic(Arc::new(f)), set, x0)
        .grad_lipschitz(l)
        .hess_lipschitz(1.0)
        .f_lower_bound(f_lb)
        .build()
}

/// Rosenbrock with `a = b = 1` over the unit disc. The constrained minimum
/// sits on the boundary with value about `0.0409`; `0` is the bound used.
fn rosenbrock_ball() -> Result<ProblemSpec> {
    let f = Rosenbrock { a: 1.0, b: 1.0 };
    ProblemSpec::builder(
        "rosenbrock-ball",
        Oracle::Deterministic(Arc::new(f)),
        FeasibleSet::unit_ball(2),
        Vector::from_column_slice(&[-0.5, 0.3]),
    )
    // sup of ‖∇²f‖ over the disc is about 15.5, of ‖∇³f‖ about 24.95
    .grad_lipschitz(16.0)
    .hess_lipschitz(25.0)
    .f_lower_bound(0.0)
    .build()
}

/// Finite-sum version of `quad-saddle`: `n` components perturbed by centred
/// random linear terms of scale `shift` and symmetric curvature terms of
/// scale `curvature`, drawn from a seeded generator.
pub fn finite_sum_saddle(n: usize, seed: u64, shift: f64, curvature: f64) -> Result<ProblemSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("finite sum needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shifts = Vec::with_capacity(n);
    let mut curvatures = Vec::with_capacity(n);
    for _ in 0..n {
        shifts.push(Vector::from_iterator(2, (0..2).map(|_| shift * rng.gen_range(-1.0..1.0))));
        let (a, b, c): (f64, f64, f64) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        curvatures.push(Matrix::from_row_slice(2, 2, &[a, b, b, c]) * curvature);
    }
    let sum = PerturbedQuadraticSum::new(Quadratic::homogeneous(saddle_hessian()), shifts, curvatures);
    let set = FeasibleSet::unit_ball(2);
    let nu2 = sum.gradient_variance_bound(set.diameter() / 2.0);
    let xi2 = sum.hessian_variance_bound();
    debug_assert_eq!(sum.dim(), 2);
    ProblemSpec::builder(
        "finite-sum-saddle",
        Oracle::Stochastic(Arc::new(sum)),
        set,
        Vector::from_column_slice(&[1e-3, 0.0]),
    )
    .grad_lipschitz(1.0)
    .hess_lipschitz(1.0)
    .grad_bound(2.0)
    .variances(nu2, xi2)
    .f_lower_bound(-0.5)
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_saddle_constants() {
        let p = registry_get("quad-saddle").unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.x0, Vector::from_column_slice(&[1e-3, 0.0]));
        assert_eq!(p.constants.grad_lipschitz, 1.0);
        assert_eq!(p.constants.diameter, 2.0);
        assert_eq!(p.constants.grad_bound, 2.0);
        assert!(p.constants.hess_lipschitz > 0.0);
    }

    #[test]
    fn concave_quad_on_ball() {
        let p = concave_quad(
            Matrix::identity(2, 2),
            vec![Matrix::identity(2, 2)],
            Vector::zeros(2),
        )
        .unwrap();
        assert_eq!(p.f_lower_bound, Some(-0.5));
        let on_sphere = Vector::from_column_slice(&[0.6, 0.8]);
        assert!((p.objective().value(&on_sphere) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_name_lists_choices() {
        let err = registry_get("foo").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("foo") && msg.contains("quad-saddle"), "{msg}");
    }

    #[test]
    fn finite_sum_mean_is_saddle() {
        let p = registry_get("finite-sum-saddle").unwrap();
        let x = Vector::from_column_slice(&[0.3, -0.2]);
        let g = p.objective().gradient(&x);
        assert!((g - Vector::from_column_slice(&[0.3, 0.2])).norm() < 1e-15);
    }
}
