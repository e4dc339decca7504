//! First-order phase: Frank-Wolfe and projected-gradient steps with their
//! stopping rules and guaranteed decreases.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use log::warn;


use crate::model::{FeasibleSet, ProblemSpec, SmoothnessConstants};
use crate::{Result, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FirstOrderMethod {
    #[default]
    FrankWolfe,
    ProjectedGradient,
}

impl FirstOrderMethod {
    pub fn name(self) -> &'static str {
        match self {
            FirstOrderMethod::FrankWolfe => "fw",
            FirstOrderMethod::ProjectedGradient => "pgd",
        }
    }
}

impl core::str::FromStr for FirstOrderMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fw" | "frank-wolfe" | "frankwolfe" => Ok(FirstOrderMethod::FrankWolfe),
            "pgd" | "projected-gradient" => Ok(FirstOrderMethod::ProjectedGradient),
            _ => Err(crate::Error::InvalidArgument(alloc::format!(
                "unknown first-order method `{s}` (expected fw or pgd)"
            ))),
        }
    }
}

/// Step size and tolerance of the first-order phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderConfig {
    pub method: FirstOrderMethod,
    pub epsilon: f64,
    /// `ε/(D²L)` for Frank-Wolfe, `1/L` for projected gradient.
    pub eta: f64,
    pub max_iters: usize,
}

impl FirstOrderConfig {
    pub fn new(method: FirstOrderMethod, constants: &SmoothnessConstants, epsilon: f64, max_iters: usize) -> Self {
        let eta = match method {
            FirstOrderMethod::FrankWolfe => fw_stepsize(constants, epsilon),
            FirstOrderMethod::ProjectedGradient => 1.0 / constants.grad_lipschitz,
        };
        Self {
            method,
            epsilon,
            eta,
            max_iters,
        }
    }
}

/// `ε/(D²L)`, before clamping.
pub fn fw_stepsize(c: &SmoothnessConstants, epsilon: f64) -> f64 {
    epsilon / (c.diameter * c.diameter * c.grad_lipschitz)
}

/// `ε²/(2D²L)`.
pub fn fw_decrease_bound(c: &SmoothnessConstants, epsilon: f64) -> f64 {
    epsilon * epsilon / (2.0 * c.diameter * c.diameter * c.grad_lipschitz)
}

/// `ε/(K + LD)`.
pub fn pgd_threshold(c: &SmoothnessConstants, epsilon: f64) -> f64 {
    epsilon / (c.grad_bound + c.grad_lipschitz * c.diameter)
}

/// `ε²L/(2(K + LD)²)`.
pub fn pgd_decrease_bound(c: &SmoothnessConstants, epsilon: f64) -> f64 {
    let k = c.grad_bound + c.grad_lipschitz * c.diameter;
    epsilon * epsilon * c.grad_lipschitz / (2.0 * k * k)
}

/// Reciprocal of the guaranteed per-step decrease, `2D²L/ε²` or
/// `2(K+LD)²/(ε²L)`.
pub fn first_order_rate(method: FirstOrderMethod, c: &SmoothnessConstants, epsilon: f64) -> f64 {
    match method {
        FirstOrderMethod::FrankWolfe => 1.0 / fw_decrease_bound(c, epsilon),
        FirstOrderMethod::ProjectedGradient => 1.0 / pgd_decrease_bound(c, epsilon),
    }
}

/// Bound on the number of first-order steps before the stopping rule fires,
/// `⌈(f(x₀) − f_lb) · rate⌉`.
pub fn first_order_iteration_bound(
    method: FirstOrderMethod,
    c: &SmoothnessConstants,
    epsilon: f64,
    f_gap: f64,
) -> usize {
    (f_gap.max(0.0) * first_order_rate(method, c, epsilon)).ceil() as usize
}

/// Frank-Wolfe gap `max_{v∈C} −∇f(x)ᵀ(v − x)` and its maximiser.
#[derive(Clone, Debug, PartialEq)]
pub struct FwGap {
    pub gap: f64,
    pub v: Vector,
}

/// Frank-Wolfe gap of `problem` at `x`.
pub fn fw_gap(problem: &ProblemSpec, x: &Vector) -> Result<FwGap> {
    let g = problem.objective().gradient(x);
    fw_gap_from(&problem.set, &g, x)
}

/// Frank-Wolfe gap for a given gradient (or gradient estimate) `g`.
pub fn fw_gap_from(set: &FeasibleSet, g: &Vector, x: &Vector) -> Result<FwGap> {
    let v = set.linear_oracle(g)?;
    if g.norm() == 0.0 {
        return Ok(FwGap { gap: 0.0, v });
    }
    let gap = (-g.dot(&(&v - x))).max(0.0);
    Ok(FwGap { gap, v })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FwStep {
    pub x_next: Vector,
    pub v: Vector,
    pub gap: f64,
    pub eta: f64,
    /// `ε/(D²L)` exceeded 1 and was clamped.
    pub clamped: bool,
}

/// `x⁺ = (1 − η)x + ηv` with `η = min(1, ε/(D²L))`.
pub fn fw_step(problem: &ProblemSpec, x: &Vector, epsilon: f64) -> Result<FwStep> {
    let FwGap { gap, v } = fw_gap(problem, x)?;
    Ok(fw_step_towards(&problem.constants, x, v, gap, epsilon))
}

pub(crate) fn fw_step_towards(c: &SmoothnessConstants, x: &Vector, v: Vector, gap: f64, epsilon: f64) -> FwStep {
    let raw = fw_stepsize(c, epsilon);
    let clamped = raw > 1.0;
    if clamped {
        warn!("Frank-Wolfe step {raw} exceeds 1; clamping (decrease bound not asserted)");
    }
    let eta = raw.min(1.0);
    let x_next = x * (1.0 - eta) + &v * eta;
    FwStep {
        x_next,
        v,
        gap,
        eta,
        clamped,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgdStep {
    pub x_next: Vector,
    /// `‖x − x⁺‖`
    pub displacement: f64,
}

/// `x⁺ = π_C(x − ∇f(x)/L)`.
pub fn pgd_step(problem: &ProblemSpec, x: &Vector) -> Result<PgdStep> {
    let g = problem.objective().gradient(x);
    let y = x - g / problem.constants.grad_lipschitz;
    let x_next = problem.set.project(&y)?;
    let displacement = (x - &x_next).norm();
    Ok(PgdStep {
        x_next,
        displacement,
    })
}

/// True when `‖x − x⁺‖ ≤ ε/(K + LD)`, i.e. `x` is an ε-first-order
/// stationary point.
pub fn pgd_stationarity_test(x: &Vector, x_next: &Vector, c: &SmoothnessConstants, epsilon: f64) -> bool {
    (x - x_next).norm() <= pgd_threshold(c, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{registry_get, Oracle, ProblemSpec, Quadratic};
    use crate::Matrix;
    use alloc::sync::Arc;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn half_norm_sq() -> ProblemSpec {
        let f = Quadratic::homogeneous(Matrix::identity(2, 2));
        ProblemSpec::builder("sq", Oracle::Deterministic(Arc::new(f)), FeasibleSet::unit_ball(2), v(&[0.0, 0.0]))
            .grad_lipschitz(1.0)
            .hess_lipschitz(1.0)
            .build()
            .unwrap()
    }

    fn linear(c: &[f64]) -> ProblemSpec {
        let f = Quadratic::new(Matrix::zeros(2, 2), v(c), 0.0);
        ProblemSpec::builder("lin", Oracle::Deterministic(Arc::new(f)), FeasibleSet::unit_ball(2), v(&[0.0, 0.0]))
            .grad_lipschitz(1.0)
            .hess_lipschitz(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn gap_examples() {
        let p = registry_get("quad-saddle").unwrap();
        assert_eq!(fw_gap(&p, &v(&[0.0, 0.0])).unwrap().gap, 0.0);
        let g = fw_gap(&p, &v(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(g.gap, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.v, v(&[-1.0, 0.0]), epsilon = 1e-15);
        let lin = linear(&[0.7, 0.0]);
        assert_abs_diff_eq!(fw_gap(&lin, &v(&[-1.0, 0.0])).unwrap().gap, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn fw_step_examples() {
        let p = half_norm_sq();
        let s = fw_step(&p, &v(&[1.0, 0.0]), 0.1).unwrap();
        assert_abs_diff_eq!(s.eta, 0.025);
        assert_abs_diff_eq!(s.x_next, v(&[0.95, 0.0]), epsilon = 1e-15);
        let big = fw_step(&p, &v(&[0.3, 0.4]), 10.0).unwrap();
        assert!(big.clamped);
        assert_eq!(big.x_next, big.v);

        let q = registry_get("quad-saddle").unwrap();
        let x = v(&[1.0, 0.0]);
        let s = fw_step(&q, &x, 0.4).unwrap();
        assert_abs_diff_eq!(s.x_next, v(&[0.8, 0.0]), epsilon = 1e-15);
        let f = q.objective();
        let dec = f.value(&x) - f.value(&s.x_next);
        assert_abs_diff_eq!(dec, 0.18, epsilon = 1e-14);
        assert!(dec >= fw_decrease_bound(&q.constants, 0.4));
        assert_abs_diff_eq!(fw_decrease_bound(&q.constants, 0.4), 0.02, epsilon = 1e-15);
    }

    #[test]
    fn pgd_step_examples() {
        let p = half_norm_sq();
        let s = pgd_step(&p, &v(&[0.5, 0.0])).unwrap();
        assert_eq!(s.x_next, v(&[0.0, 0.0]));
        assert_eq!(s.displacement, 0.5);

        let lin = linear(&[-1.0, 0.0]);
        let s = pgd_step(&lin, &v(&[1.0, 0.0])).unwrap();
        assert_eq!(s.x_next, v(&[1.0, 0.0]));
        assert_eq!(s.displacement, 0.0);

        let q = registry_get("quad-saddle").unwrap();
        let x = v(&[0.5, 0.1]);
        let s = pgd_step(&q, &x).unwrap();
        assert_abs_diff_eq!(s.x_next, v(&[0.0, 0.2]), epsilon = 1e-15);
        assert_abs_diff_eq!(q.objective().value(&x), 0.12, epsilon = 1e-15);
        assert_abs_diff_eq!(q.objective().value(&s.x_next), -0.02, epsilon = 1e-15);
    }

    #[test]
    fn pgd_test_examples() {
        let c = SmoothnessConstants {
            grad_lipschitz: 1.0,
            hess_lipschitz: 1.0,
            diameter: 2.0,
            grad_bound: 1.0,
            grad_variance: None,
            hess_variance: None,
        };
        let x = v(&[0.1, 0.2]);
        assert!(pgd_stationarity_test(&x, &x, &c, 1e-9));
        assert!(!pgd_stationarity_test(&x, &(&x + v(&[0.2, 0.0])), &c, 0.3));
        assert!(pgd_stationarity_test(&x, &(&x + v(&[0.05, 0.0])), &c, 0.3));
    }
}
