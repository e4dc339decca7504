//! Objective oracles: deterministic value/gradient/Hessian and finite sums.

use alloc::vec::Vec;

use crate::linalg::symmetrize;
use crate::{Matrix, Vector};

/// A twice continuously differentiable objective.
///
/// Implementations must be callable concurrently; they hold no mutable state.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
}

/// `f(x) = (1/n) Σᵢ Fᵢ(x)`; the [`Objective`] methods are the means.
pub trait FiniteSum: Objective {
    fn sample_count(&self) -> usize;
    fn component_value(&self, i: usize, x: &Vector) -> f64;
    fn component_gradient(&self, i: usize, x: &Vector) -> Vector;
    fn component_hessian(&self, i: usize, x: &Vector) -> Matrix;
}

/// Mean of component gradients over `indices`, summed in iteration order.
///
/// Full-batch sampling and the finite-sum mean oracles both go through this
/// function, so they agree bit for bit.
pub fn mean_gradient<F, I>(oracle: &F, indices: I, x: &Vector) -> Vector
where
    F: FiniteSum + ?Sized,
    I: IntoIterator<Item = usize>,
{
    let mut sum = Vector::zeros(oracle.dim());
    let mut count = 0usize;
    for i in indices {
        sum += oracle.component_gradient(i, x);
        count += 1;
    }
    sum / count.max(1) as f64
}

/// Symmetrised mean of component Hessians over `indices`.
pub fn mean_hessian<F, I>(oracle: &F, indices: I, x: &Vector) -> Matrix
where
    F: FiniteSum + ?Sized,
    I: IntoIterator<Item = usize>,
{
    let d = oracle.dim();
    let mut sum = Matrix::zeros(d, d);
    let mut count = 0usize;
    for i in indices {
        sum += oracle.component_hessian(i, x);
        count += 1;
    }
    symmetrize(&(sum / count.max(1) as f64))
}

/// `½ xᵀPx + lᵀx + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub hessian: Matrix,
    pub linear: Vector,
    pub constant: f64,
}

impl Quadratic {
    pub fn new(hessian: Matrix, linear: Vector, constant: f64) -> Self {
        Self {
            hessian: symmetrize(&hessian),
            linear,
            constant,
        }
    }

    /// `½ xᵀPx`.
    pub fn homogeneous(hessian: Matrix) -> Self {
        let d = hessian.nrows();
        Self::new(hessian, Vector::zeros(d), 0.0)
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.hessian * x + &self.linear
    }

    fn hessian(&self, _x: &Vector) -> Matrix {
        self.hessian.clone()
    }
}

/// Two-dimensional Rosenbrock function `(a − x₁)² + b(x₂ − x₁²)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rosenbrock {
    pub a: f64,
    pub b: f64,
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> f64 {
        let r = self.a - x[0];
        let s = x[1] - x[0] * x[0];
        r * r + self.b * s * s
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let s = x[1] - x[0] * x[0];
        Vector::from_column_slice(&[
            -2.0 * (self.a - x[0]) - 4.0 * self.b * x[0] * s,
            2.0 * self.b * s,
        ])
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let h11 = 2.0 - 4.0 * self.b * x[1] + 12.0 * self.b * x[0] * x[0];
        let h12 = -4.0 * self.b * x[0];
        Matrix::from_row_slice(2, 2, &[h11, h12, h12, 2.0 * self.b])
    }
}

/// Finite sum of perturbed quadratics
/// `Fᵢ(x) = base(x) + aᵢᵀx + ½ xᵀEᵢx` with `Σaᵢ = 0` and `ΣEᵢ = 0`.
#[derive(Clone, Debug)]
pub struct PerturbedQuadraticSum {
    base: Quadratic,
    shifts: Vec<Vector>,
    curvatures: Vec<Matrix>,
}

impl PerturbedQuadraticSum {
    /// Centres the perturbations so the mean objective is `base`.
    pub fn new(base: Quadratic, mut shifts: Vec<Vector>, mut curvatures: Vec<Matrix>) -> Self {
        assert_eq!(shifts.len(), curvatures.len());
        assert!(!shifts.is_empty());
        let n = shifts.len() as f64;
        let d = base.dim();
        let mean_shift = shifts.iter().fold(Vector::zeros(d), |acc, a| acc + a) / n;
        let mean_curv = curvatures.iter().fold(Matrix::zeros(d, d), |acc, e| acc + e) / n;
        for a in &mut shifts {
            *a -= &mean_shift;
        }
        for e in &mut curvatures {
            *e = symmetrize(&(&*e - &mean_curv));
        }
        Self {
            base,
            shifts,
            curvatures,
        }
    }

    pub fn base(&self) -> &Quadratic {
        &self.base
    }

    /// Bound on `E‖∇Fᵢ(x) − ∇f(x)‖²` over `‖x‖ ≤ radius`:
    /// `mean (‖aᵢ‖ + radius‖Eᵢ‖_F)²`.
    pub fn gradient_variance_bound(&self, radius: f64) -> f64 {
        let n = self.shifts.len() as f64;
        self.shifts
            .iter()
            .zip(&self.curvatures)
            .map(|(a, e)| {
                let t = a.norm() + radius * e.norm();
                t * t
            })
            .sum::<f64>()
            / n
    }

    /// `mean ‖Eᵢ‖_F²`, which bounds the spectral-norm variance of the
    /// component Hessians.
    pub fn hessian_variance_bound(&self) -> f64 {
        let n = self.curvatures.len() as f64;
        self.curvatures.iter().map(|e| e.norm_squared()).sum::<f64>() / n
    }
}

impl Objective for PerturbedQuadraticSum {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &Vector) -> f64 {
        let n = self.shifts.len();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: &Vector) -> Vector {
        mean_gradient(self, 0..self.shifts.len(), x)
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        mean_hessian(self, 0..self.shifts.len(), x)
    }
}

impl FiniteSum for PerturbedQuadraticSum {
    fn sample_count(&self) -> usize {
        self.shifts.len()
    }

    fn component_value(&self, i: usize, x: &Vector) -> f64 {
        self.base.value(x)
            + self.shifts[i].dot(x)
            + 0.5 * x.dot(&(&self.curvatures[i] * x))
    }

    fn component_gradient(&self, i: usize, x: &Vector) -> Vector {
        self.base.gradient(x) + &self.shifts[i] + &self.curvatures[i] * x
    }

    fn component_hessian(&self, i: usize, _x: &Vector) -> Matrix {
        &self.base.hessian + &self.curvatures[i]
    }
}
