//! Intersections of origin-centred ellipsoids `{x : xᵀQᵢx ≤ 1}`.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{quad_form, sym_eig, SymEig};
use crate::{Error, Matrix, Result, Vector};

/// Tolerance of the alternating-projection inner solver.
pub const INNER_TOL: f64 = 1e-10;
/// Cycle cap of the alternating-projection inner solver.
pub const INNER_MAX_ITERS: usize = 100_000;

const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetKind {
    Ball,
    Ellipsoid,
    Intersection,
}

#[derive(Clone, Debug)]
pub struct FeasibleSet {
    dim: usize,
    shapes: Vec<Matrix>,
    eigs: Vec<SymEig>,
    /// `Qᵢ⁻¹` for the positive definite members, `None` otherwise.
    inverses: Vec<Option<Matrix>>,
    diameter: f64,
    kind: SetKind,
}

fn is_definite(e: &SymEig) -> bool {
    e.min() > 1e-12 * e.max().abs().max(1.0)
}

impl FeasibleSet {
    /// Builds the intersection `{x : xᵀQᵢx ≤ 1 ∀i}`.
    ///
    /// Every `Qᵢ` must be symmetric positive semidefinite and at least one
    /// must be positive definite so the set is bounded.
    pub fn new(shapes: Vec<Matrix>) -> Result<Self> {
        let first = shapes
            .first()
            .ok_or_else(|| Error::InvalidSet("no ellipsoids given".into()))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        let mut eigs = Vec::with_capacity(shapes.len());
        let mut inverses = Vec::with_capacity(shapes.len());
        let mut diameter = f64::INFINITY;
        for (i, q) in shapes.iter().enumerate() {
            Error::check_dim(dim, q.nrows())?;
            Error::check_dim(dim, q.ncols())?;
            let e = sym_eig(q)?;
            if e.min() < -PSD_TOL {
                return Err(Error::InvalidSet(format!(
                    "ellipsoid {i} is not positive semidefinite (min eigenvalue {:e})",
                    e.min()
                )));
            }
            if is_definite(&e) {
                diameter = diameter.min(2.0 / e.min().sqrt());
                inverses.push(Some(e.map(|l| 1.0 / l)));
            } else {
                inverses.push(None);
            }
            eigs.push(e);
        }
        if !diameter.is_finite() {
            return Err(Error::UnboundedSet);
        }
        let kind = if shapes.len() > 1 {
            SetKind::Intersection
        } else if is_scaled_identity(&shapes[0]) {
            SetKind::Ball
        } else {
            SetKind::Ellipsoid
        };
        Ok(Self {
            dim,
            shapes,
            eigs,
            inverses,
            diameter,
            kind,
        })
    }

    /// Euclidean ball of the given radius around the origin.
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidSet("radius must be positive".into()));
        }
        Self::new(vec![Matrix::identity(dim, dim) / (radius * radius)])
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(dim, 1.0).expect("unit ball is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    /// The matrices `Qᵢ`.
    pub fn shapes(&self) -> &[Matrix] {
        &self.shapes
    }

    /// Number of ellipsoids `m`.
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// Upper bound on the diameter: the smallest single-ellipsoid diameter
    /// `2/√λ_min(Qᵢ)`.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// `maxᵢ (xᵀQᵢx − 1)`; nonpositive exactly on the set.
    pub fn max_violation(&self, x: &Vector) -> Result<f64> {
        Error::check_dim(self.dim, x.len())?;
        Ok(self
            .shapes
            .iter()
            .map(|q| quad_form(q, x) - 1.0)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// True iff `xᵀQᵢx ≤ 1 + tol` for every `i`.
    pub fn membership(&self, x: &Vector, tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument("membership tolerance must be >= 0".into()));
        }
        Ok(self.max_violation(x)? <= tol)
    }

    /// A minimiser of `cᵀv` over the set; the origin when `c = 0`.
    pub fn linear_oracle(&self, c: &Vector) -> Result<Vector> {
        Error::check_dim(self.dim, c.len())?;
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("linear oracle direction is not finite".into()));
        }
        let c_norm = c.norm();
        if c_norm == 0.0 {
            return Ok(Vector::zeros(self.dim));
        }
        if self.shapes.len() == 1 {
            let q_inv = self.inverses[0].as_ref().expect("single ellipsoid is definite");
            let w = q_inv * c;
            let scale = c.dot(&w).sqrt();
            return Ok(-w / scale);
        }

        if let Some(v) = self.dual_linear_oracle(c) {
            return Ok(v);
        }
        // Projected gradient on the linear objective with a long step; its
        // fixed points are exactly the minimisers.
        let step = 1e3 * self.diameter / c_norm;
        let mut v = Vector::zeros(self.dim);
        for _ in 0..INNER_MAX_ITERS {
            let next = self.project(&(&v - c * step))?;
            let moved = (&next - &v).norm();
            v = next;
            if moved <= 1e-12 * self.diameter.max(1.0) {
                return Ok(v);
            }
        }
        Err(Error::NoConvergence {
            what: "linear oracle",
            iterations: INNER_MAX_ITERS,
            residual: f64::NAN,
        })
    }

    /// Minimiser of `cᵀv` through the convex dual
    /// `ψ(μ) = ¼cᵀA(μ)⁻¹c + Σμᵢ`, `A = ΣμᵢQᵢ`, with `v = −½A⁻¹c`.
    fn dual_linear_oracle(&self, c: &Vector) -> Option<Vector> {
        let sum = self.shapes.iter().fold(Matrix::zeros(self.dim, self.dim), |acc, q| acc + q);
        let start = 0.5 * c.dot(&sum.cholesky()?.solve(c)).sqrt();
        self.dual_newton(vec![start; self.shapes.len()], 2.0, start, |mu| {
            let chol = self.weighted_sum(mu, 0.0).cholesky()?;
            let v = chol.solve(c) * -0.5;
            let psi = -0.5 * c.dot(&v) + mu.iter().sum::<f64>();
            Some((psi, v, chol))
        })
    }

    /// Projection of `y` through the convex dual
    /// `ψ(μ) = −½‖x − y‖² − Σμᵢ(xᵀQᵢx − 1)`, `x = (I + 2A(μ))⁻¹y`.
    fn dual_projection(&self, y: &Vector) -> Option<Vector> {
        self.dual_newton(vec![0.0; self.shapes.len()], 4.0, 1.0, |mu| {
            let chol = (self.weighted_sum(mu, 0.0) * 2.0 + Matrix::identity(self.dim, self.dim)).cholesky()?;
            let x = chol.solve(y);
            let lagrangian = 0.5 * (&x - y).norm_squared()
                + self
                    .shapes
                    .iter()
                    .zip(mu)
                    .map(|(q, m)| m * (quad_form(q, &x) - 1.0))
                    .sum::<f64>();
            Some((-lagrangian, x, chol))
        })
    }

    fn weighted_sum(&self, mu: &[f64], shift: f64) -> Matrix {
        let mut a = Matrix::identity(self.dim, self.dim) * shift;
        for (q, w) in self.shapes.iter().zip(mu) {
            a += q * *w;
        }
        a
    }

    /// Projected Newton over `μ ≥ 0` on a convex dual whose gradient is
    /// `1 − xᵀQᵢx` and whose Hessian is `factor · (Qᵢx)ᵀK⁻¹(Qⱼx)`, where
    /// `eval(μ) = (ψ, x, chol(K))`. Returns the primal point, scaled into
    /// the set, or `None` if the iteration does not settle.
    fn dual_newton<E>(&self, start: Vec<f64>, factor: f64, scale: f64, eval: E) -> Option<Vector>
    where
        E: Fn(&[f64]) -> Option<(f64, Vector, nalgebra::Cholesky<f64, nalgebra::Dyn>)>,
    {
        let m = start.len();
        let gradient = |x: &Vector| -> Vec<f64> { self.shapes.iter().map(|q| 1.0 - quad_form(q, x)).collect() };
        let projected = |mu: &[f64], grad: &[f64]| -> f64 {
            mu.iter().zip(grad).map(|(m, g)| m.min(*g).abs()).fold(0.0, f64::max)
        };
        let mut mu = start;
        let (mut psi, mut x, mut chol) = eval(&mu)?;
        let mut settled = false;
        for _ in 0..200 {
            let qx: Vec<Vector> = self.shapes.iter().map(|q| q * &x).collect();
            let grad = gradient(&x);
            let pg = projected(&mu, &grad);
            if pg <= 1e-13 {
                settled = true;
                break;
            }
            // bound-aware active set: near-zero multipliers pushing outward
            let slack = mu
                .iter()
                .zip(&grad)
                .map(|(m, g)| (m - (m - g).max(0.0)).powi(2))
                .sum::<f64>()
                .sqrt()
                .min(1e-3 * scale);
            let free: Vec<usize> = (0..m).filter(|&i| !(mu[i] <= slack && grad[i] > 0.0)).collect();
            if free.is_empty() {
                settled = true;
                break;
            }
            let kinv_qx: Vec<Vector> = free.iter().map(|&i| chol.solve(&qx[i])).collect();
            let h = Matrix::from_fn(free.len(), free.len(), |a, b| factor * qx[free[a]].dot(&kinv_qx[b]));
            let rhs = Vector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
            let dir = match h.clone().cholesky() {
                Some(hc) => hc.solve(&rhs),
                None => {
                    // singular on the free set: regularise towards the diagonal
                    let ridge = 1e-12 * h.diagonal().amax().max(f64::MIN_POSITIVE);
                    (h + Matrix::identity(free.len(), free.len()) * ridge).cholesky()?.solve(&rhs)
                }
            };
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut trial = mu.clone();
                for (k, &i) in free.iter().enumerate() {
                    trial[i] = (mu[i] - t * dir[k]).max(0.0);
                }
                if let Some((p, nx, nc)) = eval(&trial) {
                    let predicted: f64 = free.iter().map(|&i| grad[i] * (mu[i] - trial[i])).sum();
                    // near the solution ψ differences drown in rounding, so a
                    // smaller projected gradient also counts as progress
                    let armijo = p <= psi - 1e-4 * predicted.max(0.0);
                    let flat = p <= psi + 1e-13 * (1.0 + psi.abs());
                    if trial != mu && (armijo || (flat && projected(&trial, &gradient(&nx)) < 0.5 * pg)) {
                        mu = trial;
                        psi = p;
                        x = nx;
                        chol = nc;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let excess = self.max_violation(&x).ok()?;
        if !settled || excess > 1e-8 {
            return None;
        }
        if excess > 0.0 {
            x /= (1.0 + excess).sqrt();
        }
        Some(x)
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        Error::check_dim(self.dim, y.len())?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("projection input is not finite".into()));
        }
        if self.max_violation(y)? <= 0.0 {
            return Ok(y.clone());
        }
        if self.shapes.len() > 1 {
            if let Some(x) = self.dual_projection(y) {
                return Ok(x);
            }
        }
        let pieces: Vec<Piece> = self
            .eigs
            .iter()
            .map(|e| {
                Piece::Ellipsoid(EllipsoidPiece {
                    center: Vector::zeros(self.dim),
                    eig: e.clone(),
                    level: 1.0,
                })
            })
            .collect();
        project_onto(&pieces, y, self.diameter)
    }

    /// Half-widths of an axis-aligned box around the origin that contains
    /// the set.
    pub fn bounding_box(&self) -> Vector {
        let mut half = Vector::from_element(self.dim, f64::INFINITY);
        for inv in self.inverses.iter().flatten() {
            for j in 0..self.dim {
                half[j] = half[j].min(inv[(j, j)].max(0.0).sqrt());
            }
        }
        half
    }

    /// Uniform sample from the set by rejection from the bounding box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let half = self.bounding_box();
        loop {
            let x = Vector::from_iterator(self.dim, half.iter().map(|&h| rng.gen_range(-h..=h)));
            if self.max_violation(&x).map(|v| v <= 0.0).unwrap_or(false) {
                return x;
            }
        }
    }

    pub(crate) fn pieces_shifted(&self, shift: &Vector) -> Vec<Piece> {
        // {z : (z + shift)ᵀQ(z + shift) ≤ 1}
        self.eigs
            .iter()
            .map(|e| {
                Piece::Ellipsoid(EllipsoidPiece {
                    center: -shift,
                    eig: e.clone(),
                    level: 1.0,
                })
            })
            .collect()
    }
}

fn is_scaled_identity(q: &Matrix) -> bool {
    let n = q.nrows();
    let d = q[(0, 0)];
    (0..n).all(|i| (0..n).all(|j| {
        let target = if i == j { d } else { 0.0 };
        (q[(i, j)] - target).abs() <= 1e-14 * d.abs().max(1.0)
    }))
}

/// Closed convex pieces handled by the alternating-projection solver.
#[derive(Clone, Debug)]
pub(crate) enum Piece {
    Ellipsoid(EllipsoidPiece),
    /// `{x : normalᵀx ≤ offset}`
    HalfSpace { normal: Vector, offset: f64 },
}

/// `{x : (x − center)ᵀQ(x − center) ≤ level}` with `Q` positive semidefinite.
#[derive(Clone, Debug)]
pub(crate) struct EllipsoidPiece {
    pub center: Vector,
    pub eig: SymEig,
    pub level: f64,
}

impl EllipsoidPiece {
    pub fn value(&self, x: &Vector) -> f64 {
        let z = self.eig.vectors.tr_mul(&(x - &self.center));
        z.iter()
            .zip(self.eig.values.iter())
            .map(|(zi, &l)| l.max(0.0) * zi * zi)
            .sum()
    }

    pub fn project(&self, y: &Vector) -> Vector {
        let z = self.eig.vectors.tr_mul(&(y - &self.center));
        let lam: Vec<f64> = self.eig.values.iter().map(|&l| l.max(0.0)).collect();
        let cutoff = 1e-14 * lam.iter().cloned().fold(1.0, f64::max);
        let form = |mu: f64| -> f64 {
            z.iter()
                .zip(&lam)
                .map(|(zi, &l)| l * zi * zi / ((1.0 + mu * l) * (1.0 + mu * l)))
                .sum()
        };
        let inside = form(0.0);
        if inside <= self.level {
            return y.clone();
        }
        let scaled = if self.level <= 0.0 {
            Vector::from_iterator(
                z.len(),
                z.iter().zip(&lam).map(|(&zi, &l)| if l > cutoff { 0.0 } else { zi }),
            )
        } else {
            // f(μ) = Σ λz²/(1+μλ)² − level is convex and decreasing, so
            // Newton from μ = 0 climbs monotonically to the root.
            let mut mu = 0.0f64;
            let hi: f64 = (z
                .iter()
                .zip(&lam)
                .filter(|(_, &l)| l > cutoff)
                .map(|(zi, &l)| zi * zi / l)
                .sum::<f64>()
                / self.level)
                .sqrt();
            for _ in 0..200 {
                let f = form(mu) - self.level;
                if f <= 1e-15 * self.level {
                    break;
                }
                let df: f64 = -2.0
                    * z.iter()
                        .zip(&lam)
                        .map(|(zi, &l)| l * l * zi * zi / (1.0 + mu * l).powi(3))
                        .sum::<f64>();
                let next = if df < 0.0 { mu - f / df } else { hi };
                if !(next > mu) {
                    break;
                }
                mu = next.min(hi);
            }
            let mut p = Vector::from_iterator(
                z.len(),
                z.iter().zip(&lam).map(|(&zi, &l)| zi / (1.0 + mu * l)),
            );
            let val: f64 = p.iter().zip(&lam).map(|(pi, &l)| l * pi * pi).sum();
            if val > self.level {
                p *= (self.level / val).sqrt();
            }
            p
        };
        &self.center + &self.eig.vectors * scaled
    }
}

impl Piece {
    pub fn project(&self, y: &Vector) -> Vector {
        match self {
            Piece::Ellipsoid(e) => e.project(y),
            Piece::HalfSpace { normal, offset } => {
                let excess = normal.dot(y) - offset;
                if excess <= 0.0 {
                    y.clone()
                } else {
                    y - normal * (excess / normal.norm_squared())
                }
            }
        }
    }

    /// Constraint excess; nonpositive on the piece.
    pub fn violation(&self, x: &Vector) -> f64 {
        match self {
            Piece::Ellipsoid(e) => e.value(x) - e.level,
            Piece::HalfSpace { normal, offset } => normal.dot(x) - offset,
        }
    }
}

/// Euclidean projection onto an intersection of pieces (Dykstra).
pub(crate) fn project_onto(pieces: &[Piece], y: &Vector, scale: f64) -> Result<Vector> {
    if pieces.len() == 1 {
        return Ok(pieces[0].project(y));
    }
    if pieces.iter().all(|p| p.violation(y) <= 0.0) {
        return Ok(y.clone());
    }
    let tol = INNER_TOL * scale.max(1.0);
    let mut x = y.clone();
    let mut increments = vec![Vector::zeros(y.len()); pieces.len()];
    let mut change = f64::INFINITY;
    for _ in 0..INNER_MAX_ITERS {
        change = 0.0;
        for (piece, incr) in pieces.iter().zip(increments.iter_mut()) {
            let shifted = &x + &*incr;
            let z = piece.project(&shifted);
            let next_incr = &shifted - &z;
            change += (&z - &x).norm_squared();
            *incr = next_incr;
            x = z;
        }
        change = change.sqrt();
        if change <= tol && pieces.iter().all(|p| p.violation(&x) <= 1e-12) {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "alternating projection",
        iterations: INNER_MAX_ITERS,
        residual: change,
    })
}
