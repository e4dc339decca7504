//! Escape phase: the tangent-space quadratic program
//! `min (u − x)ᵀH(u − x)  s.t. u ∈ C, ∇f(x)ᵀ(u − x) = 0`, its solvers, the
//! escape step and the second-order certificate.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::brute;
use crate::driver::Certificate;
use crate::first_order::fw_gap;
use crate::linalg::{
    build_tangent_basis, check_symmetric, psd_pinv, quad_form, spd_inv_sqrt, sym_eig, symmetrize,
    TangentBasis, DEFAULT_DEGENERACY_THRESHOLD,
};
use crate::model::{EllipsoidPiece, FeasibleSet, Piece, ProblemSpec, SmoothnessConstants};
use crate::trs::TrustRegion;
use crate::{Error, Matrix, Result, Vector, FEASIBILITY_TOL};

/// The subproblem in tangent coordinates `u = x + Ay`.
///
/// The objective is `yᵀBy`. The constraints are
/// `yᵀQ̃ᵢy + 2bᵢᵀy + κᵢ ≤ 1`, with `Q̃ᵢ = AᵀQᵢA`, `bᵢ = AᵀQᵢx` and
/// `κᵢ = xᵀQᵢx`. `s` and `c` are the linear and constant terms of the same
/// objective written around the ambient origin,
/// `q(ŷ) = ŷᵀBŷ + sᵀŷ + c`.
#[derive(Clone, Debug)]
pub struct TangentQP {
    pub b: Matrix,
    pub s: Vector,
    pub c: f64,
    pub qs: Vec<Matrix>,
    pub offsets: Vec<Vector>,
    pub kappas: Vec<f64>,
    pub basis: TangentBasis,
    pub x_t: Vector,
    pub hessian: Matrix,
    /// Approximation factor of the solver this instance is handed to.
    pub rho: f64,
}

impl TangentQP {
    /// Reduces the subproblem at `x_t` for a gradient (or estimate) `g` and
    /// Hessian (or estimate) `h`.
    pub fn build(set: &FeasibleSet, x_t: &Vector, g: &Vector, h: &Matrix) -> Result<Self> {
        Error::check_dim(set.dim(), x_t.len())?;
        Error::check_dim(set.dim(), g.len())?;
        check_symmetric(h)?;
        let h = symmetrize(h);
        let basis = build_tangent_basis(g, DEFAULT_DEGENERACY_THRESHOLD);
        let a = &basis.basis;
        let b = symmetrize(&(a.transpose() * &h * a));
        let hx = &h * x_t;
        let s = a.tr_mul(&hx) * -2.0;
        let c = x_t.dot(&hx);
        let mut qs = Vec::with_capacity(set.len());
        let mut offsets = Vec::with_capacity(set.len());
        let mut kappas = Vec::with_capacity(set.len());
        for q in set.shapes() {
            qs.push(symmetrize(&(a.transpose() * q * a)));
            let qx = q * x_t;
            offsets.push(a.tr_mul(&qx));
            kappas.push(x_t.dot(&qx));
        }
        Ok(Self {
            b,
            s,
            c,
            qs,
            offsets,
            kappas,
            basis,
            x_t: x_t.clone(),
            hessian: h,
            rho: 1.0,
        })
    }

    /// Number of tangent coordinates.
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// `yᵀBy`.
    pub fn objective(&self, y: &Vector) -> f64 {
        quad_form(&self.b, y)
    }

    /// `x + Ay`.
    pub fn lift(&self, y: &Vector) -> Vector {
        &self.x_t + self.basis.lift(y)
    }

    /// Constraint pieces in `y`: `(y − cᵢ)ᵀQ̃ᵢ(y − cᵢ) ≤ 1 − κᵢ + bᵢᵀQ̃ᵢ⁺bᵢ`
    /// with `cᵢ = −Q̃ᵢ⁺bᵢ`.
    pub(crate) fn pieces(&self) -> Result<Vec<Piece>> {
        let mut out = Vec::with_capacity(self.qs.len());
        for ((q, b), kappa) in self.qs.iter().zip(&self.offsets).zip(&self.kappas) {
            let eig = sym_eig(q)?;
            let pinv = psd_pinv(&eig);
            let center = -(&pinv * b);
            let level = 1.0 - kappa + b.dot(&(&pinv * b));
            out.push(Piece::Ellipsoid(EllipsoidPiece { center, eig, level }));
        }
        Ok(out)
    }

    /// Largest constraint excess of `y`, in ambient terms.
    pub fn violation(&self, y: &Vector) -> f64 {
        self.qs
            .iter()
            .zip(&self.offsets)
            .zip(&self.kappas)
            .map(|((q, b), k)| quad_form(q, y) + 2.0 * b.dot(y) + k - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Reduces the subproblem of `problem` at `x_t`.
pub fn reduce_subproblem(problem: &ProblemSpec, x_t: &Vector) -> Result<TangentQP> {
    let f = problem.objective();
    TangentQP::build(&problem.set, x_t, &f.gradient(x_t), &f.hessian(x_t))
}

/// Answer of an external approximate solver.
#[derive(Clone, Debug, PartialEq)]
pub struct PluginAnswer {
    /// Tangent coordinates of the candidate.
    pub y: Vector,
    /// Declared approximation factor in `(0, 1]`.
    pub rho: f64,
}

/// A caller-supplied ρ-approximate solver of [`TangentQP`].
pub trait QpPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, qp: &TangentQP) -> Result<PluginAnswer>;
}

#[derive(Clone, Default)]
pub enum EscapeBackend {
    /// Exact trust-region solver for one ellipsoid, brute force otherwise.
    #[default]
    Auto,
    ExactTrs,
    BruteForce,
    Plugin(Arc<dyn QpPlugin>),
}

impl core::fmt::Debug for EscapeBackend {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EscapeBackend::Plugin(p) => write!(f, "Plugin({})", p.name()),
            other => f.write_str(other.name()),
        }
    }
}

impl EscapeBackend {
    pub fn name(&self) -> &'static str {
        match self {
            EscapeBackend::Auto => "auto",
            EscapeBackend::ExactTrs => "exact-trs",
            EscapeBackend::BruteForce => "brute-force",
            EscapeBackend::Plugin(_) => "plugin",
        }
    }

    /// Parses the built-in backend names.
    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EscapeBackend::Auto),
            "exact-trs" | "exact" | "trs" => Ok(EscapeBackend::ExactTrs),
            "brute-force" | "brute" => Ok(EscapeBackend::BruteForce),
            _ => Err(Error::InvalidArgument(format!(
                "unknown backend `{s}` (expected auto, exact-trs, brute-force or plugin:<command>)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverTag {
    ExactTrs,
    Interval,
    BruteForce,
    Plugin,
}

impl SolverTag {
    pub fn name(self) -> &'static str {
        match self {
            SolverTag::ExactTrs => "exact-trs",
            SolverTag::Interval => "exact-interval",
            SolverTag::BruteForce => "brute-force",
            SolverTag::Plugin => "plugin",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EscapeResult {
    pub u: Vector,
    pub y: Vector,
    /// `(u − x)ᵀH(u − x)`
    pub q_value: f64,
    pub solver: SolverTag,
    pub rho_used: f64,
}

impl EscapeResult {
    /// Lower bound on the optimal value implied by the approximation
    /// factor: `q/ρ` for a nonpositive value.
    pub fn curvature_bound(&self) -> f64 {
        if self.q_value < 0.0 {
            self.q_value / self.rho_used
        } else {
            self.q_value
        }
    }
}

/// Solves the tangent subproblem with the selected backend.
pub fn solve_tangent_qp(qp: &TangentQP, backend: &EscapeBackend) -> Result<EscapeResult> {
    let (y, solver, rho) = match backend {
        EscapeBackend::Auto => {
            if qp.qs.len() == 1 {
                (exact_tangent(qp)?, SolverTag::ExactTrs, 1.0)
            } else if qp.dim() == 1 {
                (interval_tangent(qp), SolverTag::Interval, 1.0)
            } else {
                (brute_tangent(qp)?, SolverTag::BruteForce, 1.0)
            }
        }
        EscapeBackend::ExactTrs => (exact_tangent(qp)?, SolverTag::ExactTrs, 1.0),
        EscapeBackend::BruteForce => (brute_tangent(qp)?, SolverTag::BruteForce, 1.0),
        EscapeBackend::Plugin(p) => {
            let answer = p.solve(qp)?;
            if !(answer.rho > 0.0 && answer.rho <= 1.0) {
                return Err(Error::PluginContract(format!(
                    "declared rho {} outside (0, 1]",
                    answer.rho
                )));
            }
            if answer.y.len() != qp.dim() || !answer.y.iter().all(|v| v.is_finite()) {
                return Err(Error::PluginContract(format!(
                    "expected {} finite tangent coordinates, got {}",
                    qp.dim(),
                    answer.y.len()
                )));
            }
            (answer.y, SolverTag::Plugin, answer.rho)
        }
    };
    let u = qp.lift(&y);
    let violation = qp.violation(&y);
    if violation > FEASIBILITY_TOL {
        let msg = format!("{} candidate violates the set by {violation:e}", solver.name());
        return Err(match solver {
            SolverTag::Plugin => Error::PluginContract(msg),
            _ => Error::Infeasible { violation },
        });
    }
    let q_value = qp.objective(&y);
    Ok(EscapeResult {
        u,
        y,
        q_value,
        solver,
        rho_used: rho,
    })
}

/// Whitened single-ellipsoid instance: `y = centre + S w`, `‖w‖ ≤ R`.
pub(crate) struct Whitened {
    pub center: Vector,
    pub s: Matrix,
    pub radius2: f64,
}

/// Completes the square in `yᵀQ̃y + 2bᵀy + κ ≤ 1` for a definite `Q̃`.
pub(crate) fn whiten(q: &Matrix, b: &Vector, kappa: f64) -> Result<Whitened> {
    let eig = sym_eig(q)?;
    if eig.min() <= 0.0 {
        return Err(Error::BackendUnsupported(
            "exact trust-region backend needs a positive definite ellipsoid".into(),
        ));
    }
    let inv = eig.map(|l| 1.0 / l);
    let center = -(&inv * b);
    let radius2 = 1.0 - kappa + b.dot(&(&inv * b));
    Ok(Whitened {
        center,
        s: spd_inv_sqrt(&eig),
        radius2,
    })
}

fn exact_tangent(qp: &TangentQP) -> Result<Vector> {
    if qp.qs.len() != 1 {
        return Err(Error::BackendUnsupported(format!(
            "exact trust-region backend needs a single ellipsoid, the set has {}",
            qp.qs.len()
        )));
    }
    let k = qp.dim();
    if k == 0 {
        return Ok(Vector::zeros(0));
    }
    let wh = whiten(&qp.qs[0], &qp.offsets[0], qp.kappas[0])?;
    if wh.radius2 <= 1e-15 {
        // the tangent slice is (numerically) the single point x_t
        return Ok(Vector::zeros(k));
    }
    let bw = symmetrize(&(&wh.s * &qp.b * &wh.s));
    let lin = &wh.s * (&qp.b * &wh.center) * 2.0;
    let tr = TrustRegion::new(&bw, &lin, wh.radius2.sqrt())?;
    let sol = tr.global(None)?;
    let y = &wh.center + &wh.s * sol.w;
    Ok(pull_inside(qp, y))
}

/// Shrinks `y` toward the feasible origin until rounding excess is gone.
fn pull_inside(qp: &TangentQP, y: Vector) -> Vector {
    if qp.violation(&y) <= 0.0 {
        return y;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if qp.violation(&(&y * mid)) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    y * lo
}

/// One tangent coordinate: each constraint `qy² + 2by + κ − 1 ≤ 0` cuts an
/// interval around 0, and `By²` is minimised at an end of their intersection.
fn interval_tangent(qp: &TangentQP) -> Vector {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((q, b), kappa) in qp.qs.iter().zip(&qp.offsets).zip(&qp.kappas) {
        let (q, b, c) = (q[(0, 0)].max(0.0), b[0], kappa - 1.0);
        if q > 1e-14 * (b.abs() + c.abs()).max(1e-300) {
            let root = (b * b - q * c).max(0.0).sqrt();
            lo = lo.max((-b - root) / q);
            hi = hi.min((-b + root) / q);
        } else if b > 0.0 {
            hi = hi.min(-c / (2.0 * b));
        } else if b < 0.0 {
            lo = lo.max(-c / (2.0 * b));
        }
    }
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let y = if qp.b[(0, 0)] >= 0.0 {
        0.0
    } else if hi.abs() >= lo.abs() {
        hi
    } else {
        lo
    };
    if !y.is_finite() {
        return Vector::zeros(1);
    }
    pull_inside(qp, Vector::from_element(1, y))
}

fn brute_tangent(qp: &TangentQP) -> Result<Vector> {
    let k = qp.dim();
    let pieces = qp.pieces()?;
    let (y, _) = brute::minimize(&qp.b, &Vector::zeros(k), &pieces, &Vector::zeros(k))?;
    Ok(y)
}

/// `ρ³γ³/(3M²D⁶)`.
pub fn escape_decrease_bound(c: &SmoothnessConstants, rho: f64, gamma: f64) -> f64 {
    let rg = rho * gamma;
    rg * rg * rg / (3.0 * c.hess_lipschitz * c.hess_lipschitz * c.diameter.powi(6))
}

/// `ργ/(MD³)` before clamping.
pub fn escape_stepsize(c: &SmoothnessConstants, rho: f64, gamma: f64) -> f64 {
    rho * gamma / (c.hess_lipschitz * c.diameter.powi(3))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EscapeStep {
    pub x_next: Vector,
    pub sigma: f64,
    /// `ργ/(MD³)` exceeded 1 and was clamped.
    pub clamped: bool,
}

/// `x⁺ = (1 − σ)x + σu` with `σ = min(1, ργ/(MD³))`.
pub fn escape_step(
    problem: &ProblemSpec,
    x_t: &Vector,
    result: &EscapeResult,
    gamma: f64,
    rho: f64,
) -> Result<EscapeStep> {
    if !(result.q_value < -rho * gamma) {
        return Err(Error::Precondition(format!(
            "escape step needs q(u) < -ργ = {}, got {}",
            -rho * gamma,
            result.q_value
        )));
    }
    let raw = escape_stepsize(&problem.constants, rho, gamma);
    let clamped = raw > 1.0;
    let sigma = raw.min(1.0);
    let x_next = x_t * (1.0 - sigma) + &result.u * sigma;
    Ok(EscapeStep {
        x_next,
        sigma,
        clamped,
    })
}

/// Measures both conditions of (ε,γ)-second-order stationarity at `x`.
pub fn certify_sosp(
    problem: &ProblemSpec,
    x: &Vector,
    epsilon: f64,
    gamma: f64,
    backend: &EscapeBackend,
) -> Result<Certificate> {
    let violation = problem.set.max_violation(x)?;
    if violation > FEASIBILITY_TOL {
        return Err(Error::Infeasible { violation });
    }
    let gap = fw_gap(problem, x)?.gap;
    let qp = reduce_subproblem(problem, x)?;
    let res = solve_tangent_qp(&qp, backend)?;
    let curvature = res.curvature_bound();
    Ok(Certificate {
        x_out: x.clone(),
        fosp_gap: gap,
        tangent_curvature: curvature,
        epsilon,
        gamma,
        rho_used: res.rho_used,
        is_sosp: gap <= epsilon && curvature >= -gamma,
        iterations: 0,
        wall_time: None,
        diagnostic: None,
    })
}

/// Largest sampled value of `xᵀ∇²f(x)x` over the set. Nonpositive values
/// are consistent with the condition under which approximate solvers keep
/// their factor.
pub fn curvature_condition_slack(problem: &ProblemSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = problem.objective();
    (0..samples)
        .map(|_| {
            let x = problem.set.sample_point(&mut rng);
            quad_form(&f.hessian(&x), &x)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Warns when a solver with `ρ < 1` runs on a problem that visibly violates
/// the curvature condition. Returns the sampled slack.
pub fn check_curvature_condition(problem: &ProblemSpec, rho: f64) -> Option<f64> {
    if rho >= 1.0 {
        return None;
    }
    let slack = curvature_condition_slack(problem, 256, 0x0c0f);
    if slack > 0.0 {
        warn!(
            "approximate solver (rho = {rho}) on `{}`: sampled max xᵀ∇²f(x)x = {slack:.3e} > 0; \
             the approximation factor may not hold",
            problem.name
        );
    }
    Some(slack)
}

/// Human-readable summary of a tangent instance.
pub fn describe(qp: &TangentQP) -> String {
    format!(
        "tangent dim {} (degenerate {}), {} ellipsoid(s), c = {:.3e}",
        qp.dim(),
        qp.basis.degenerate,
        qp.qs.len(),
        qp.c
    )
}
