//! Mini-batch variant for finite-sum objectives: batch planning, sampled
//! gradients and Hessians, the slack-inequality escape subproblem and the
//! stochastic outer loop.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use log::{debug, warn};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::brute;
use crate::driver::{Phase, SolveTrace, TraceRecord, DEFAULT_MAX_ITERS};
use crate::escape::{whiten, EscapeBackend, EscapeResult, SolverTag};
use crate::linalg::{build_tangent_basis, check_symmetric, quad_form, symmetrize, DEFAULT_DEGENERACY_THRESHOLD};
use crate::model::{mean_gradient, mean_hessian, FeasibleSet, FiniteSum, Piece, ProblemSpec, SmoothnessConstants};
use crate::trs::TrustRegion;
use crate::{Error, Matrix, Result, Vector, FEASIBILITY_TOL};

/// Batch sizes and slack for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub b_g: usize,
    pub b_h: usize,
    pub r: f64,
    /// `ε' = ε/2`
    pub eps_half: f64,
    /// `γ' = γ/2`
    pub gamma_half: f64,
    pub rho: f64,
    pub seed: u64,
    /// Multiplier applied to the planned batches.
    pub scale: f64,
    /// Batches were reduced to the sample population.
    pub capped: bool,
    /// Batches are below the planned values, so the guarantees do not apply.
    pub outside_theory: bool,
}

/// Ceiling that ignores relative rounding noise of order `1e-12`.
fn tolerant_ceil(x: f64) -> usize {
    ((x * (1.0 - 1e-12)).ceil().max(1.0)) as usize
}

/// Batch sizes and slack that make the high-probability guarantee hold:
/// `b_g = max{324ν²M²D⁸/(ρ⁴γ'⁴), 16D²ν²/ε'²}`, `b_H = 81D⁴ξ²/(ρ²γ'²)` and
/// `r = ρ²γ'²/(18MD³)`, with `ε' = ε/2` and `γ' = γ/2`.
pub fn plan_batches(c: &SmoothnessConstants, epsilon: f64, gamma: f64, rho: f64, seed: u64) -> Result<BatchPlan> {
    if !(epsilon > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidArgument("epsilon and gamma must be positive".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument("rho must lie in (0, 1]".into()));
    }
    let (nu2, xi2) = match (c.grad_variance, c.hess_variance) {
        (Some(n), Some(x)) => (n, x),
        _ => return Err(Error::MissingVarianceBounds),
    };
    let (m, d) = (c.hess_lipschitz, c.diameter);
    let ep = epsilon / 2.0;
    let gp = gamma / 2.0;
    let rg = rho * gp;
    let bg_escape = 324.0 * nu2 * m * m * d.powi(8) / rg.powi(4);
    let bg_first = 16.0 * d * d * nu2 / (ep * ep);
    let bh = 81.0 * d.powi(4) * xi2 / (rg * rg);
    Ok(BatchPlan {
        b_g: tolerant_ceil(bg_escape.max(bg_first)),
        b_h: tolerant_ceil(bh),
        r: rg * rg / (18.0 * m * d.powi(3)),
        eps_half: ep,
        gamma_half: gp,
        rho,
        seed,
        scale: 1.0,
        capped: false,
        outside_theory: false,
    })
}

impl BatchPlan {
    /// Caps both batches at the population size `n`.
    pub fn capped_to(mut self, n: usize) -> Self {
        if self.b_g > n || self.b_h > n {
            warn!(
                "planned batches (b_g = {}, b_H = {}) exceed the {n} samples; using full batches",
                self.b_g, self.b_h
            );
            self.b_g = self.b_g.min(n);
            self.b_h = self.b_h.min(n);
            self.capped = true;
        }
        self
    }

    /// Multiplies both batches by `factor`; a factor below 1 leaves the
    /// theory's regime.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument("batch scale must be positive".into()));
        }
        if factor != 1.0 {
            self.b_g = tolerant_ceil(self.b_g as f64 * factor);
            self.b_h = tolerant_ceil(self.b_h as f64 * factor);
            self.scale *= factor;
            if factor < 1.0 {
                self.outside_theory = true;
            }
        }
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `1 − 1/16 − 1/324 − ρ²/81`.
pub fn success_probability_bound(rho: f64) -> f64 {
    1.0 - 1.0 / 16.0 - 1.0 / 324.0 - rho * rho / 81.0
}

/// `(f(x₀) − f*) · max{4LD²/ε'², 6M²D⁶/(ρ³γ'³)} / δ`.
pub fn markov_iteration_bound(c: &SmoothnessConstants, f_gap: f64, epsilon: f64, gamma: f64, rho: f64, delta: f64) -> f64 {
    let ep = epsilon / 2.0;
    let rg = rho * gamma / 2.0;
    let first = 4.0 * c.grad_lipschitz * c.diameter * c.diameter / (ep * ep);
    let escape = 6.0 * c.hess_lipschitz * c.hess_lipschitz * c.diameter.powi(6) / (rg * rg * rg);
    f_gap.max(0.0) * first.max(escape) / delta
}

/// `ε'²/(4D²L)`, the expected decrease of a first-order step.
pub fn expected_first_order_decrease(c: &SmoothnessConstants, epsilon: f64) -> f64 {
    let ep = epsilon / 2.0;
    ep * ep / (4.0 * c.diameter * c.diameter * c.grad_lipschitz)
}

/// `ρ³γ'³/(6M²D⁶)`, the expected decrease of an escape step.
pub fn expected_escape_decrease(c: &SmoothnessConstants, gamma: f64, rho: f64) -> f64 {
    let rg = rho * gamma / 2.0;
    rg * rg * rg / (6.0 * c.hess_lipschitz * c.hess_lipschitz * c.diameter.powi(6))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Independent uniform indices.
    #[default]
    WithReplacement,
    /// Distinct indices, summed in ascending order.
    WithoutReplacement,
}

fn draw<R: Rng + ?Sized>(n: usize, b: usize, mode: SamplingMode, rng: &mut R) -> Vec<usize> {
    match mode {
        SamplingMode::WithReplacement => (0..b).map(|_| rng.gen_range(0..n)).collect(),
        SamplingMode::WithoutReplacement => {
            let mut idx = index::sample(rng, n, b.min(n)).into_vec();
            idx.sort_unstable();
            idx
        }
    }
}

/// Mean of `b` sampled component gradients.
pub fn sample_gradient<F, R>(oracle: &F, x: &Vector, b: usize, mode: SamplingMode, rng: &mut R) -> Vector
where
    F: FiniteSum + ?Sized,
    R: Rng + ?Sized,
{
    let idx = draw(oracle.sample_count(), b.max(1), mode, rng);
    mean_gradient(oracle, idx, x)
}

/// Symmetrised mean of `b` sampled component Hessians.
pub fn sample_hessian<F, R>(oracle: &F, x: &Vector, b: usize, mode: SamplingMode, rng: &mut R) -> Matrix
where
    F: FiniteSum + ?Sized,
    R: Rng + ?Sized,
{
    let idx = draw(oracle.sample_count(), b.max(1), mode, rng);
    mean_hessian(oracle, idx, x)
}

/// True (keep taking first-order steps) iff `dᵀ(v − x) < −ε/2`.
pub fn stochastic_fosp_test(d: &Vector, v: &Vector, x: &Vector, epsilon: f64) -> bool {
    d.dot(&(v - x)) < -epsilon / 2.0
}

/// Solves `min (u − x)ᵀH(u − x)  s.t. u ∈ C, dᵀ(u − x) ≤ r`.
pub fn solve_inequality_tangent_qp(
    set: &FeasibleSet,
    x_t: &Vector,
    h: &Matrix,
    d: &Vector,
    r: f64,
    backend: &EscapeBackend,
) -> Result<EscapeResult> {
    Error::check_dim(set.dim(), x_t.len())?;
    Error::check_dim(set.dim(), d.len())?;
    check_symmetric(h)?;
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument("slack r must be nonnegative".into()));
    }
    let h = symmetrize(h);
    let (z, solver) = match backend {
        EscapeBackend::Auto if set.len() == 1 => (exact_inequality(set, x_t, &h, d, r)?, SolverTag::ExactTrs),
        EscapeBackend::ExactTrs => (exact_inequality(set, x_t, &h, d, r)?, SolverTag::ExactTrs),
        EscapeBackend::Auto | EscapeBackend::BruteForce => (brute_inequality(set, x_t, &h, d, r)?, SolverTag::BruteForce),
        EscapeBackend::Plugin(_) => {
            return Err(Error::BackendUnsupported(
                "plugins solve the equality-constrained subproblem only".into(),
            ))
        }
    };
    let u = x_t + &z;
    let violation = set.max_violation(&u)?;
    let excess = d.dot(&z) - r;
    if violation > FEASIBILITY_TOL || excess > FEASIBILITY_TOL {
        return Err(Error::Infeasible {
            violation: violation.max(excess),
        });
    }
    Ok(EscapeResult {
        q_value: quad_form(&h, &z),
        u,
        y: z,
        solver,
        rho_used: 1.0,
    })
}

/// Candidate enumeration in whitened coordinates `u = Sw`, `S = Q^{-1/2}`,
/// where the set is the unit ball and the slack constraint is `aᵀw ≤ β`.
fn exact_inequality(set: &FeasibleSet, x: &Vector, h: &Matrix, d: &Vector, r: f64) -> Result<Vector> {
    if set.len() != 1 {
        return Err(Error::BackendUnsupported(format!(
            "exact trust-region backend needs a single ellipsoid, the set has {}",
            set.len()
        )));
    }
    let q = &set.shapes()[0];
    let n = x.len();
    // z = u − x with zᵀQz + 2(Qx)ᵀz + xᵀQx ≤ 1 completes to z = −x + Sw, ‖w‖ ≤ 1
    let wh = whiten(q, &(q * x), quad_form(q, x))?;
    let s = &wh.s;
    let radius = wh.radius2.max(0.0).sqrt();
    let bw = symmetrize(&(s * h * s));
    let hc = h * &wh.center;
    let lin = s * &hc * 2.0;
    let a = s * d;
    let beta = r - d.dot(&wh.center);

    let slack_ok = |w: &Vector| a.dot(w) <= beta + 1e-12 * (1.0 + beta.abs());
    let z_of = |w: &Vector| &wh.center + s * w;

    // z = 0 is always feasible and seeds the comparison
    let mut best = (Vector::zeros(n), 0.0f64);
    let offer = |w: Vector, best: &mut (Vector, f64)| {
        let z = z_of(&w);
        let val = quad_form(h, &z);
        if val < best.1 {
            *best = (z, val);
        }
    };

    let tr = TrustRegion::new(&bw, &lin, radius)?;
    let global = tr.global(Some(&a))?;
    if slack_ok(&global.w) {
        offer(global.w, &mut best);
    } else {
        for cand in tr.local_candidates() {
            if slack_ok(&cand.w) {
                offer(cand.w, &mut best);
            }
        }
        // the slack constraint is active: w = w₀ + Ny on aᵀw = β
        let an = a.norm();
        if an > 0.0 {
            let w0 = &a * (beta / (an * an));
            let rem = radius * radius - w0.norm_squared();
            if rem >= 0.0 {
                let basis = build_tangent_basis(&a, DEFAULT_DEGENERACY_THRESHOLD);
                let nb = &basis.basis;
                let bh = symmetrize(&(nb.transpose() * &bw * nb));
                let lh = nb.tr_mul(&(&bw * &w0 * 2.0 + &lin));
                let sub = TrustRegion::new(&bh, &lh, rem.sqrt())?.global(None)?;
                let w = &w0 + nb * sub.w;
                offer(w, &mut best);
            }
        }
    }
    Ok(best.0)
}

fn brute_inequality(set: &FeasibleSet, x: &Vector, h: &Matrix, d: &Vector, r: f64) -> Result<Vector> {
    let n = x.len();
    let mut pieces = set.pieces_shifted(x);
    pieces.push(Piece::HalfSpace {
        normal: d.clone(),
        offset: r,
    });
    let (z, _) = brute::minimize(h, &Vector::zeros(n), &pieces, &Vector::zeros(n))?;
    Ok(z)
}

/// Settings of one stochastic run.
#[derive(Clone, Debug)]
pub struct StochasticConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub plan: BatchPlan,
    pub mode: SamplingMode,
    pub backend: EscapeBackend,
    /// Defaults to ten times the Markov bound at δ = 0.1.
    pub max_iters: Option<usize>,
}

impl StochasticConfig {
    pub fn new(epsilon: f64, gamma: f64, plan: BatchPlan) -> Self {
        Self {
            epsilon,
            gamma,
            plan,
            mode: SamplingMode::WithReplacement,
            backend: EscapeBackend::Auto,
            max_iters: None,
        }
    }
}

/// Outcome of a stochastic run.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticOutcome {
    pub x_out: Vector,
    pub trace: SolveTrace,
    /// Sampled subproblem value at the returned point.
    pub final_q: f64,
    pub iterations: usize,
}

/// Runs the stochastic method on a finite-sum problem.
pub fn algorithm2_solve(problem: &ProblemSpec, config: &StochasticConfig) -> Result<StochasticOutcome> {
    let oracle = problem
        .oracle
        .finite_sum()
        .ok_or_else(|| Error::InvalidArgument("stochastic solve needs a finite-sum oracle".into()))?;
    if !(config.epsilon > 0.0 && config.gamma > 0.0) {
        return Err(Error::InvalidArgument("epsilon and gamma must be positive".into()));
    }
    let plan = &config.plan;
    let c = &problem.constants;
    let n = oracle.sample_count();
    let rho = plan.rho;
    let eps_h = config.epsilon / 2.0;
    let gamma_h = config.gamma / 2.0;
    let eta = (eps_h / (c.diameter * c.diameter * c.grad_lipschitz)).min(1.0);
    let sigma_raw = rho * gamma_h / (c.hess_lipschitz * c.diameter.powi(3));
    let sigma = sigma_raw.min(1.0);

    let f = problem.objective();
    let mut x = problem.x0.clone();
    let mut fx = f.value(&x);
    let max_iters = config.max_iters.unwrap_or_else(|| {
        problem.f_lower_bound.map_or(DEFAULT_MAX_ITERS, |lb| {
            let b = markov_iteration_bound(c, fx - lb, config.epsilon, config.gamma, rho, 0.1);
            (10.0 * b).ceil().min(usize::MAX as f64 / 2.0) as usize
        })
    });

    // full batches are the deterministic limit: exact means, no sampling
    let grad_mode = if plan.b_g >= n { SamplingMode::WithoutReplacement } else { config.mode };
    let hess_mode = if plan.b_h >= n { SamplingMode::WithoutReplacement } else { config.mode };

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut trace = SolveTrace {
        records: Vec::new(),
        rho_used: rho,
    };
    let mut iter = 0usize;
    loop {
        if iter >= max_iters {
            return Err(Error::IterationLimit {
                limit: max_iters,
                reason: "ten times the Markov iteration bound",
                trace: Box::new(trace),
            });
        }
        let residual = problem.set.max_violation(&x)?.max(0.0);
        let d = sample_gradient(oracle, &x, plan.b_g, grad_mode, &mut rng);
        let v = problem.set.linear_oracle(&d)?;
        if stochastic_fosp_test(&d, &v, &x, config.epsilon) {
            let x_next = &x * (1.0 - eta) + &v * eta;
            let f_next = f.value(&x_next);
            trace.records.push(TraceRecord {
                iter,
                phase: Phase::FirstOrder,
                f: fx,
                gap_or_q: -d.dot(&(&v - &x)),
                decrease: fx - f_next,
                step_param: eta,
                feas_residual: residual,
                sigma_clamped: false,
            });
            x = x_next;
            fx = f_next;
            iter += 1;
            continue;
        }

        let h = sample_hessian(oracle, &x, plan.b_h, hess_mode, &mut rng);
        let res = solve_inequality_tangent_qp(&problem.set, &x, &h, &d, plan.r, &config.backend)?;
        debug!("iter {iter}: sampled subproblem value {:.6e}", res.q_value);
        if res.q_value < -rho * gamma_h {
            let x_next = &x * (1.0 - sigma) + &res.u * sigma;
            let f_next = f.value(&x_next);
            trace.records.push(TraceRecord {
                iter,
                phase: Phase::Escape,
                f: fx,
                gap_or_q: res.q_value,
                decrease: fx - f_next,
                step_param: sigma,
                feas_residual: residual,
                sigma_clamped: sigma_raw > 1.0,
            });
            x = x_next;
            fx = f_next;
            iter += 1;
            continue;
        }

        trace.records.push(TraceRecord {
            iter,
            phase: Phase::Terminate,
            f: fx,
            gap_or_q: res.q_value,
            decrease: 0.0,
            step_param: 0.0,
            feas_residual: residual,
            sigma_clamped: false,
        });
        return Ok(StochasticOutcome {
            x_out: x,
            trace,
            final_q: res.q_value,
            iterations: iter + 1,
        });
    }
}
