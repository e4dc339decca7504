//! The outer loop: first-order steps until ε-stationarity, escape steps
//! while the tangent subproblem shows curvature below `−ργ`, and a
//! certificate on termination.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use log::{debug, info, warn};

use crate::escape::{
    check_curvature_condition, escape_decrease_bound, escape_step, reduce_subproblem, solve_tangent_qp,
    EscapeBackend,
};
use crate::first_order::{
    fw_decrease_bound, fw_gap, fw_step_towards, pgd_decrease_bound, pgd_step, pgd_threshold,
    FirstOrderMethod,
};
use crate::model::{ProblemSpec, SmoothnessConstants};
use crate::{Error, Result, Vector, FEASIBILITY_TOL};

/// Guard on the number of records when no explicit limit is configured.
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

/// An escape decrease below this ends the run without certification.
pub const STALL_DECREASE: f64 = 1e-15;

/// Absolute slack on the per-step decrease inequalities.
pub const DECREASE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub rho: f64,
    pub method: FirstOrderMethod,
    pub backend: EscapeBackend,
    pub max_iters: Option<usize>,
    /// Overrides the problem's lower bound for the iteration accounting.
    pub f_lower_bound: Option<f64>,
    pub record_trace: bool,
}

impl SolveConfig {
    pub fn new(epsilon: f64, gamma: f64) -> Self {
        Self {
            epsilon,
            gamma,
            rho: 1.0,
            method: FirstOrderMethod::FrankWolfe,
            backend: EscapeBackend::Auto,
            max_iters: None,
            f_lower_bound: None,
            record_trace: true,
        }
    }

    pub fn with_method(mut self, method: FirstOrderMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_backend(mut self, backend: EscapeBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidArgument("rho must lie in (0, 1]".into()));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    FirstOrder,
    Escape,
    Terminate,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::FirstOrder => "first-order",
            Phase::Escape => "escape",
            Phase::Terminate => "terminate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "first-order" => Some(Phase::FirstOrder),
            "escape" => Some(Phase::Escape),
            "terminate" => Some(Phase::Terminate),
            _ => None,
        }
    }
}

/// What happened at one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub phase: Phase,
    /// Objective at the iterate (exact mean objective for finite sums).
    pub f: f64,
    /// Frank-Wolfe gap for Frank-Wolfe steps, displacement `‖x − x⁺‖` for
    /// projected-gradient steps, subproblem value for escape and terminal
    /// records.
    pub gap_or_q: f64,
    /// `f(xₜ) − f(xₜ₊₁)`; zero on the terminal record.
    pub decrease: f64,
    /// `η` or `σ` actually used; zero on the terminal record.
    pub step_param: f64,
    /// `max(0, maxᵢ xᵀQᵢx − 1)` at the iterate.
    pub feas_residual: f64,
    /// The step size formula exceeded 1 and was clamped.
    pub sigma_clamped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    /// Approximation factor behind the escape threshold.
    pub rho_used: f64,
}

/// Measured stationarity at the returned point.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub x_out: Vector,
    pub fosp_gap: f64,
    /// Lower bound on the tangent subproblem optimum.
    pub tangent_curvature: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub rho_used: f64,
    pub is_sosp: bool,
    /// Iterates visited, the returned one included; equals the number of
    /// trace records when the trace is kept.
    pub iterations: usize,
    /// Seconds; filled in by callers that have a clock.
    pub wall_time: Option<f64>,
    pub diagnostic: Option<String>,
}

/// `(f(x₀) − f*) · max{first-order rate, 3M²D⁶/(ρ³γ³)}`, rounded up.
pub fn theorem_iteration_bound(
    method: FirstOrderMethod,
    c: &SmoothnessConstants,
    epsilon: f64,
    gamma: f64,
    rho: f64,
    f_gap: f64,
) -> usize {
    let first = match method {
        FirstOrderMethod::FrankWolfe => 1.0 / fw_decrease_bound(c, epsilon),
        FirstOrderMethod::ProjectedGradient => 1.0 / pgd_decrease_bound(c, epsilon),
    };
    let escape = 1.0 / escape_decrease_bound(c, rho, gamma);
    (f_gap.max(0.0) * first.max(escape) * (1.0 - 1e-12)).ceil() as usize
}

fn feas_residual(problem: &ProblemSpec, x: &Vector) -> Result<f64> {
    Ok(problem.set.max_violation(x)?.max(0.0))
}

/// Runs the two-phase method from `problem.x0`.
pub fn solve(problem: &ProblemSpec, config: &SolveConfig) -> Result<(Certificate, SolveTrace)> {
    config.validate()?;
    let f = problem.objective();
    let c = &problem.constants;
    let eps = config.epsilon;
    let gamma = config.gamma;
    let max_iters = config.max_iters.unwrap_or(DEFAULT_MAX_ITERS);

    // a plugin replaces this with its declared factor on first use
    let mut rho = config.rho;

    let mut x = problem.x0.clone();
    let mut fx = f.value(&x);
    let f_lb = config.f_lower_bound.or(problem.f_lower_bound);
    let mut bound: Option<usize> =
        f_lb.map(|lb| theorem_iteration_bound(config.method, c, eps, gamma, rho, fx - lb));
    let mut counted = 0usize;
    let mut trace = SolveTrace {
        records: Vec::new(),
        rho_used: rho,
    };
    let mut checked_condition = false;

    let record = |trace: &mut SolveTrace, r: TraceRecord| {
        if config.record_trace || r.phase == Phase::Terminate {
            trace.records.push(r);
        }
    };

    let mut iter = 0usize;
    loop {
        if iter >= max_iters {
            return Err(Error::IterationLimit {
                limit: max_iters,
                reason: "configured iteration cap",
                trace: Box::new(trace),
            });
        }
        if let Some(b) = bound {
            if counted > b {
                return Err(Error::IterationLimit {
                    limit: b,
                    reason: "theoretical iteration bound",
                    trace: Box::new(trace),
                });
            }
        }
        let residual = feas_residual(problem, &x)?;
        if residual > FEASIBILITY_TOL {
            return Err(Error::Infeasible { violation: residual });
        }

        // first-order phase
        let fo = match config.method {
            FirstOrderMethod::FrankWolfe => {
                let g = fw_gap(problem, &x)?;
                if g.gap > eps {
                    let step = fw_step_towards(c, &x, g.v, g.gap, eps);
                    Some((step.x_next, g.gap, step.eta, step.clamped))
                } else {
                    None
                }
            }
            FirstOrderMethod::ProjectedGradient => {
                let step = pgd_step(problem, &x)?;
                if step.displacement > pgd_threshold(c, eps) {
                    Some((step.x_next, step.displacement, 1.0 / c.grad_lipschitz, false))
                } else {
                    None
                }
            }
        };
        if let Some((x_next, gap, eta, clamped)) = fo {
            let f_next = f.value(&x_next);
            record(
                &mut trace,
                TraceRecord {
                    iter,
                    phase: Phase::FirstOrder,
                    f: fx,
                    gap_or_q: gap,
                    decrease: fx - f_next,
                    step_param: eta,
                    feas_residual: residual,
                    sigma_clamped: clamped,
                },
            );
            if !clamped {
                counted += 1;
            }
            x = x_next;
            fx = f_next;
            iter += 1;
            continue;
        }

        // escape phase
        let qp = reduce_subproblem(problem, &x)?;
        let res = solve_tangent_qp(&qp, &config.backend)?;
        if res.rho_used != rho && matches!(config.backend, EscapeBackend::Plugin(_)) {
            rho = res.rho_used;
            trace.rho_used = rho;
            bound = f_lb.map(|lb| {
                theorem_iteration_bound(config.method, c, eps, gamma, rho, f.value(&problem.x0) - lb)
            });
        }
        if !checked_condition && rho < 1.0 {
            check_curvature_condition(problem, rho);
            checked_condition = true;
        }
        debug!("iter {iter}: tangent value {:.6e} via {}", res.q_value, res.solver.name());

        if res.q_value < -rho * gamma {
            let step = escape_step(problem, &x, &res, gamma, rho)?;
            let f_next = f.value(&step.x_next);
            let decrease = fx - f_next;
            if decrease < STALL_DECREASE {
                warn!("escape step at iter {iter} decreased f by only {decrease:e}; stopping");
                let cert = terminal_certificate(
                    problem,
                    config,
                    &x,
                    res.curvature_bound(),
                    rho,
                    Some(format!(
                        "escape candidate with q = {:.6e} failed to decrease f ({decrease:e})",
                        res.q_value
                    )),
                    false,
                )?;
                return Ok(finish(trace, cert, iter, fx, res.q_value, residual, record));
            }
            record(
                &mut trace,
                TraceRecord {
                    iter,
                    phase: Phase::Escape,
                    f: fx,
                    gap_or_q: res.q_value,
                    decrease,
                    step_param: step.sigma,
                    feas_residual: residual,
                    sigma_clamped: step.clamped,
                },
            );
            if !step.clamped {
                counted += 1;
            }
            x = step.x_next;
            fx = f_next;
            iter += 1;
            continue;
        }

        let cert = terminal_certificate(problem, config, &x, res.curvature_bound(), rho, None, true)?;
        info!(
            "terminated after {} iterations: f = {fx:.6e}, gap = {:.3e}, curvature = {:.3e}",
            iter + 1,
            cert.fosp_gap,
            cert.tangent_curvature
        );
        return Ok(finish(trace, cert, iter, fx, res.q_value, residual, record));
    }
}

fn terminal_certificate(
    problem: &ProblemSpec,
    config: &SolveConfig,
    x: &Vector,
    curvature: f64,
    rho: f64,
    diagnostic: Option<String>,
    may_certify: bool,
) -> Result<Certificate> {
    let gap = fw_gap(problem, x)?.gap;
    Ok(Certificate {
        x_out: x.clone(),
        fosp_gap: gap,
        tangent_curvature: curvature,
        epsilon: config.epsilon,
        gamma: config.gamma,
        rho_used: rho,
        is_sosp: may_certify && gap <= config.epsilon && curvature >= -config.gamma,
        iterations: 0,
        wall_time: None,
        diagnostic,
    })
}

fn finish(
    mut trace: SolveTrace,
    mut cert: Certificate,
    iter: usize,
    fx: f64,
    q: f64,
    residual: f64,
    record: impl Fn(&mut SolveTrace, TraceRecord),
) -> (Certificate, SolveTrace) {
    record(
        &mut trace,
        TraceRecord {
            iter,
            phase: Phase::Terminate,
            f: fx,
            gap_or_q: q,
            decrease: 0.0,
            step_param: 0.0,
            feas_residual: residual,
            sigma_clamped: false,
        },
    );
    cert.iterations = iter + 1;
    (cert, trace)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub iter: usize,
    pub what: &'static str,
    pub observed: f64,
    pub required: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
    /// Iterations with a clamped step, exempt from the decrease bounds.
    pub outside_theory: Vec<usize>,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks the per-step decrease guarantees, monotonicity, decrease
/// bookkeeping and feasibility of a recorded trace.
pub fn verify_trace(trace: &SolveTrace, problem: &ProblemSpec, config: &SolveConfig) -> TraceReport {
    let c = &problem.constants;
    let eps = config.epsilon;
    let rho = if trace.rho_used > 0.0 { trace.rho_used } else { config.rho };
    let mut report = TraceReport::default();
    let fail = |report: &mut TraceReport, iter, what, observed, required| {
        report.violations.push(Violation {
            iter,
            what,
            observed,
            required,
        })
    };
    for (k, r) in trace.records.iter().enumerate() {
        report.checked += 1;
        if r.feas_residual > FEASIBILITY_TOL {
            fail(&mut report, r.iter, "feasibility", r.feas_residual, FEASIBILITY_TOL);
        }
        if let Some(next) = trace.records.get(k + 1) {
            let diff = r.f - next.f;
            if (diff - r.decrease).abs() > DECREASE_SLACK * r.f.abs().max(1.0) {
                fail(&mut report, r.iter, "decrease bookkeeping", r.decrease, diff);
            }
        }
        match r.phase {
            Phase::Terminate => {}
            _ if r.sigma_clamped => report.outside_theory.push(r.iter),
            Phase::FirstOrder => match config.method {
                FirstOrderMethod::FrankWolfe => {
                    let need = fw_decrease_bound(c, eps);
                    if r.decrease < need - DECREASE_SLACK {
                        fail(&mut report, r.iter, "Frank-Wolfe decrease", r.decrease, need);
                    }
                }
                FirstOrderMethod::ProjectedGradient => {
                    if r.gap_or_q > pgd_threshold(c, eps) {
                        let need = pgd_decrease_bound(c, eps);
                        if r.decrease < need - DECREASE_SLACK {
                            fail(&mut report, r.iter, "projected-gradient decrease", r.decrease, need);
                        }
                    }
                }
            },
            Phase::Escape => {
                let need = escape_decrease_bound(c, rho, config.gamma);
                if r.decrease < need - DECREASE_SLACK {
                    fail(&mut report, r.iter, "escape decrease", r.decrease, need);
                }
            }
        }
        if r.phase != Phase::Terminate && !r.sigma_clamped && r.decrease < 0.0 {
            fail(&mut report, r.iter, "monotonicity", r.decrease, 0.0);
        }
    }
    report
}
