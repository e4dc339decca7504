use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;

use crate::model::oracle::{FiniteSum, Objective};
use crate::model::set::FeasibleSet;
use crate::{Error, Result, Vector, FEASIBILITY_TOL};

/// Smoothness and geometry constants of a problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessConstants {
    /// `L`: Lipschitz constant of the gradient over the set.
    pub grad_lipschitz: f64,
    /// `M`: Lipschitz constant of the Hessian over the set. Quadratic
    /// problems carry a positive surrogate.
    pub hess_lipschitz: f64,
    /// `D`: diameter bound of the set.
    pub diameter: f64,
    /// `K`: bound on `‖∇f‖` over the set.
    pub grad_bound: f64,
    /// `ν²`: bound on the per-sample gradient variance.
    pub grad_variance: Option<f64>,
    /// `ξ²`: bound on the per-sample Hessian variance.
    pub hess_variance: Option<f64>,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_lipschitz > 0.0
            && self.hess_lipschitz > 0.0
            && self.diameter > 0.0
            && self.grad_bound >= 0.0
            && self.grad_variance.map_or(true, |v| v >= 0.0)
            && self.hess_variance.map_or(true, |v| v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "smoothness constants need L, M, D > 0 and K, ν², ξ² >= 0 (got {self:?})"
            )))
        }
    }
}

/// Deterministic or finite-sum oracle.
#[derive(Clone)]
pub enum Oracle {
    Deterministic(Arc<dyn Objective>),
    Stochastic(Arc<dyn FiniteSum>),
}

impl Oracle {
    /// The (mean) objective.
    pub fn objective(&self) -> &dyn Objective {
        match self {
            Oracle::Deterministic(f) => f.as_ref(),
            Oracle::Stochastic(f) => f.as_ref(),
        }
    }

    pub fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        match self {
            Oracle::Deterministic(_) => None,
            Oracle::Stochastic(f) => Some(f.as_ref()),
        }
    }
}

impl core::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Oracle::Deterministic(o) => write!(f, "Deterministic(dim = {})", o.dim()),
            Oracle::Stochastic(o) => write!(
                f,
                "Stochastic(dim = {}, samples = {})",
                o.dim(),
                o.sample_count()
            ),
        }
    }
}

/// `minimize f(x) subject to x ∈ C`, with its constants and a start point.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub name: String,
    pub oracle: Oracle,
    pub set: FeasibleSet,
    pub constants: SmoothnessConstants,
    pub x0: Vector,
    /// Known optimal value or a valid lower bound on it.
    pub f_lower_bound: Option<f64>,
}

impl ProblemSpec {
    pub fn builder(
        name: impl Into<String>,
        oracle: Oracle,
        set: FeasibleSet,
        x0: Vector,
    ) -> ProblemBuilder {
        ProblemBuilder {
            name: name.into(),
            oracle,
            set,
            x0,
            grad_lipschitz: None,
            hess_lipschitz: None,
            diameter: None,
            grad_bound: None,
            grad_variance: None,
            hess_variance: None,
            f_lower_bound: None,
        }
    }

    pub fn objective(&self) -> &dyn Objective {
        self.oracle.objective()
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }
}

#[derive(Clone, Debug)]
pub struct ProblemBuilder {
    name: String,
    oracle: Oracle,
    set: FeasibleSet,
    x0: Vector,
    grad_lipschitz: Option<f64>,
    hess_lipschitz: Option<f64>,
    diameter: Option<f64>,
    grad_bound: Option<f64>,
    grad_variance: Option<f64>,
    hess_variance: Option<f64>,
    f_lower_bound: Option<f64>,
}

impl ProblemBuilder {
    pub fn grad_lipschitz(mut self, l: f64) -> Self {
        self.grad_lipschitz = Some(l);
        self
    }

    pub fn hess_lipschitz(mut self, m: f64) -> Self {
        self.hess_lipschitz = Some(m);
        self
    }

    /// Overrides the diameter computed from the set; must still bound it.
    pub fn diameter(mut self, d: f64) -> Self {
        self.diameter = Some(d);
        self
    }

    pub fn grad_bound(mut self, k: f64) -> Self {
        self.grad_bound = Some(k);
        self
    }

    pub fn variances(mut self, grad: f64, hess: f64) -> Self {
        self.grad_variance = Some(grad);
        self.hess_variance = Some(hess);
        self
    }

    pub fn f_lower_bound(mut self, f: f64) -> Self {
        self.f_lower_bound = Some(f);
        self
    }

    /// Validates the problem. `D` defaults to the set's diameter bound and
    /// `K` to `‖∇f(x₀)‖ + L·D`.
    pub fn build(self) -> Result<ProblemSpec> {
        let d = self.set.dim();
        if d < 2 {
            return Err(Error::InvalidArgument("problem dimension must be >= 2".into()));
        }
        Error::check_dim(d, self.oracle.objective().dim())?;
        Error::check_dim(d, self.x0.len())?;
        let violation = self.set.max_violation(&self.x0)?;
        if violation > FEASIBILITY_TOL {
            return Err(Error::Infeasible { violation });
        }
        let grad_lipschitz = self
            .grad_lipschitz
            .ok_or_else(|| Error::InvalidArgument("gradient Lipschitz constant L is required".into()))?;
        let hess_lipschitz = self
            .hess_lipschitz
            .ok_or_else(|| Error::InvalidArgument("Hessian Lipschitz constant M is required".into()))?;
        let diameter = self.diameter.unwrap_or(self.set.diameter());
        if diameter < self.set.diameter() * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "declared diameter {diameter} is below the set bound {}",
                self.set.diameter()
            )));
        }
        let grad_bound = self.grad_bound.unwrap_or_else(|| {
            self.oracle.objective().gradient(&self.x0).norm() + grad_lipschitz * diameter
        });
        let constants = SmoothnessConstants {
            grad_lipschitz,
            hess_lipschitz,
            diameter,
            grad_bound,
            grad_variance: self.grad_variance,
            hess_variance: self.hess_variance,
        };
        constants.validate()?;
        Ok(ProblemSpec {
            name: self.name,
            oracle: self.oracle,
            set: self.set,
            constants,
            x0: self.x0,
            f_lower_bound: self.f_lower_bound,
        })
    }
}
