//! Run configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default success-rate threshold of the stochastic command.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<StochasticSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// A registry problem by `name`, or an inline quadratic
/// `½xᵀPx + lᵀx + c` over `{x : xᵀQᵢx ≤ 1}`. Matrices are lists of rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hess_lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_lower_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub rho: f64,
    /// `fw` or `pgd`.
    #[serde(default = "default_method")]
    pub method: String,
    /// `auto`, `exact-trs`, `brute-force` or `plugin:<command>`.
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_lower_bound: Option<f64>,
    #[serde(default = "yes")]
    pub record_trace: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            gamma: 0.05,
            rho: 1.0,
            method: default_method(),
            backend: default_backend(),
            max_iters: None,
            f_lower_bound: None,
            record_trace: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    pub epsilon: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub rho: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub batch_scale: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// `with-replacement` or `without-replacement`.
    #[serde(default = "default_sampling")]
    pub sampling: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Accepted range of the slope of log(first-order steps) against log(1/ε).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_order_slope: Option<[f64; 2]>,
    /// Accepted range of the slope of log(escape steps) against log(1/γ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_slope: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_certificate")]
    pub certificate: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            trace: default_trace(),
            certificate: default_certificate(),
            summary: default_summary(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_method() -> String {
    "fw".into()
}

fn default_backend() -> String {
    "auto".into()
}

fn default_threshold() -> f64 {
    DEFAULT_SUCCESS_THRESHOLD
}

fn default_sampling() -> String {
    "with-replacement".into()
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trace() -> String {
    "trace.csv".into()
}

fn default_certificate() -> String {
    "certificate.json".into()
}

fn default_summary() -> String {
    "sweep_summary.csv".into()
}

fn positive(key: &str, name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(key, format!("{name} must be positive (got {v})")))
    }
}

fn unit_interval(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(CliError::config(key, format!("rho must lie in (0, 1] (got {v})")))
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.to_path_buf(), e))?;
        let config = Self::parse(&text)?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Checks values that the TOML schema cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        let inline = p.hessian.is_some() || p.sets.is_some() || p.x0.is_some();
        match (&p.name, inline) {
            (Some(_), true) => {
                return Err(CliError::config(
                    "problem.name",
                    "give either a registry name or an inline problem, not both",
                ))
            }
            (None, false) => return Err(CliError::config("problem.name", "missing problem name or inline problem")),
            (None, true) => {
                for (key, present) in [
                    ("problem.hessian", p.hessian.is_some()),
                    ("problem.sets", p.sets.is_some()),
                    ("problem.x0", p.x0.is_some()),
                ] {
                    if !present {
                        return Err(CliError::config(key, "required for an inline problem"));
                    }
                }
            }
            (Some(_), false) => {}
        }
        let s = &self.solver;
        positive("solver.epsilon", "epsilon", s.epsilon)?;
        positive("solver.gamma", "gamma", s.gamma)?;
        unit_interval("solver.rho", s.rho)?;
        if !matches!(s.method.as_str(), "fw" | "pgd" | "frank-wolfe" | "projected-gradient") {
            return Err(CliError::config(
                "solver.method",
                format!("unknown method `{}` (expected fw or pgd)", s.method),
            ));
        }
        crate::plugin::check_backend_name(&s.backend).map_err(|m| CliError::config("solver.backend", m))?;
        if let Some(st) = &self.stochastic {
            positive("stochastic.epsilon", "epsilon", st.epsilon)?;
            positive("stochastic.gamma", "gamma", st.gamma)?;
            unit_interval("stochastic.rho", st.rho)?;
            positive("stochastic.batch_scale", "batch_scale", st.batch_scale)?;
            if st.seeds.is_empty() {
                return Err(CliError::config("stochastic.seeds", "seed list is empty"));
            }
            if !(0.0..=1.0).contains(&st.threshold) {
                return Err(CliError::config("stochastic.threshold", "threshold must lie in [0, 1]"));
            }
            if !matches!(st.sampling.as_str(), "with-replacement" | "without-replacement") {
                return Err(CliError::config(
                    "stochastic.sampling",
                    format!("unknown sampling `{}`", st.sampling),
                ));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.epsilons.is_empty() {
                return Err(CliError::config("sweep.epsilons", "grid is empty"));
            }
            if sw.gammas.is_empty() {
                return Err(CliError::config("sweep.gammas", "grid is empty"));
            }
            for &e in &sw.epsilons {
                positive("sweep.epsilons", "epsilon", e)?;
            }
            for &g in &sw.gammas {
                positive("sweep.gammas", "gamma", g)?;
            }
        }
        Ok(())
    }
}
