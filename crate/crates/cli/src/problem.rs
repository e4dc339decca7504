//! Builds problems from the `[problem]` section.

use std::sync::Arc;

use saddle_escape_core::linalg::sym_eig;
use saddle_escape_core::model::{registry_get, FeasibleSet, Oracle, ProblemSpec, Quadratic};
use saddle_escape_core::{Matrix, Vector};

use crate::config::ProblemSection;
use crate::CliError;

/// Hessian Lipschitz surrogate used for inline quadratics without one.
pub const INLINE_HESS_LIPSCHITZ: f64 = 1.0;

fn matrix(key: &str, rows: &[Vec<f64>], dim: usize) -> Result<Matrix, CliError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::config(key, format!("expected a {dim}x{dim} matrix")));
    }
    Ok(Matrix::from_row_iterator(dim, dim, rows.iter().flatten().copied()))
}

fn vector(key: &str, values: &[f64], dim: usize) -> Result<Vector, CliError> {
    if values.len() != dim {
        return Err(CliError::config(key, format!("expected {dim} entries, found {}", values.len())));
    }
    Ok(Vector::from_column_slice(values))
}

fn keyed<T>(key: &str, r: saddle_escape_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::config(key, e.to_string()))
}

/// Looks up a registry problem or assembles an inline quadratic.
pub fn build_problem(section: &ProblemSection) -> Result<ProblemSpec, CliError> {
    if let Some(name) = &section.name {
        let mut spec = keyed("problem.name", registry_get(name))?;
        if let Some(lb) = section.f_lower_bound {
            spec.f_lower_bound = Some(lb);
        }
        return Ok(spec);
    }
    let hessian = section
        .hessian
        .as_ref()
        .ok_or_else(|| CliError::config("problem.hessian", "required for an inline problem"))?;
    let dim = hessian.len();
    let p = matrix("problem.hessian", hessian, dim)?;
    let linear = match &section.linear {
        Some(l) => vector("problem.linear", l, dim)?,
        None => Vector::zeros(dim),
    };
    let mut shapes = Vec::new();
    for (i, q) in section.sets.as_deref().unwrap_or_default().iter().enumerate() {
        shapes.push(matrix(&format!("problem.sets[{i}]"), q, dim)?);
    }
    let set = keyed("problem.sets", FeasibleSet::new(shapes))?;
    let x0 = vector(
        "problem.x0",
        section
            .x0
            .as_deref()
            .ok_or_else(|| CliError::config("problem.x0", "required for an inline problem"))?,
        dim,
    )?;
    let grad_lipschitz = match section.grad_lipschitz {
        Some(l) => l,
        None => {
            let eig = keyed("problem.hessian", sym_eig(&p))?;
            // a zero Hessian still needs a positive constant
            eig.max().abs().max(eig.min().abs()).max(f64::MIN_POSITIVE)
        }
    };
    let f = Quadratic::new(p, linear, section.constant.unwrap_or(0.0));
    let mut builder = ProblemSpec::builder("inline", Oracle::Deterministic(Arc::new(f)), set, x0)
        .grad_lipschitz(grad_lipschitz)
        .hess_lipschitz(section.hess_lipschitz.unwrap_or(INLINE_HESS_LIPSCHITZ));
    if let Some(k) = section.grad_bound {
        builder = builder.grad_bound(k);
    }
    if let Some(d) = section.diameter {
        builder = builder.diameter(d);
    }
    if let Some(lb) = section.f_lower_bound {
        builder = builder.f_lower_bound(lb);
    }
    keyed("problem", builder.build())
}
