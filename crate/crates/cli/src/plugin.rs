//! External tangent-subproblem solvers run as child processes.
//!
//! The request is one JSON object on the child's stdin; the answer is one
//! JSON object `{"y": [...], "rho": r}` on its stdout.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use saddle_escape_core::escape::{solve_tangent_qp, EscapeBackend, PluginAnswer, QpPlugin, TangentQP};
use saddle_escape_core::linalg::TangentBasis;
use saddle_escape_core::{Error, Matrix, Vector};

use crate::CliError;

const PLUGIN_PREFIX: &str = "plugin:";

/// Dense matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for DenseMatrix {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

impl DenseMatrix {
    pub fn to_matrix(&self) -> Result<Matrix, String> {
        if self.data.len() != self.rows * self.cols {
            return Err(format!(
                "matrix data has {} entries, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            ));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Serialized tangent subproblem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginRequest {
    pub b: DenseMatrix,
    pub s: Vec<f64>,
    pub c: f64,
    pub qs: Vec<DenseMatrix>,
    pub offsets: Vec<Vec<f64>>,
    pub kappas: Vec<f64>,
    pub basis: DenseMatrix,
    pub g_norm: f64,
    pub degenerate: bool,
    pub x_t: Vec<f64>,
    pub hessian: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginResponse {
    pub y: Vec<f64>,
    pub rho: f64,
}

impl PluginRequest {
    pub fn from_qp(qp: &TangentQP) -> Self {
        Self {
            b: (&qp.b).into(),
            s: qp.s.iter().copied().collect(),
            c: qp.c,
            qs: qp.qs.iter().map(DenseMatrix::from).collect(),
            offsets: qp.offsets.iter().map(|o| o.iter().copied().collect()).collect(),
            kappas: qp.kappas.clone(),
            basis: (&qp.basis.basis).into(),
            g_norm: qp.basis.g_norm,
            degenerate: qp.basis.degenerate,
            x_t: qp.x_t.iter().copied().collect(),
            hessian: (&qp.hessian).into(),
        }
    }

    pub fn to_qp(&self) -> Result<TangentQP, String> {
        let b = self.b.to_matrix()?;
        let k = b.nrows();
        if b.ncols() != k || self.s.len() != k {
            return Err("inconsistent tangent dimensions".into());
        }
        let qs = self.qs.iter().map(DenseMatrix::to_matrix).collect::<Result<Vec<_>, _>>()?;
        if qs.len() != self.offsets.len() || qs.len() != self.kappas.len() {
            return Err("qs, offsets and kappas differ in length".into());
        }
        if qs.iter().any(|q| q.nrows() != k || q.ncols() != k) || self.offsets.iter().any(|o| o.len() != k) {
            return Err("constraint blocks do not match the tangent dimension".into());
        }
        let basis = self.basis.to_matrix()?;
        let hessian = self.hessian.to_matrix()?;
        let d = self.x_t.len();
        if basis.nrows() != d || basis.ncols() != k || hessian.nrows() != d || hessian.ncols() != d {
            return Err("basis or hessian does not match the ambient dimension".into());
        }
        Ok(TangentQP {
            b,
            s: Vector::from_column_slice(&self.s),
            c: self.c,
            qs,
            offsets: self.offsets.iter().map(|o| Vector::from_column_slice(o)).collect(),
            kappas: self.kappas.clone(),
            basis: TangentBasis {
                basis,
                g_norm: self.g_norm,
                degenerate: self.degenerate,
            },
            x_t: Vector::from_column_slice(&self.x_t),
            hessian,
            rho: 1.0,
        })
    }
}

/// Runs a command per subproblem.
#[derive(Clone, Debug)]
pub struct ProcessPlugin {
    command: String,
}

impl ProcessPlugin {
    pub fn new(command: impl Into<String>) -> Result<Self, String> {
        let command = command.into();
        if command.split_whitespace().next().is_none() {
            return Err("plugin command is empty".into());
        }
        Ok(Self { command })
    }

    fn exchange(&self, request: &str) -> Result<String, String> {
        let mut parts = self.command.split_whitespace();
        let program = parts.next().unwrap_or_default();
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", self.command))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(request.as_bytes())
                .map_err(|e| format!("cannot write request: {e}"))?;
        }
        let mut out = String::new();
        if let Some(mut stdout) = child.stdout.take() {
            stdout
                .read_to_string(&mut out)
                .map_err(|e| format!("cannot read answer: {e}"))?;
        }
        let status = child.wait().map_err(|e| format!("plugin did not finish: {e}"))?;
        if !status.success() {
            return Err(format!("`{}` exited with {status}", self.command));
        }
        Ok(out)
    }
}

impl QpPlugin for ProcessPlugin {
    fn name(&self) -> &str {
        &self.command
    }

    fn solve(&self, qp: &TangentQP) -> saddle_escape_core::Result<PluginAnswer> {
        let request = serde_json::to_string(&PluginRequest::from_qp(qp))
            .map_err(|e| Error::PluginContract(format!("cannot encode request: {e}")))?;
        let answer = self.exchange(&request).map_err(Error::PluginContract)?;
        let response: PluginResponse = serde_json::from_str(answer.trim())
            .map_err(|e| Error::PluginContract(format!("malformed answer: {e}")))?;
        Ok(PluginAnswer {
            y: Vector::from_column_slice(&response.y),
            rho: response.rho,
        })
    }
}

/// Validates a backend name without starting anything.
pub fn check_backend_name(name: &str) -> Result<(), String> {
    parse_backend(name).map(|_| ())
}

/// `auto`, `exact-trs`, `brute-force` or `plugin:<command>`.
pub fn parse_backend(name: &str) -> Result<EscapeBackend, String> {
    if let Some(cmd) = name.strip_prefix(PLUGIN_PREFIX) {
        return Ok(EscapeBackend::Plugin(Arc::new(ProcessPlugin::new(cmd)?)));
    }
    EscapeBackend::from_name(name).map_err(|e| match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    })
}

/// Answers one request from `input` with the exact solver, scaled by
/// `shrink` and declared with factor `rho`.
pub fn serve(input: &str, rho: f64, shrink: f64) -> Result<String, CliError> {
    let request: PluginRequest =
        serde_json::from_str(input).map_err(|e| CliError::Parse(format!("plugin request: {e}")))?;
    let qp = request.to_qp().map_err(|m| CliError::Parse(format!("plugin request: {m}")))?;
    let result = solve_tangent_qp(&qp, &EscapeBackend::Auto)?;
    let response = PluginResponse {
        y: result.y.iter().map(|v| v * shrink).collect(),
        rho,
    };
    serde_json::to_string(&response).map_err(|e| CliError::Parse(e.to_string()))
}
