//! Trace CSV, certificate records and summary files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use saddle_escape_core::driver::{Certificate, Phase, SolveTrace, TraceRecord};
use saddle_escape_core::stochastic::BatchPlan;

use crate::CliError;

/// Trace CSV header.
pub const TRACE_COLUMNS: [&str; 8] = [
    "iter",
    "phase",
    "f",
    "gap_or_q",
    "decrease",
    "step_param",
    "feas_residual",
    "sigma_clamped",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path.to_path_buf(), e)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path.to_path_buf(), std::io::Error::other(e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_trace(path: &Path, trace: &SolveTrace) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TRACE_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            r.phase.name().to_string(),
            fmt_f64(r.f),
            fmt_f64(r.gap_or_q),
            fmt_f64(r.decrease),
            fmt_f64(r.step_param),
            fmt_f64(r.feas_residual),
            r.sigma_clamped.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn field<T: std::str::FromStr>(path: &Path, row: &csv::StringRecord, i: usize) -> Result<T, CliError> {
    let raw = row.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        CliError::Parse(format!(
            "{}: bad `{}` value `{raw}` in row {}",
            path.display(),
            TRACE_COLUMNS[i],
            row.position().map_or(0, |p| p.line())
        ))
    })
}

/// Reads a trace written by [`write_trace`]. `rho_used` is not stored in the
/// CSV and comes back as 1.
pub fn read_trace(path: &Path) -> Result<SolveTrace, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(CliError::Parse(format!("{}: unexpected trace header", path.display())));
    }
    let mut records = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let phase_name = row.get(1).unwrap_or("");
        let phase = Phase::from_name(phase_name)
            .ok_or_else(|| CliError::Parse(format!("{}: unknown phase `{phase_name}`", path.display())))?;
        records.push(TraceRecord {
            iter: field(path, &row, 0)?,
            phase,
            f: field(path, &row, 2)?,
            gap_or_q: field(path, &row, 3)?,
            decrease: field(path, &row, 4)?,
            step_param: field(path, &row, 5)?,
            feas_residual: field(path, &row, 6)?,
            sigma_clamped: field(path, &row, 7)?,
        });
    }
    Ok(SolveTrace { records, rho_used: 1.0 })
}

/// Batch plan as stored in certificate records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub b_g: usize,
    pub b_h: usize,
    pub r: f64,
    pub rho: f64,
    pub scale: f64,
    pub capped: bool,
    pub outside_theory: bool,
}

impl From<&BatchPlan> for PlanRecord {
    fn from(p: &BatchPlan) -> Self {
        Self {
            b_g: p.b_g,
            b_h: p.b_h,
            r: p.r,
            rho: p.rho,
            scale: p.scale,
            capped: p.capped,
            outside_theory: p.outside_theory,
        }
    }
}

/// Structured record of one run's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub problem: String,
    pub method: String,
    pub backend: String,
    /// `certified`, `not-certified` or `iteration-limit`.
    pub status: String,
    pub is_sosp: bool,
    pub epsilon: f64,
    pub gamma: f64,
    pub rho_used: f64,
    pub x_out: Vec<f64>,
    pub f_out: f64,
    /// Absent when the run stopped at the iteration limit.
    pub fosp_gap: Option<f64>,
    pub tangent_curvature: Option<f64>,
    pub iterations: usize,
    pub first_order_steps: usize,
    pub escape_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRecord>,
    pub outside_theory: bool,
}

/// Step counts by phase.
pub fn phase_counts(trace: &SolveTrace) -> (usize, usize) {
    trace.records.iter().fold((0, 0), |(fo, es), r| match r.phase {
        Phase::FirstOrder => (fo + 1, es),
        Phase::Escape => (fo, es + 1),
        Phase::Terminate => (fo, es),
    })
}

impl CertificateRecord {
    pub fn new(problem: &str, method: &str, backend: &str, cert: &Certificate, f_out: f64, trace: &SolveTrace) -> Self {
        let (first_order_steps, escape_steps) = phase_counts(trace);
        Self {
            problem: problem.to_string(),
            method: method.to_string(),
            backend: backend.to_string(),
            status: if cert.is_sosp { "certified" } else { "not-certified" }.to_string(),
            is_sosp: cert.is_sosp,
            epsilon: cert.epsilon,
            gamma: cert.gamma,
            rho_used: cert.rho_used,
            x_out: cert.x_out.iter().copied().collect(),
            f_out,
            fosp_gap: Some(cert.fosp_gap),
            tangent_curvature: Some(cert.tangent_curvature),
            iterations: cert.iterations,
            first_order_steps,
            escape_steps,
            iteration_bound: None,
            wall_time: cert.wall_time,
            diagnostic: cert.diagnostic.clone(),
            seed: None,
            plan: None,
            outside_theory: false,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path.to_path_buf(), e.into()))?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// One row of `sweep_summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: String,
    pub epsilon: f64,
    pub gamma: f64,
    pub status: String,
    pub is_sosp: bool,
    pub iterations: usize,
    pub first_order_steps: usize,
    pub escape_steps: usize,
    pub f_out: f64,
    pub fosp_gap: f64,
    pub tangent_curvature: f64,
}

pub fn write_sweep_summary(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "cell",
        "epsilon",
        "gamma",
        "status",
        "is_sosp",
        "iterations",
        "first_order_steps",
        "escape_steps",
        "f_out",
        "fosp_gap",
        "tangent_curvature",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.cell.clone(),
            fmt_f64(r.epsilon),
            fmt_f64(r.gamma),
            r.status.clone(),
            r.is_sosp.to_string(),
            r.iterations.to_string(),
            r.first_order_steps.to_string(),
            r.escape_steps.to_string(),
            fmt_f64(r.f_out),
            fmt_f64(r.fosp_gap),
            fmt_f64(r.tangent_curvature),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_sweep_summary(path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}
