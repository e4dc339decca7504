//! Dense-grid minimisation of a small quadratic over convex pieces, used as
//! an independent oracle and as the backend for multi-ellipsoid sets.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;


use crate::linalg::sym_norm;
use crate::model::{project_onto, Piece};
use crate::{Error, Matrix, Result, Vector};

/// Largest supported number of coordinates.
pub(crate) const MAX_DIM: usize = 3;

const GRID_POINTS: [usize; MAX_DIM] = [4001, 401, 81];
const POLISH_STARTS: usize = 6;
const POLISH_ITERS: usize = 3000;

/// Raw constraint used by the grid scan.
enum RawPiece {
    Ellipsoid { q: Vec<f64>, center: Vec<f64>, level: f64 },
    HalfSpace { normal: Vec<f64>, offset: f64 },
}

impl RawPiece {
    fn from_piece(p: &Piece) -> Self {
        match p {
            Piece::Ellipsoid(e) => {
                let q = e.eig.map(|l| l.max(0.0));
                RawPiece::Ellipsoid {
                    q: q.transpose().as_slice().to_vec(),
                    center: e.center.as_slice().to_vec(),
                    level: e.level,
                }
            }
            Piece::HalfSpace { normal, offset } => RawPiece::HalfSpace {
                normal: normal.as_slice().to_vec(),
                offset: *offset,
            },
        }
    }

    fn feasible(&self, y: &[f64], slack: f64) -> bool {
        let k = y.len();
        match self {
            RawPiece::Ellipsoid { q, center, level } => {
                let mut val = 0.0;
                for i in 0..k {
                    let di = y[i] - center[i];
                    for j in 0..k {
                        val += q[i * k + j] * di * (y[j] - center[j]);
                    }
                }
                val <= level + slack
            }
            RawPiece::HalfSpace { normal, offset } => {
                normal.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() <= offset + slack
            }
        }
    }
}

fn objective(b: &[f64], lin: &[f64], y: &[f64]) -> f64 {
    let k = y.len();
    let mut val = 0.0;
    for i in 0..k {
        let mut row = 0.0;
        for j in 0..k {
            row += b[i * k + j] * y[j];
        }
        val += y[i] * row + lin[i] * y[i];
    }
    val
}

/// Corners of a box containing the intersection, taken from the definite
/// ellipsoid pieces.
fn bounding_box(pieces: &[Piece], k: usize) -> Option<(Vector, Vector)> {
    let mut lo = Vector::from_element(k, f64::NEG_INFINITY);
    let mut hi = Vector::from_element(k, f64::INFINITY);
    for p in pieces {
        if let Piece::Ellipsoid(e) = p {
            if e.eig.min() <= 1e-12 * e.eig.max().abs().max(1.0) {
                continue;
            }
            let inv = e.eig.map(|l| 1.0 / l);
            for j in 0..k {
                let h = (e.level.max(0.0) * inv[(j, j)]).sqrt();
                lo[j] = lo[j].max(e.center[j] - h);
                hi[j] = hi[j].min(e.center[j] + h);
            }
        }
    }
    if lo.iter().chain(hi.iter()).all(|v| v.is_finite()) {
        Some((lo, hi))
    } else {
        None
    }
}

/// Minimises `yᵀBy + linᵀy` over the intersection of `pieces`, which must
/// contain `feasible_start`.
///
/// Scans a uniform grid over a bounding box, then polishes the best grid
/// points and the start with projected gradient descent.
pub(crate) fn minimize(
    b: &Matrix,
    lin: &Vector,
    pieces: &[Piece],
    feasible_start: &Vector,
) -> Result<(Vector, f64)> {
    let k = b.nrows();
    if k == 0 {
        return Ok((Vector::zeros(0), 0.0));
    }
    if k > MAX_DIM {
        return Err(Error::BackendUnsupported(alloc::format!(
            "brute force handles at most {MAX_DIM} coordinates, got {k}"
        )));
    }
    let (lo, hi) = bounding_box(pieces, k)
        .ok_or_else(|| Error::BackendUnsupported("brute force needs a bounded region".into()))?;

    let raw: Vec<RawPiece> = pieces.iter().map(RawPiece::from_piece).collect();
    let b_raw: Vec<f64> = b.transpose().as_slice().to_vec();
    let lin_raw = lin.as_slice();

    let n = GRID_POINTS[k - 1];
    let mut best: Vec<(f64, [f64; MAX_DIM])> = Vec::with_capacity(POLISH_STARTS + 1);
    let mut y = [0.0f64; MAX_DIM];
    let total = n.pow(k as u32);
    for flat in 0..total {
        let mut rem = flat;
        for j in 0..k {
            let idx = rem % n;
            rem /= n;
            y[j] = lo[j] + (hi[j] - lo[j]) * idx as f64 / (n - 1) as f64;
        }
        let point = &y[..k];
        if !raw.iter().all(|p| p.feasible(point, 0.0)) {
            continue;
        }
        let val = objective(&b_raw, lin_raw, point);
        if best.len() < POLISH_STARTS || val < best[best.len() - 1].0 {
            let pos = best.partition_point(|(v, _)| *v <= val);
            best.insert(pos, (val, y));
            best.truncate(POLISH_STARTS);
        }
    }

    let mut starts: Vec<Vector> = best
        .iter()
        .map(|(_, p)| Vector::from_column_slice(&p[..k]))
        .collect();
    starts.push(feasible_start.clone());

    let lip = 2.0 * sym_norm(b)?;
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let scale = (&hi - &lo).amax().max(1e-300);
    let mut winner = (feasible_start.clone(), objective(&b_raw, lin_raw, feasible_start.as_slice()));
    for start in starts {
        let y = polish(b, lin, pieces, start, step, scale)?;
        let val = objective(&b_raw, lin_raw, y.as_slice());
        if val < winner.1 {
            winner = (y, val);
        }
    }
    Ok(winner)
}

fn polish(b: &Matrix, lin: &Vector, pieces: &[Piece], mut y: Vector, step: f64, scale: f64) -> Result<Vector> {
    let mut value = y.dot(&(b * &y)) + lin.dot(&y);
    for _ in 0..POLISH_ITERS {
        let grad = b * &y * 2.0 + lin;
        let next = project_onto(pieces, &(&y - grad * step), scale)?;
        let next_value = next.dot(&(b * &next)) + lin.dot(&next);
        if next_value > value {
            break;
        }
        let moved = (&next - &y).norm();
        y = next;
        value = next_value;
        if moved <= 1e-13 * scale {
            break;
        }
    }
    Ok(y)
}
