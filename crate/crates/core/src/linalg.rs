//! Dense linear algebra the solvers rely on: orthonormal tangent bases,
//! symmetric eigendecomposition and a few symmetric-matrix helpers.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;


use crate::{Error, Matrix, Result, Vector};

/// Default threshold below which a gradient is treated as zero.
pub const DEFAULT_DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Cap on the Jacobi sweeps that polish the eigendecomposition.
const JACOBI_SWEEPS: usize = 8;

const SYMMETRY_TOL: f64 = 1e-10;

/// Orthonormal basis of the hyperplane `{z : gᵀz = 0}`.
///
/// When `g` is (numerically) zero the hyperplane is all of ℝᵈ; `basis` is
/// then the identity and `degenerate` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentBasis {
    /// `d × (d-1)` matrix with orthonormal columns, or `d × d` identity when
    /// degenerate.
    pub basis: Matrix,
    pub g_norm: f64,
    pub degenerate: bool,
}

impl TangentBasis {
    /// Number of tangent coordinates.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Maps tangent coordinates to an ambient displacement.
    pub fn lift(&self, y: &Vector) -> Vector {
        &self.basis * y
    }
}

/// Builds an orthonormal basis of the orthogonal complement of `g` with
/// modified Gram-Schmidt (two passes).
///
/// Coordinate vectors are fed to the orthogonalisation in order of increasing
/// alignment with `g`, which keeps every accepted residual well away from
/// zero.
pub fn build_tangent_basis(g: &Vector, degeneracy_threshold: f64) -> TangentBasis {
    let d = g.len();
    let g_norm = g.norm();
    if !(g_norm > degeneracy_threshold) {
        return TangentBasis {
            basis: Matrix::identity(d, d),
            g_norm,
            degenerate: true,
        };
    }

    let unit = g / g_norm;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        unit[a]
            .abs()
            .partial_cmp(&unit[b].abs())
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut accepted: Vec<Vector> = Vec::with_capacity(d);
    accepted.push(unit);
    for j in order {
        if accepted.len() == d {
            break;
        }
        let mut v = Vector::zeros(d);
        v[j] = 1.0;
        for _ in 0..2 {
            for q in &accepted {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            accepted.push(v / n);
        }
    }

    let columns: Vec<Vector> = accepted.into_iter().skip(1).collect();
    TangentBasis {
        basis: Matrix::from_columns(&columns),
        g_norm,
        degenerate: false,
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub values: Vector,
    /// Orthonormal eigenvectors, column `i` pairs with `values[i]`. Each
    /// column is signed so that its largest-magnitude entry is positive.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Reassembles `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let scaled = Vector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l)));
        &self.vectors * Matrix::from_diagonal(&scaled) * self.vectors.transpose()
    }
}

/// Largest absolute entry of `S - Sᵀ`.
pub fn asymmetry(s: &Matrix) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst
}

/// `(S + Sᵀ) / 2`.
pub fn symmetrize(s: &Matrix) -> Matrix {
    (s + s.transpose()) * 0.5
}

/// Errors unless `s` is square and symmetric to `1e-10` relative to its
/// largest entry.
pub fn check_symmetric(s: &Matrix) -> Result<()> {
    Error::check_dim(s.nrows(), s.ncols())?;
    let scale = s.amax().max(1.0);
    let asym = asymmetry(s);
    if asym > SYMMETRY_TOL * scale || !asym.is_finite() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Symmetric eigendecomposition with eigenvalues ascending.
pub fn sym_eig(s: &Matrix) -> Result<SymEig> {
    check_symmetric(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: Vector::zeros(0),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let sym = symmetrize(s);
    let eig = sym.clone().symmetric_eigen();
    let (raw_values, raw_vectors) = jacobi_polish(&sym, eig.eigenvectors);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        raw_values[a]
            .partial_cmp(&raw_values[b])
            .unwrap_or(core::cmp::Ordering::Equal)
    });

    let values = Vector::from_iterator(n, order.iter().map(|&i| raw_values[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = raw_vectors.column(i).into_owned();
        let mut lead = 0;
        for r in 1..n {
            if col[r].abs() > col[lead].abs() + 1e-12 {
                lead = r;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
    }
    Ok(SymEig { values, vectors })
}

/// Cyclic Jacobi sweeps on `VᵀSV` until its off-diagonal part is at
/// rounding level. Returns the diagonal and the rotated `V`.
fn jacobi_polish(s: &Matrix, mut v: Matrix) -> (Vector, Matrix) {
    let n = s.nrows();
    let mut a = v.transpose() * s * &v;
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_SWEEPS {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= f64::EPSILON * scale * 1e-2 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(s: &Matrix) -> Result<f64> {
    if s.nrows() == 0 {
        return Ok(0.0);
    }
    let e = sym_eig(s)?;
    Ok(e.min().abs().max(e.max().abs()))
}

/// `xᵀ S y`.
pub fn bilinear(x: &Vector, s: &Matrix, y: &Vector) -> f64 {
    x.dot(&(s * y))
}

/// `xᵀ S x`.
pub fn quad_form(s: &Matrix, x: &Vector) -> f64 {
    bilinear(x, s, x)
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
pub(crate) fn psd_pinv(e: &SymEig) -> Matrix {
    let cutoff = 1e-12 * e.max().abs().max(1.0);
    e.map(|l| if l > cutoff { 1.0 / l } else { 0.0 })
}

/// `S^{-1/2}` of a symmetric positive definite matrix.
pub(crate) fn spd_inv_sqrt(e: &SymEig) -> Matrix {
    e.map(|l| 1.0 / l.sqrt())
}
