//! Trust-region subproblem `min wᵀBw + sᵀw  s.t. ‖w‖ ≤ Δ`.
//!
//! Solved globally in the eigenbasis of `B`. A point is optimal iff
//! `2(B + λI)w = −s`, `λ ≥ 0`, `B + λI ⪰ 0` and `λ(‖w‖ − Δ) = 0`; the
//! multiplier is found with a safeguarded Newton iteration on
//! `1/‖w(λ)‖ − 1/Δ`.

// unused when another crate in the build links std
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;


use crate::linalg::{sym_eig, SymEig};
use crate::{Error, Matrix, Result, Vector};

/// Root-finder iteration cap.
pub const TRS_MAX_ITERS: usize = 200;

/// `|gᵢ| ≤ HARD_CASE_TOL · ‖s‖` on the bottom eigenspace flags the hard case.
pub const HARD_CASE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TrsSolution {
    pub w: Vector,
    pub value: f64,
    /// KKT multiplier of the norm constraint.
    pub lambda: f64,
    pub hard_case: bool,
}

/// Global minimiser of `wᵀBw + sᵀw` over `‖w‖ ≤ radius`.
pub fn solve_trs(b: &Matrix, s: &Vector, radius: f64) -> Result<TrsSolution> {
    TrustRegion::new(b, s, radius)?.global(None)
}

/// A trust-region instance in the eigenbasis of `B`.
#[derive(Clone, Debug)]
pub struct TrustRegion {
    eig: SymEig,
    /// `Vᵀs`
    g: Vector,
    s_norm: f64,
    radius: f64,
    scale: f64,
}

impl TrustRegion {
    pub fn new(b: &Matrix, s: &Vector, radius: f64) -> Result<Self> {
        Error::check_dim(b.nrows(), s.len())?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument("trust-region radius must be finite and >= 0".into()));
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("trust-region linear term is not finite".into()));
        }
        let eig = sym_eig(b)?;
        let g = eig.vectors.tr_mul(s);
        let scale = if eig.values.is_empty() {
            1.0
        } else {
            eig.min().abs().max(eig.max().abs()).max(1e-300)
        };
        Ok(Self {
            s_norm: s.norm(),
            eig,
            g,
            radius,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `wᵀBw + sᵀw`.
    pub fn value(&self, w: &Vector) -> f64 {
        let c = self.eig.vectors.tr_mul(w);
        c.iter()
            .zip(self.eig.values.iter())
            .zip(self.g.iter())
            .map(|((ci, li), gi)| li * ci * ci + gi * ci)
            .sum()
    }

    /// Eigenvalues tied with the smallest one.
    fn bottom_count(&self) -> usize {
        let lmin = self.eig.min();
        let tie = 1e-12 * self.scale;
        self.eig.values.iter().take_while(|&&l| l <= lmin + tie).count()
    }

    fn bottom_weight(&self, k: usize) -> f64 {
        self.g.iter().take(k).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `w(λ)` in eigen-coordinates, skipping the first `skip` components.
    /// Coordinates of `w(λ)` in the eigenbasis at `λ = base + mu`. The
    /// denominators are formed as `(Λᵢ + base) + mu` so a root just right
    /// of a pole stays resolvable.
    fn coords(&self, base: f64, mu: f64, skip: usize) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.g
                .iter()
                .zip(self.eig.values.iter())
                .enumerate()
                .map(|(i, (gi, li))| {
                    if i < skip || *gi == 0.0 {
                        0.0
                    } else {
                        -gi / (2.0 * ((li + base) + mu))
                    }
                }),
        )
    }

    fn norm2_at(&self, base: f64, mu: f64, skip: usize) -> f64 {
        self.g
            .iter()
            .zip(self.eig.values.iter())
            .skip(skip)
            .filter(|(gi, _)| **gi != 0.0)
            .map(|(gi, li)| {
                let t = gi / (2.0 * ((li + base) + mu));
                t * t
            })
            .sum()
    }

    fn finish(&self, coords: Vector, lambda: f64, hard_case: bool) -> TrsSolution {
        let mut w = &self.eig.vectors * coords;
        let n = w.norm();
        if n > self.radius && n > 0.0 {
            w *= self.radius / n;
        }
        let value = self.value(&w);
        TrsSolution {
            w,
            value,
            lambda,
            hard_case,
        }
    }

    /// Global minimiser. In the hard case, and whenever `B` is singular
    /// positive semidefinite with an interior minimiser, the minimiser is not
    /// unique; `lean` then picks the one minimising `leanᵀw`.
    pub fn global(&self, lean: Option<&Vector>) -> Result<TrsSolution> {
        let n = self.dim();
        if n == 0 {
            return Ok(TrsSolution {
                w: Vector::zeros(0),
                value: 0.0,
                lambda: 0.0,
                hard_case: false,
            });
        }
        if self.radius == 0.0 {
            return Ok(TrsSolution {
                w: Vector::zeros(n),
                value: 0.0,
                lambda: self.eig.min().abs() + self.s_norm,
                hard_case: false,
            });
        }
        let lmin = self.eig.min();
        let k = self.bottom_count();
        let flat_tol = 1e-12 * self.scale;
        let bottom_small = self.bottom_weight(k) <= HARD_CASE_TOL * self.s_norm;

        if lmin > flat_tol {
            let w0 = self.coords(0.0, 0.0, 0);
            if w0.norm() <= self.radius {
                return Ok(self.finish(w0, 0.0, false));
            }
        } else if lmin >= -flat_tol && bottom_small {
            // singular PSD with s outside the null space: a flat valley
            let w0 = self.coords(0.0, 0.0, k);
            if w0.norm() <= self.radius {
                let slack = (self.radius * self.radius - w0.norm_squared()).max(0.0).sqrt();
                return Ok(self.finish(self.lean_into_bottom(w0, k, slack, lean), 0.0, true));
            }
        }

        let lo = (-lmin).max(0.0);
        if bottom_small && lmin < -flat_tol {
            let w_hard = self.coords(lo, 0.0, k);
            let nh = w_hard.norm();
            if nh <= self.radius {
                let slack = (self.radius * self.radius - nh * nh).max(0.0).sqrt();
                return Ok(self.finish(self.lean_into_bottom(w_hard, k, slack, lean), lo, true));
            }
            let mu = self.secular_root(lo, k)?;
            return Ok(self.finish(self.coords(lo, mu, k), lo + mu, false));
        }
        let mu = self.secular_root(lo, 0)?;
        Ok(self.finish(self.coords(lo, mu, 0), lo + mu, false))
    }

    /// Adds a bottom-eigenspace component of length `slack`, pointing
    /// against `lean` when given and along the first bottom eigenvector
    /// otherwise.
    fn lean_into_bottom(&self, mut coords: Vector, k: usize, slack: f64, lean: Option<&Vector>) -> Vector {
        if slack == 0.0 {
            return coords;
        }
        let mut dir = Vector::zeros(self.dim());
        if let Some(a) = lean {
            let ac = self.eig.vectors.tr_mul(a);
            for i in 0..k {
                dir[i] = -ac[i];
            }
        }
        let dn = dir.norm();
        if dn > 1e-14 * lean.map_or(0.0, |a| a.norm()) && dn > 0.0 {
            dir /= dn;
        } else {
            dir = Vector::zeros(self.dim());
            dir[0] = 1.0;
        }
        coords += dir * slack;
        coords
    }

    /// Solves `‖w(lo + μ)‖ = Δ` for `μ > 0` where `‖w(lo)‖ > Δ`; returns `μ`.
    fn secular_root(&self, lo: f64, skip: usize) -> Result<f64> {
        let target = self.radius;
        let gap_active = self.eig.values[skip] + lo;
        let mut a = 0.0;
        let mut b = (self.s_norm / (2.0 * target) - gap_active).max(0.0);
        if self.norm2_at(lo, b, skip).sqrt() > target {
            b = b * 2.0 + f64::MIN_POSITIVE;
        }
        let phi = |mu: f64| -> (f64, f64) {
            let mut n2 = 0.0;
            let mut d = 0.0;
            for (gi, li) in self.g.iter().zip(self.eig.values.iter()).skip(skip) {
                if *gi == 0.0 {
                    continue;
                }
                let den = (li + lo) + mu;
                let t = gi / (2.0 * den);
                n2 += t * t;
                d += gi * gi / (2.0 * den * den * den);
            }
            let norm = n2.sqrt();
            // φ = 1/‖w‖ − 1/Δ, φ' = ½‖w‖⁻³ Σ gᵢ²/(2(Λᵢ+λ)³)
            (1.0 / norm - 1.0 / target, 0.5 * d / (norm * n2))
        };
        // start just right of the pole so the first Newton step is defined
        let mut mu = if gap_active > 0.0 { 0.0 } else { b * 1e-6 };
        let mut residual = f64::INFINITY;
        for _ in 0..TRS_MAX_ITERS {
            let (f, df) = phi(mu);
            residual = f.abs() * target;
            if residual <= 4.0 * f64::EPSILON || b - a <= 4.0 * f64::EPSILON * b {
                return Ok(mu);
            }
            if f < 0.0 {
                a = mu;
            } else {
                b = mu;
            }
            let newton = mu - f / df;
            mu = if df > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
        }
        if residual <= 1e-10 {
            return Ok(mu);
        }
        Err(Error::NoConvergence {
            what: "trust-region secular equation",
            iterations: TRS_MAX_ITERS,
            residual,
        })
    }

    /// Boundary KKT points with multiplier in `(max(0, −Λ₂), −Λ₁)`. The
    /// local non-global minimiser, when it exists, is one of them.
    pub fn local_candidates(&self) -> Vec<TrsSolution> {
        let mut out = Vec::new();
        let n = self.dim();
        if n < 2 || self.radius == 0.0 {
            return out;
        }
        let l1 = self.eig.values[0];
        let l2 = self.eig.values[1];
        let hi = -l1;
        let lo = (-l2).max(0.0);
        if !(hi > lo) || l2 - l1 <= 1e-12 * self.scale {
            return out;
        }
        let target = self.radius * self.radius;
        // μ = λ − hi ranges over (lo − hi, 0)
        let psi = |mu: f64| self.norm2_at(hi, mu, 0);
        // ψ is convex on the interval, so golden section finds its minimum.
        let width = hi - lo;
        let mut a = -width + width * 1e-12;
        let mut b = -width * 1e-12;
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (psi(c), psi(d));
        for _ in 0..TRS_MAX_ITERS {
            if b - a <= 1e-15 * width.max(1.0) {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = psi(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = psi(d);
            }
        }
        let m = 0.5 * (a + b);
        if !(psi(m) <= target) {
            return out;
        }
        let bisect = |mut inside: f64, mut outside: f64| -> f64 {
            for _ in 0..TRS_MAX_ITERS {
                let mid = 0.5 * (inside + outside);
                if mid == inside || mid == outside {
                    break;
                }
                if psi(mid) <= target {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            inside
        };
        let mut roots = Vec::new();
        if psi(-width) > target || lo > 0.0 {
            roots.push(bisect(m, -width));
        } else {
            // ψ(0) ≤ Δ²: the stationary point at λ = 0 is interior
            roots.push(-width);
        }
        roots.push(bisect(m, 0.0));
        for mu in roots {
            let coords = self.coords(hi, mu, 0);
            out.push(self.finish(coords, hi + mu, false));
        }
        out
    }

    /// Stationarity residual `‖2(B + λI)w + s‖`.
    pub fn kkt_residual(&self, sol: &TrsSolution) -> f64 {
        let c = self.eig.vectors.tr_mul(&sol.w);
        c.iter()
            .zip(self.eig.values.iter())
            .zip(self.g.iter())
            .map(|((ci, li), gi)| {
                let r = 2.0 * (li + sol.lambda) * ci + gi;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}
