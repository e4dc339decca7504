#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saddle_escape_core::linalg::sym_norm;
use saddle_escape_core::model::{registry_get, registry_names, FeasibleSet, Oracle, ProblemSpec, Quadratic};
use saddle_escape_core::{Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

/// Symmetric matrix with entries uniform in [-1, 1).
pub fn random_symmetric<R: Rng>(rng: &mut R, d: usize) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

/// Positive definite shape with eigenvalues roughly in [0.5, 4].
pub fn random_shape<R: Rng>(rng: &mut R, d: usize) -> Matrix {
    let a = Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let q = &a * a.transpose() + Matrix::identity(d, d) * 0.5;
    let scale = sym_norm(&q).unwrap().max(1.0) / 4.0;
    q / scale
}

pub fn random_set<R: Rng>(rng: &mut R, d: usize, m: usize) -> FeasibleSet {
    FeasibleSet::new((0..m).map(|_| random_shape(rng, d)).collect()).unwrap()
}

/// Indefinite quadratic over a random intersection, started at a random
/// feasible point.
pub fn random_quadratic_problem<R: Rng>(rng: &mut R, d: usize, m: usize) -> ProblemSpec {
    let set = random_set(rng, d, m);
    let p = random_symmetric(rng, d) * 2.0;
    let l = Vector::from_fn(d, |_, _| rng.gen_range(-0.2..0.2));
    let x0 = set.sample_point(rng);
    let lip = sym_norm(&p).unwrap().max(1e-3);
    let f = Quadratic::new(p, l, 0.0);
    ProblemSpec::builder("random-quadratic", Oracle::Deterministic(Arc::new(f)), set, x0)
        .grad_lipschitz(lip)
        .hess_lipschitz(1.0)
        .build()
        .unwrap()
}

pub fn registry() -> Vec<ProblemSpec> {
    registry_names().iter().map(|n| registry_get(n).unwrap()).collect()
}

/// Uniform point in the ball of the given radius.
pub fn ball_point<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vector {
    use rand_distr_free::gaussian;
    let g = Vector::from_fn(d, |_, _| gaussian(rng));
    let r = radius * rng.gen_range(0.0f64..1.0).powf(1.0 / d as f64);
    g.normalize() * r
}

mod rand_distr_free {
    use rand::Rng;

    /// Box-Muller standard normal.
    pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let v: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// Minimum of `zᵀHz` over `{z : x + z ∈ C, gᵀz = 0}` for `d = 3`, found by
/// zooming grids over a plane basis built from cross products. Shares no
/// code with the library's reduction.
pub fn ambient_tangent_minimum(set: &FeasibleSet, x: &Vector, g: &Vector, h: &Matrix) -> f64 {
    assert_eq!(x.len(), 3);
    let n = g.normalize();
    let seed = if n[0].abs() < 0.6 { v(&[1.0, 0.0, 0.0]) } else { v(&[0.0, 1.0, 0.0]) };
    let e1 = n.cross(&seed).normalize();
    let e2 = n.cross(&e1).normalize();
    let eval = |a: f64, b: f64| -> Option<f64> {
        let z = &e1 * a + &e2 * b;
        (set.max_violation(&(x + &z)).unwrap() <= 0.0).then(|| z.dot(&(h * &z)))
    };
    let half = set.diameter();
    let mut best: Vec<(f64, f64, f64)> = vec![(0.0, 0.0, 0.0)];
    let scan = |ca: f64, cb: f64, w: f64, k: usize, out: &mut Vec<(f64, f64, f64)>| {
        for i in 0..=k {
            for j in 0..=k {
                let a = ca - w + 2.0 * w * i as f64 / k as f64;
                let b = cb - w + 2.0 * w * j as f64 / k as f64;
                if let Some(q) = eval(a, b) {
                    out.push((q, a, b));
                }
            }
        }
    };
    scan(0.0, 0.0, half, 400, &mut best);
    let mut w = 2.0 * half / 400.0;
    for _ in 0..8 {
        best.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        best.truncate(5);
        let seeds = best.clone();
        for (_, a, b) in seeds {
            scan(a, b, 2.0 * w, 40, &mut best);
        }
        w *= 0.1;
    }
    best.iter().map(|p| p.0).fold(f64::INFINITY, f64::min)
}
