//! Random instance generators shared by the property tests.

#![allow(dead_code)]

use etrust::{LinearConstraint, SymMatrix, TrustRegionProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gaussian(rng))
}

pub fn gaussian_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gaussian(rng))
}

pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian_mat(n, n, rng).qr().q()
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let m = gaussian_mat(n, n, rng);
    SymMatrix::symmetrize(&m + m.transpose()).unwrap()
}

/// Smallest eigenvalue repeated `mult` times.
pub fn hessian_with_multiplicity(n: usize, mult: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let q = random_orthogonal(n, rng);
    let low = -1.0 - rng.random::<f64>();
    let d = DVector::from_fn(n, |i, _| {
        if i < mult {
            low
        } else {
            low + 0.5 + 2.0 * rng.random::<f64>()
        }
    });
    SymMatrix::symmetrize(&q * DMatrix::from_diagonal(&d) * q.transpose()).unwrap()
}

/// Ball plus `m` cuts that keep the center strictly feasible.
pub fn slater_instance(hess: SymMatrix, m: usize, rng: &mut ChaCha8Rng) -> TrustRegionProblem {
    let n = hess.order();
    let a = gaussian_vec(n, rng);
    let x0 = gaussian_vec(n, rng) * 0.5;
    let alpha = 0.5 + 1.5 * rng.random::<f64>();
    let cuts = (0..m)
        .map(|_| {
            let b = gaussian_vec(n, rng);
            let margin = (0.1 + 0.8 * rng.random::<f64>()) * b.norm() * alpha.sqrt();
            let beta = b.dot(&x0) + margin;
            LinearConstraint::new(b, beta)
        })
        .collect();
    TrustRegionProblem::from_parts(hess, a, 0.0, x0, alpha, cuts).unwrap()
}

/// Uniform point of the feasible set by rejection from the ball.
pub fn feasible_sample(p: &TrustRegionProblem, rng: &mut ChaCha8Rng) -> Option<DVector<f64>> {
    let c = p.constraints();
    let n = p.dim();
    let r = c.radius_sq().sqrt();
    for _ in 0..10_000 {
        let dir = gaussian_vec(n, rng).normalize();
        let t = r * rng.random::<f64>().powf(1.0 / n as f64);
        let x = c.center() + dir * t;
        if c.is_feasible(&x, 0.0) {
            return Some(x);
        }
    }
    None
}
