//! Small dense linear-algebra routines used by the topology and analysis
//! modules. Matrices here are at most a few hundred rows, so everything is
//! dense and iterative methods run to a tight tolerance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::rng::RngStream;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Outcome of an iterative eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `m`, by power iteration on `mᵀm`.
///
/// The start vector is drawn from a fixed stream so the result is
/// bit-identical across calls.
pub fn spectral_norm(m: &Matrix) -> PowerEstimate {
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 {
        return PowerEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let gram = m.transpose() * m;
    let mut rng = RngStream::aux(0x5eed, cols as u64, 0);
    let mut v = Vector::from_fn(cols, |_, _| rng.random::<f64>() + 0.5);
    v /= v.norm();

    let mut lambda = 0.0;
    for it in 1..=POWER_MAX_ITERS {
        let w = &gram * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return PowerEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        v = w / norm;
        if (next - lambda).abs() <= POWER_TOL * next.abs().max(f64::MIN_POSITIVE) {
            return PowerEstimate {
                value: next.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            };
        }
        lambda = next;
    }
    PowerEstimate {
        value: lambda.max(0.0).sqrt(),
        iterations: POWER_MAX_ITERS,
        converged: false,
    }
}

/// Spectral radius of an entrywise nonnegative square matrix.
///
/// See [`spectral_radius_nonneg_from`]; starts from the all-ones vector.
pub fn spectral_radius_nonneg(m: &Matrix) -> PowerEstimate {
    spectral_radius_nonneg_from(m, &Vector::from_element(m.nrows(), 1.0))
}

/// Spectral radius of an entrywise nonnegative square matrix, starting the
/// power iteration from the strictly positive vector `start`.
///
/// Iterating `v <- (m v + v) / max` keeps `v` strictly positive, so every
/// step yields Collatz–Wielandt bounds
/// `min_i (m v)_i / v_i <= rho(m) <= max_i (m v)_i / v_i`. The best upper
/// bound seen is returned. `converged` is set once the bracket is narrower
/// than `POWER_TOL` relative, which happens for irreducible `m`; for
/// reducible `m` the upper bound is still valid but may stay open.
pub fn spectral_radius_nonneg_from(m: &Matrix, start: &Vector) -> PowerEstimate {
    assert!(m.is_square(), "spectral radius needs a square matrix");
    let n = m.nrows();
    assert_eq!(start.len(), n, "start vector length");
    assert!(
        start.iter().all(|v| *v > 0.0 && v.is_finite()),
        "start vector must be strictly positive"
    );
    if n == 0 {
        return PowerEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut v = start / start.max();
    let (mut upper, mut lower) = (f64::INFINITY, 0.0f64);
    for it in 1..=POWER_MAX_ITERS {
        let mv = m * &v;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let q = mv[i] / v[i];
            lo = lo.min(q);
            hi = hi.max(q);
        }
        upper = upper.min(hi);
        lower = lower.max(lo);
        if upper - lower <= POWER_TOL * upper.max(f64::MIN_POSITIVE) {
            return PowerEstimate {
                value: upper,
                iterations: it,
                converged: true,
            };
        }
        let mut next = mv + &v;
        let scale = next.max();
        next /= scale;
        if next.iter().any(|x| *x <= 0.0) {
            // Underflow of a component; the bounds so far remain valid.
            break;
        }
        v = next;
    }
    PowerEstimate {
        value: upper,
        iterations: POWER_MAX_ITERS,
        converged: false,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
