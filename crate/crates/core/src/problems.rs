//! Distributed ridge regression: agent `i` holds one sample `(u_i, v_i)` and
//! the local objective `f_i(x) = (u_iᵀx - v_i)² + rho ||x||²`.

use nalgebra::linalg::{Cholesky, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm_sq, Matrix, Vector};
use crate::rng::RngStream;

const TAG_FEATURES: u32 = 10;
const TAG_NOISE: u32 = 11;
const TAG_INITIAL: u32 = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("need n >= 1 and p >= 1, got n = {n}, p = {p}")]
    Shape { n: usize, p: usize },
    #[error("penalty rho = {0} must be positive")]
    Penalty(f64),
    #[error("noise standard deviation {0} must be nonnegative and finite")]
    Noise(f64),
    #[error("agent index {index} out of range for {n} agents")]
    Agent { index: usize, n: usize },
    #[error("truth vector has length {got}, expected p = {p}")]
    TruthLength { got: usize, p: usize },
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
}

/// Ground-truth parameters used to synthesize observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub enum TruthLayout {
    /// Agent `i` uses the constant vector at level `i / (n - 1)`.
    #[default]
    EvenLevels,
    /// Every agent shares the same vector.
    Shared(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSpec {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub truth: TruthLayout,
}

impl RidgeSpec {
    /// Ten agents, twenty features, `rho = 0.01`, noise variance 25.
    pub fn standard(seed: u64) -> Self {
        Self {
            n: 10,
            p: 20,
            rho: 0.01,
            noise_std: 5.0,
            seed,
            truth: TruthLayout::EvenLevels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeProblem {
    features: Vec<Vec<f64>>,
    observations: Vec<f64>,
    penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    pub l: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

pub fn generate_ridge(spec: &RidgeSpec) -> Result<RidgeProblem, ProblemError> {
    let RidgeSpec {
        n,
        p,
        rho,
        noise_std,
        seed,
        ..
    } = *spec;
    if n == 0 || p == 0 {
        return Err(ProblemError::Shape { n, p });
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(ProblemError::Noise(noise_std));
    }
    if let TruthLayout::Shared(t) = &spec.truth {
        if t.len() != p {
            return Err(ProblemError::TruthLength { got: t.len(), p });
        }
    }
    let mut frng = RngStream::aux(seed, 0, TAG_FEATURES);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| frng.random_range(-1.0..=1.0)).collect())
        .collect();
    let mut nrng = RngStream::aux(seed, 0, TAG_NOISE);
    let noise = Normal::new(0.0, noise_std).map_err(|_| ProblemError::Noise(noise_std))?;
    let observations = features
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let clean = match &spec.truth {
                TruthLayout::EvenLevels => {
                    let level = if n == 1 {
                        0.0
                    } else {
                        i as f64 / (n - 1) as f64
                    };
                    level * u.iter().sum::<f64>()
                }
                TruthLayout::Shared(t) => dot(u, t),
            };
            clean + noise.sample(&mut nrng)
        })
        .collect();
    RidgeProblem::new(features, observations, rho)
}

/// Initial decision variables, one row per agent, uniform in `[0, 1]^p`.
pub fn initial_point(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::aux(seed, 0, TAG_INITIAL);
    (0..n)
        .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
        .collect()
}

impl RidgeProblem {
    pub fn new(
        features: Vec<Vec<f64>>,
        observations: Vec<f64>,
        penalty: f64,
    ) -> Result<Self, ProblemError> {
        let n = features.len();
        let p = features.first().map_or(0, Vec::len);
        if n == 0 || p == 0 {
            return Err(ProblemError::Shape { n, p });
        }
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(ProblemError::Penalty(penalty));
        }
        if observations.len() != n {
            return Err(ProblemError::Inconsistent(format!(
                "{} observations for {n} agents",
                observations.len()
            )));
        }
        if let Some(i) = features.iter().position(|u| u.len() != p) {
            return Err(ProblemError::Inconsistent(format!(
                "agent {i} has {} features, expected {p}",
                features[i].len()
            )));
        }
        let finite = features.iter().flatten().chain(&observations).all(|v| v.is_finite());
        if !finite {
            return Err(ProblemError::Inconsistent("non-finite data".into()));
        }
        Ok(Self {
            features,
            observations,
            penalty,
        })
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn p(&self) -> usize {
        self.features[0].len()
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn observation(&self, i: usize) -> f64 {
        self.observations[i]
    }

    fn check(&self, i: usize) -> Result<(), ProblemError> {
        if i < self.n() {
            Ok(())
        } else {
            Err(ProblemError::Agent {
                index: i,
                n: self.n(),
            })
        }
    }

    pub fn local_value(&self, i: usize, x: &[f64]) -> Result<f64, ProblemError> {
        self.check(i)?;
        let r = dot(&self.features[i], x) - self.observations[i];
        Ok(r * r + self.penalty * norm_sq(x))
    }

    /// `2 (u_iᵀx - v_i) u_i + 2 rho x`.
    pub fn local_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check(i)?;
        let mut g = vec![0.0; x.len()];
        self.local_gradient_into(i, x, &mut g);
        Ok(g)
    }

    /// As [`local_gradient`](Self::local_gradient) without the index check.
    pub fn local_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let u = &self.features[i];
        let r2 = 2.0 * (dot(u, x) - self.observations[i]);
        let rho2 = 2.0 * self.penalty;
        for ((o, &ui), &xi) in out.iter_mut().zip(u).zip(x) {
            *o = r2 * ui + rho2 * xi;
        }
    }

    /// `f(x) = (1/n) sum_i f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| self.local_value(i, x).expect("index in range"))
            .sum::<f64>()
            / self.n() as f64
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.p()];
        let mut g = vec![0.0; self.p()];
        for i in 0..self.n() {
            self.local_gradient_into(i, x, &mut g);
            total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
        }
        total.iter_mut().for_each(|t| *t /= self.n() as f64);
        total
    }

    fn gram(&self) -> Matrix {
        let p = self.p();
        let mut g = Matrix::zeros(p, p);
        for u in &self.features {
            let u = Vector::from_column_slice(u);
            g += &u * u.transpose();
        }
        g
    }

    /// `x* = (sum u uᵀ + n rho I)^{-1} sum u v`.
    pub fn optimal_solution(&self) -> OptimalSolution {
        let (n, p) = (self.n(), self.p());
        let a = self.gram() + Matrix::identity(p, p) * (n as f64 * self.penalty);
        let mut b = Vector::zeros(p);
        for (u, &v) in self.features.iter().zip(&self.observations) {
            b += Vector::from_column_slice(u) * v;
        }
        let chol = Cholesky::new(a).expect("positive penalty makes the system positive definite");
        let x_star: Vec<f64> = chol.solve(&b).iter().copied().collect();
        let f_star = self.value(&x_star);
        OptimalSolution { x_star, f_star }
    }

    /// Per-agent smoothness constants `L_i = 2||u_i||² + 2 rho`.
    pub fn lipschitz(&self) -> Vec<f64> {
        self.features
            .iter()
            .map(|u| 2.0 * norm_sq(u) + 2.0 * self.penalty)
            .collect()
    }

    /// `mu = lambda_min((2/n) sum u uᵀ + 2 rho I)`, `L = max_i L_i`.
    pub fn constants(&self) -> ProblemConstants {
        let (n, p) = (self.n(), self.p());
        let hessian = self.gram() * (2.0 / n as f64) + Matrix::identity(p, p) * (2.0 * self.penalty);
        let mu = SymmetricEigen::new(hessian).eigenvalues.min();
        // The eigen solve can land a few ulps under the exact floor 2 rho.
        let mu = mu.max(2.0 * self.penalty);
        let l = self.lipschitz().into_iter().fold(0.0, f64::max);
        ProblemConstants {
            mu,
            l,
            kappa: l / mu,
        }
    }
}
