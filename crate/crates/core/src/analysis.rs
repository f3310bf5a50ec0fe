//! Error-system matrices for C-GT and EF-C-GT, numerical certificates of
//! linear convergence, sufficient parameter construction, and rate fitting.
//!
//! The C-GT system tracks `(Ω_o, Ω_c, Ω_g, Ω_cx, Ω_cy)`: optimization,
//! consensus, tracking and the two compression errors. EF-C-GT appends the
//! two error-feedback accumulators `(Ω_ex, Ω_ey)`. A parameter choice is
//! certified when some positive `ε` satisfies `M ε <= (1 - ημ/2) ε`, which
//! bounds the spectral radius of the nonnegative matrix `M`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::CompressorProfile;
use crate::linalg::{spectral_radius_nonneg_from, Matrix, Vector};
use crate::problems::ProblemConstants;
use crate::topology::SpectralInfo;

/// Relative slack on each component of `M ε <= θ ε`.
pub const COMPONENT_SLACK: f64 = 1e-12;
/// Allowed excess of the spectral radius over `θ` in a verdict.
pub const RADIUS_SLACK: f64 = 1e-10;
/// Safety factor applied to every lower bound in the `ε` chain.
const EPS_INFLATE: f64 = 1.01;
/// Floor relative to `ε_4` for components whose lower bound vanishes.
const EPS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("epsilon must be strictly positive and finite; component {index} is {value}")]
    Epsilon { index: usize, value: f64 },
    #[error("matrix must be square, nonnegative and finite: {0}")]
    Matrix(String),
    #[error(
        "constructed parameters failed certification: rho = {}, theta = {}",
        .0.certificate.rho,
        .0.certificate.theta
    )]
    NotCertified(Box<SufficientParams>),
    #[error("rate fit needs at least two positive residuals, got {0}")]
    TooFewPoints(usize),
}

/// How the free slack parameters `τ_x, τ_y > 1` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauChoice {
    /// `τ = (1 - a)^{-1/2}` for contraction factor `a` in `(0, 1)`, and
    /// `τ = 2` when `a = 1`.
    Midpoint,
    Fixed { tau_x: f64, tau_y: f64 },
}

impl TauChoice {
    fn pick(self, a_x: f64, a_y: f64) -> (f64, f64) {
        let mid = |a: f64| if a >= 1.0 { 2.0 } else { (1.0 - a).powf(-0.5) };
        match self {
            TauChoice::Midpoint => (mid(a_x), mid(a_y)),
            TauChoice::Fixed { tau_x, tau_y } => (tau_x, tau_y),
        }
    }
}

/// Every scalar entering the error-system matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSystemConstants {
    pub n: usize,
    pub s: f64,
    pub rho_tilde: f64,
    pub norm_i_minus_w: f64,
    pub mu: f64,
    pub l: f64,
    pub kappa: f64,
    pub c: f64,
    pub delta: f64,
    pub r: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub gamma: f64,
    pub eta: f64,
    pub tau_x: f64,
    pub tau_y: f64,
}

impl ErrorSystemConstants {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        spectral: &SpectralInfo,
        problem: &ProblemConstants,
        profile: &CompressorProfile,
        alpha_x: f64,
        alpha_y: f64,
        gamma: f64,
        eta: f64,
        tau_x: f64,
        tau_y: f64,
    ) -> Self {
        Self {
            n,
            s: spectral.s,
            rho_tilde: spectral.rho_tilde(gamma),
            norm_i_minus_w: spectral.norm_i_minus_w,
            mu: problem.mu,
            l: problem.l,
            kappa: problem.kappa,
            c: profile.c,
            delta: profile.delta,
            r: profile.r,
            alpha_x,
            alpha_y,
            gamma,
            eta,
            tau_x,
            tau_y,
        }
    }

    /// Same constants at a different `(γ, η)`.
    pub fn at(&self, gamma: f64, eta: f64) -> Self {
        let s = self.s;
        Self {
            gamma,
            eta,
            rho_tilde: 1.0 - gamma * s,
            ..*self
        }
    }

    fn iw2(&self) -> f64 {
        self.norm_i_minus_w * self.norm_i_minus_w
    }

    pub fn c1(&self) -> f64 {
        2.0 / self.s
    }
    pub fn c2(&self) -> f64 {
        2.0 * self.c / self.s * self.iw2()
    }
    pub fn c3(&self) -> f64 {
        12.0 * self.l * self.l / self.s
    }
    pub fn c4(&self) -> f64 {
        6.0 * self.iw2() / self.s
    }
    pub fn t_x(&self) -> f64 {
        3.0 * self.tau_x / (self.tau_x - 1.0)
    }
    pub fn t_y(&self) -> f64 {
        3.0 * self.tau_y / (self.tau_y - 1.0)
    }
    pub fn c5(&self) -> f64 {
        self.t_x() * self.iw2()
    }
    pub fn c6(&self) -> f64 {
        self.t_x() * self.c * self.iw2()
    }
    pub fn c7(&self) -> f64 {
        self.t_y() * self.c * self.iw2()
    }
    pub fn c8(&self) -> f64 {
        self.t_y() * self.iw2()
    }
    pub fn c_x(&self) -> f64 {
        self.tau_x * (1.0 - self.alpha_x * self.r * self.delta)
    }
    pub fn c_y(&self) -> f64 {
        self.tau_y * (1.0 - self.alpha_y * self.r * self.delta)
    }

    pub fn d1(&self) -> f64 {
        2.0 / self.s
    }
    pub fn d2(&self) -> f64 {
        2.0 / self.s * self.iw2()
    }
    /// `t'_x`; the EF system reuses `τ_x`.
    pub fn tp_x(&self) -> f64 {
        self.t_x()
    }
    pub fn tp_y(&self) -> f64 {
        self.t_y()
    }
    pub fn d3(&self) -> f64 {
        self.tp_x() * self.iw2()
    }
    pub fn d4(&self) -> f64 {
        self.tp_y() * self.iw2()
    }
    pub fn d_x(&self) -> f64 {
        self.tau_x * (1.0 - self.alpha_x * self.delta)
    }
    pub fn d_y(&self) -> f64 {
        self.tau_y * (1.0 - self.alpha_y * self.delta)
    }

    /// `1 - ημ/2`.
    pub fn theta(&self) -> f64 {
        1.0 - 0.5 * self.eta * self.mu
    }

    fn check_common(&self) -> Result<(), AnalysisError> {
        let fail = |m: String| Err(AnalysisError::Precondition(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma = {} must lie in (0, 1]", self.gamma));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta = {} must be positive", self.eta));
        }
        let bound = (2.0 / (self.mu + self.l)).min(1.0 / (3.0 * self.mu));
        if !(self.eta < bound) {
            return fail(format!(
                "eta = {} must be below min(2/(mu+L), 1/(3 mu)) = {bound}",
                self.eta
            ));
        }
        if !(self.tau_x > 1.0 && self.tau_y > 1.0) {
            return fail(format!(
                "tau_x = {}, tau_y = {} must exceed 1",
                self.tau_x, self.tau_y
            ));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return fail(format!("spectral gap s = {} must lie in (0, 1]", self.s));
        }
        let scalars = [
            self.mu,
            self.l,
            self.kappa,
            self.c,
            self.delta,
            self.r,
            self.alpha_x,
            self.alpha_y,
            self.norm_i_minus_w,
        ];
        if scalars.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return fail("all constants must be finite and nonnegative".into());
        }
        if !(self.mu > 0.0) {
            return fail(format!("mu = {} must be positive", self.mu));
        }
        Ok(())
    }
}

/// The 5×5 C-GT error-system matrix.
pub fn build_a(k: &ErrorSystemConstants) -> Result<Matrix, AnalysisError> {
    k.check_common()?;
    let (n, l, mu, eta, gamma) = (k.n as f64, k.l, k.mu, k.eta, k.gamma);
    let l2 = l * l;
    let half = 0.5 * (1.0 + k.rho_tilde * k.rho_tilde);
    let e2g = eta * eta / gamma;
    let (c1, c2, c3, c4) = (k.c1(), k.c2(), k.c3(), k.c4());
    let (c5, c6, c7, c8) = (k.c5(), k.c6(), k.c7(), k.c8());
    let (tx, ty) = (k.t_x(), k.t_y());
    let g2 = gamma * gamma;
    let e2 = eta * eta;
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(5, 5, &[
        1.0 - 1.5 * eta * mu, 3.0 * eta * l2 / (mu * n), 0.0, 0.0, 0.0,
        0.0, half, c1 * e2g, c2 * gamma, 0.0,
        n * c3 * l2 * e2g, c3 * l2 * e2g + c4 * l2 * gamma, half + 0.5 * c3 * e2g, 3.0 * c2 * l2 * gamma, c2 * gamma,
        2.0 * n * tx * l2 * e2, c5 * g2 + 2.0 * tx * l2 * e2, tx * e2, k.c_x() + c6 * g2, 0.0,
        6.0 * n * ty * l2 * l2 * e2, 3.0 * c8 * l2 * g2 + 6.0 * ty * l2 * l2 * e2, 3.0 * ty * l2 * e2 + c8 * g2, 3.0 * c7 * l2 * g2, k.c_y() + c7 * g2,
    ]);
    check_matrix(&a)?;
    Ok(a)
}

/// `A - I` with the diagonal formed directly, so that entries of order
/// `ημ` or `γs` next to 1 survive in floating point.
pub fn build_a_shifted(k: &ErrorSystemConstants) -> Result<Matrix, AnalysisError> {
    let mut d = build_a(k)?;
    let consensus = consensus_deficit(k);
    let e2g = k.eta * k.eta / k.gamma;
    let g2 = k.gamma * k.gamma;
    d[(0, 0)] = -1.5 * k.eta * k.mu;
    d[(1, 1)] = consensus;
    d[(2, 2)] = consensus + 0.5 * k.c3() * e2g;
    d[(3, 3)] = (k.c_x() - 1.0) + k.c6() * g2;
    d[(4, 4)] = (k.c_y() - 1.0) + k.c7() * g2;
    Ok(d)
}

/// `(1 + ρ̃²)/2 - 1` with `1 - ρ̃ = γs`.
fn consensus_deficit(k: &ErrorSystemConstants) -> f64 {
    let gs = k.gamma * k.s;
    -0.5 * gs * (2.0 - gs)
}

/// The 7×7 EF-C-GT error-system matrix.
pub fn build_b(k: &ErrorSystemConstants) -> Result<Matrix, AnalysisError> {
    k.check_common()?;
    if !(k.delta > 0.0 && k.delta <= 1.0) {
        return Err(AnalysisError::Precondition(format!(
            "delta = {} must lie in (0, 1]",
            k.delta
        )));
    }
    let (n, l, mu, eta, gamma, delta) = (k.n as f64, k.l, k.mu, k.eta, k.gamma, k.delta);
    let l2 = l * l;
    let l4 = l2 * l2;
    let half = 0.5 * (1.0 + k.rho_tilde * k.rho_tilde);
    let e2g = eta * eta / gamma;
    let e2 = eta * eta;
    let g2 = gamma * gamma;
    let (d1, d2, d3, d4) = (k.d1(), k.d2(), k.d3(), k.d4());
    let (tx, ty) = (k.tp_x(), k.tp_y());
    let fb = 2.0 * (1.0 - delta) / delta;
    let keep = 1.0 - 0.5 * delta;
    #[rustfmt::skip]
    let b = Matrix::from_row_slice(7, 7, &[
        1.0 - 1.5 * eta * mu, 3.0 * eta * l2 / (mu * n), 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, half, d1 * e2g, d2 * gamma, 0.0, 6.0 * d2 * gamma / delta, 0.0,
        6.0 * n * d1 * l4 * e2g, 3.0 * d2 * l2 * gamma + 6.0 * d1 * l4 * e2g, half + 3.0 * d1 * l2 * e2g, 3.0 * d2 * l2 * gamma, d2 * gamma, 18.0 * d2 * l2 * gamma / delta, 6.0 * d2 * gamma / delta,
        2.0 * n * tx * l2 * e2, d3 * g2 + 2.0 * tx * l2 * e2, tx * e2, k.d_x() + d3 * g2, 0.0, 6.0 * d3 * g2 / delta, 0.0,
        6.0 * n * ty * l4 * e2, 3.0 * d4 * l2 * g2 + 6.0 * ty * l4 * e2, 3.0 * ty * l2 * e2 + d4 * g2, 3.0 * d4 * l2 * g2, k.d_y() + d4 * g2, 18.0 * d4 * l2 * g2 / delta, 6.0 * d4 * g2 / delta,
        0.0, 0.0, 0.0, fb, 0.0, keep, 0.0,
        0.0, 0.0, 0.0, 0.0, fb, 0.0, keep,
    ]);
    check_matrix(&b)?;
    Ok(b)
}

/// `B - I`, formed as in [`build_a_shifted`].
pub fn build_b_shifted(k: &ErrorSystemConstants) -> Result<Matrix, AnalysisError> {
    let mut d = build_b(k)?;
    let consensus = consensus_deficit(k);
    let e2g = k.eta * k.eta / k.gamma;
    let g2 = k.gamma * k.gamma;
    let l2 = k.l * k.l;
    d[(0, 0)] = -1.5 * k.eta * k.mu;
    d[(1, 1)] = consensus;
    d[(2, 2)] = consensus + 3.0 * k.d1() * l2 * e2g;
    d[(3, 3)] = (k.d_x() - 1.0) + k.d3() * g2;
    d[(4, 4)] = (k.d_y() - 1.0) + k.d4() * g2;
    d[(5, 5)] = -0.5 * k.delta;
    d[(6, 6)] = -0.5 * k.delta;
    Ok(d)
}

fn check_matrix(m: &Matrix) -> Result<(), AnalysisError> {
    if !m.is_square() {
        return Err(AnalysisError::Matrix(format!("{}x{}", m.nrows(), m.ncols())));
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(AnalysisError::Matrix(format!("entry ({i}, {j}) = {v}")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Spectral radius of the error-system matrix (an upper bound from the
    /// power iteration).
    pub rho: f64,
    pub rho_converged: bool,
    /// Whether `M ε <= θ ε` holds componentwise.
    pub componentwise_ok: bool,
    pub theta: f64,
    /// `1 - θ`.
    pub margin: f64,
    pub epsilon: Vec<f64>,
    /// `1 - max_i (M ε)_i / ε_i`, a lower bound on `1 - ρ`. The test passes
    /// when this is at least `margin`.
    pub decay_bound: f64,
}

impl Certificate {
    /// Both tests pass: the componentwise inequality and `ρ <= θ`.
    pub fn verdict(&self) -> bool {
        self.componentwise_ok && self.rho <= self.theta + RADIUS_SLACK
    }
}

fn check_epsilon(m: &Matrix, epsilon: &[f64]) -> Result<Vector, AnalysisError> {
    if epsilon.len() != m.nrows() || !m.is_square() {
        return Err(AnalysisError::Matrix(format!(
            "epsilon has {} entries for a {}x{} matrix",
            epsilon.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(index) = epsilon.iter().position(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(AnalysisError::Epsilon {
            index,
            value: epsilon[index],
        });
    }
    Ok(Vector::from_column_slice(epsilon))
}

pub fn certify(m: &Matrix, epsilon: &[f64], theta: f64) -> Result<Certificate, AnalysisError> {
    check_matrix(m)?;
    let eps = check_epsilon(m, epsilon)?;
    let me = m * &eps;
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..eps.len() {
        ok &= me[i] <= theta * eps[i] * (1.0 + COMPONENT_SLACK);
        worst = worst.max(me[i] / eps[i]);
    }
    let est = spectral_radius_nonneg_from(m, &eps);
    Ok(Certificate {
        rho: est.value,
        rho_converged: est.converged,
        componentwise_ok: ok,
        theta,
        margin: 1.0 - theta,
        epsilon: epsilon.to_vec(),
        decay_bound: 1.0 - worst,
    })
}

/// As [`certify`] with `θ = 1 - margin`, but the componentwise test runs on
/// `shifted = M - I` as `shifted ε <= -margin ε`. Use this when `margin` is
/// near or below the spacing of doubles around 1.
pub fn certify_shifted(
    m: &Matrix,
    shifted: &Matrix,
    epsilon: &[f64],
    margin: f64,
) -> Result<Certificate, AnalysisError> {
    check_matrix(m)?;
    let eps = check_epsilon(m, epsilon)?;
    if shifted.shape() != m.shape() {
        return Err(AnalysisError::Matrix("shifted matrix shape".into()));
    }
    let de = shifted * &eps;
    let abs = shifted.abs() * &eps;
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..eps.len() {
        let lhs = de[i] + margin * eps[i];
        ok &= lhs <= COMPONENT_SLACK * (abs[i] + margin * eps[i]);
        worst = worst.max(de[i] / eps[i]);
    }
    let est = spectral_radius_nonneg_from(m, &eps);
    let theta = 1.0 - margin;
    Ok(Certificate {
        rho: est.value,
        rho_converged: est.converged,
        componentwise_ok: ok,
        theta,
        margin,
        epsilon: epsilon.to_vec(),
        decay_bound: -worst,
    })
}

/// A parameter choice constructed from the sufficient conditions, with its
/// certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientParams {
    /// The unscaled `ε_1..ε_5` (or `ε_1..ε_7`).
    pub eps: Vec<f64>,
    /// The test vector actually used, with the tracking components scaled
    /// by `L²`.
    pub test_vector: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub constants: ErrorSystemConstants,
    pub certificate: Certificate,
}

fn eta_cap(mu: f64, l: f64) -> f64 {
    (2.0 / (mu + l)).min(1.0 / (3.0 * mu))
}

fn check_alpha(alpha: f64, r: f64, name: &str) -> Result<(), AnalysisError> {
    if !(alpha > 0.0) {
        return Err(AnalysisError::Infeasible(format!("{name} = {alpha} must be positive")));
    }
    if alpha * r > 1.0 + 1e-12 {
        return Err(AnalysisError::Infeasible(format!(
            "{name} * r = {} exceeds 1",
            alpha * r
        )));
    }
    Ok(())
}

fn check_contraction(name: &str, value: f64, tau: f64) -> Result<(), AnalysisError> {
    let t = 3.0 * tau / (tau - 1.0);
    if !(value < 1.0) || !t.is_finite() || !(tau > 1.0) {
        return Err(AnalysisError::Infeasible(format!(
            "{name} = {value} with tau = {tau} does not leave a contraction"
        )));
    }
    Ok(())
}

fn finish_eta(eta: f64, mu: f64, l: f64) -> f64 {
    let cap = eta_cap(mu, l);
    if eta < cap {
        eta
    } else {
        0.99 * cap
    }
}

/// Construct `(ε, γ, η)` satisfying the C-GT sufficient conditions and
/// certify the resulting matrix.
pub fn sufficient_params(
    n: usize,
    problem: &ProblemConstants,
    spectral: &SpectralInfo,
    profile: &CompressorProfile,
    alpha_x: f64,
    alpha_y: f64,
    tau: TauChoice,
) -> Result<SufficientParams, AnalysisError> {
    if !profile.is_valid() {
        return Err(AnalysisError::Infeasible(format!("invalid profile {profile:?}")));
    }
    check_alpha(alpha_x, profile.r, "alpha_x")?;
    check_alpha(alpha_y, profile.r, "alpha_y")?;
    let a_x = alpha_x * profile.r * profile.delta;
    let a_y = alpha_y * profile.r * profile.delta;
    if !(a_x > 0.0 && a_y > 0.0) {
        return Err(AnalysisError::Infeasible("alpha r delta must be positive".into()));
    }
    let (tau_x, tau_y) = tau.pick(a_x, a_y);
    let k0 = ErrorSystemConstants::new(
        n, spectral, problem, profile, alpha_x, alpha_y, 1.0, 0.0, tau_x, tau_y,
    );
    check_contraction("c_x", k0.c_x(), tau_x)?;
    check_contraction("c_y", k0.c_y(), tau_y)?;

    let nf = n as f64;
    let (s, kappa, mu, l) = (k0.s, k0.kappa, k0.mu, k0.l);
    let (c1, c2, c3, c4) = (k0.c1(), k0.c2(), k0.c3(), k0.c4());
    let (c5, c6, c7, c8) = (k0.c5(), k0.c6(), k0.c7(), k0.c8());
    let (tx, ty) = (k0.t_x(), k0.t_y());
    let _ = c3;

    let e4 = 1.0;
    let e5 = 1.0;
    let e2 = EPS_INFLATE * (2.0 * c1 * c2 * e4).max(EPS_FLOOR * e4);
    let e1 = EPS_INFLATE * 3.0 * kappa * kappa * e2 / nf;
    let m2 = c4 * e2 + c2 * (3.0 * e4 + e5);
    let e3 = EPS_INFLATE * (4.0 * m2 / s).max(EPS_FLOOR * e4);
    let sum = 2.0 * nf * e1 + 2.0 * e2 + e3;
    let m3 = tx * sum + c5 * e2 + c6 * e4 + e4 / (2.0 * kappa);
    let m4 = 3.0 * ty * sum + 3.0 * c8 * e2 + c8 * e3 + 3.0 * c7 * e4 + c7 * e5
        + e5 / (2.0 * kappa);
    let gamma = 1f64
        .min((1.0 - k0.c_x()) * e4 / m3)
        .min((1.0 - k0.c_y()) * e5 / m4);
    let eta = (s * e2 / (4.0 * kappa * e3) * gamma / l)
        .min(s * e3 / (12.0 * kappa * sum) * gamma / l)
        .min(s * gamma / (4.0 * mu))
        .min(gamma / l);
    let eta = finish_eta(eta, mu, l);

    let consts = k0.at(gamma, eta);
    let a = build_a(&consts)?;
    let l2 = l * l;
    let eps = vec![e1, e2, e3, e4, e5];
    let test_vector = vec![e1, e2, l2 * e3, e4, l2 * e5];
    let certificate = certify_shifted(&a, &build_a_shifted(&consts)?, &test_vector, 0.5 * eta * mu)?;
    let params = SufficientParams {
        eps,
        test_vector,
        gamma,
        eta,
        constants: consts,
        certificate,
    };
    if !params.certificate.verdict() {
        return Err(AnalysisError::NotCertified(Box::new(params)));
    }
    Ok(params)
}

/// As [`sufficient_params`] for EF-C-GT. The compressor must be contractive
/// with `r = 1`.
pub fn sufficient_params_ef(
    n: usize,
    problem: &ProblemConstants,
    spectral: &SpectralInfo,
    profile: &CompressorProfile,
    alpha_x: f64,
    alpha_y: f64,
    tau: TauChoice,
) -> Result<SufficientParams, AnalysisError> {
    if !profile.is_valid() {
        return Err(AnalysisError::Infeasible(format!("invalid profile {profile:?}")));
    }
    if profile.r != 1.0 {
        return Err(AnalysisError::Infeasible(format!(
            "error feedback analysis needs a contractive compressor (r = 1), got r = {}",
            profile.r
        )));
    }
    check_alpha(alpha_x, 1.0, "alpha_x")?;
    check_alpha(alpha_y, 1.0, "alpha_y")?;
    let delta = profile.delta;
    let (tau_x, tau_y) = tau.pick(alpha_x * delta, alpha_y * delta);
    let k0 = ErrorSystemConstants::new(
        n, spectral, problem, profile, alpha_x, alpha_y, 1.0, 0.0, tau_x, tau_y,
    );
    check_contraction("d_x", k0.d_x(), tau_x)?;
    check_contraction("d_y", k0.d_y(), tau_y)?;

    let nf = n as f64;
    let (s, kappa, mu, l) = (k0.s, k0.kappa, k0.mu, k0.l);
    let (d1, d2, d3, d4) = (k0.d1(), k0.d2(), k0.d3(), k0.d4());
    let (tx, ty) = (k0.tp_x(), k0.tp_y());

    let e4 = 1.0;
    let e5 = 1.0;
    let fb = 8.0 * (1.0 - delta) / (delta * delta);
    let e6 = EPS_INFLATE * (fb * e4).max(EPS_FLOOR * e4);
    let e7 = EPS_INFLATE * (fb * e5).max(EPS_FLOOR * e5);
    let e2 = EPS_INFLATE
        * (4.0 * d1 * d2 * e4)
            .max(24.0 * d1 * d2 * e6 / delta)
            .max(EPS_FLOOR * e4);
    let e1 = EPS_INFLATE * 3.0 * kappa * kappa * e2 / nf;
    let m2 = 3.0 * d2 * e2 + 3.0 * d2 * e4 + d2 * e5 + 18.0 * d2 * e6 / delta
        + 6.0 * d2 * e7 / delta;
    let e3 = EPS_INFLATE * (4.0 * m2 / s).max(EPS_FLOOR * e4);
    let sum = 2.0 * nf * e1 + 2.0 * e2 + e3;
    let m3 = tx * sum + d3 * e2 + d3 * e4 + 6.0 * d3 * e6 / delta + e4 / (2.0 * kappa);
    let m4 = 3.0 * ty * sum
        + 3.0 * d4 * e2
        + d4 * e3
        + 3.0 * d4 * e4
        + d4 * e5
        + 18.0 * d4 * e6 / delta
        + 6.0 * d4 * e7 / delta
        + e5 / (2.0 * kappa);
    let gamma = 1f64
        .min((1.0 - k0.d_x()) * e4 / m3)
        .min((1.0 - k0.d_y()) * e5 / m4);
    let eta = (s * e3 / (6.0 * kappa * sum) * gamma / l)
        .min(s * e2 / (4.0 * kappa * e3) * gamma / l)
        .min(s * gamma / (4.0 * mu))
        .min(gamma / l)
        .min(delta / (2.0 * mu));
    let eta = finish_eta(eta, mu, l);

    let consts = k0.at(gamma, eta);
    let b = build_b(&consts)?;
    let l2 = l * l;
    let eps = vec![e1, e2, e3, e4, e5, e6, e7];
    let test_vector = vec![e1, e2, l2 * e3, e4, l2 * e5, e6, l2 * e7];
    let certificate = certify_shifted(&b, &build_b_shifted(&consts)?, &test_vector, 0.5 * eta * mu)?;
    let params = SufficientParams {
        eps,
        test_vector,
        gamma,
        eta,
        constants: consts,
        certificate,
    };
    if !params.certificate.verdict() {
        return Err(AnalysisError::NotCertified(Box::new(params)));
    }
    Ok(params)
}

/// Least-squares fit of `ln(residual)` against `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Per-iteration contraction factor `exp(slope)`.
    pub rate: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub points: usize,
    pub k_first: u64,
    pub k_last: u64,
}

/// Normalized residuals at or below this are round-off, not convergence.
pub const RESIDUAL_FLOOR: f64 = 1e-16;

/// Fit over the whole trace after discarding the first 10% of points. The
/// fit ends before the first residual at or below [`RESIDUAL_FLOOR`].
pub fn empirical_rate(trace: &[(u64, f64)]) -> Result<RateFit, AnalysisError> {
    let burn = trace.len() / 10;
    fit_log_linear(&trace[burn..], RESIDUAL_FLOOR)
}

/// Fit over points with `k_lo <= k <= k_hi`.
pub fn empirical_rate_window(
    trace: &[(u64, f64)],
    k_lo: u64,
    k_hi: u64,
) -> Result<RateFit, AnalysisError> {
    let window: Vec<(u64, f64)> = trace
        .iter()
        .copied()
        .filter(|&(k, _)| k >= k_lo && k <= k_hi)
        .collect();
    fit_log_linear(&window, RESIDUAL_FLOOR)
}

fn fit_log_linear(points: &[(u64, f64)], floor: f64) -> Result<RateFit, AnalysisError> {
    let end = points
        .iter()
        .position(|&(_, r)| !(r.is_normal() && r > floor))
        .unwrap_or(points.len());
    let pts = &points[..end];
    if pts.len() < 2 {
        return Err(AnalysisError::TooFewPoints(pts.len()));
    }
    let m = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|&(k, _)| k as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, r)| r.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::TooFewPoints(1));
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - ym - slope * (x - xm)).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        rate: slope.exp(),
        slope,
        r_squared,
        points: pts.len(),
        k_first: pts[0].0,
        k_last: pts[pts.len() - 1].0,
    })
}
