//! Certificate reports: sufficient parameters for a config's compressor
//! and network, cross-checked against a dense eigensolve.

use std::fmt::Write as _;

use cgt_core::algorithms::Variant;
use cgt_core::analysis::{
    build_a, build_b, sufficient_params, sufficient_params_ef, SufficientParams, TauChoice,
};
use cgt_core::compression::{empirical_profile, CompressorKind, CompressorProfile, EstimatorConfig};
use cgt_core::linalg::{spectral_radius_nonneg, Matrix};

use crate::config::{ConfigError, ExperimentConfig};
use crate::trace::float;

/// Largest eigenvalue modulus from a full eigendecomposition.
pub fn eigen_radius(m: &Matrix) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// The error-system matrix for `variant` at the constants in `sp`.
pub fn system_matrix(variant: Variant, sp: &SufficientParams) -> Matrix {
    let m = if variant.uses_error_feedback() {
        build_b(&sp.constants)
    } else {
        build_a(&sp.constants)
    };
    m.expect("sufficient parameters satisfy the matrix preconditions")
}

/// Spectral radius of the error system at the configured `(gamma, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfiguredPoint {
    pub gamma: f64,
    pub eta: f64,
    pub theta: f64,
    pub rho: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct CertifyReport {
    pub name: String,
    pub variant: Variant,
    pub compressor: CompressorKind,
    pub profile: CompressorProfile,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub params: Result<SufficientParams, String>,
    /// Eigensolve of the certified matrix.
    pub oracle_rho: Option<f64>,
    pub configured: Option<ConfiguredPoint>,
}

/// Tolerance between the power-iteration radius and the eigensolve.
pub const ORACLE_TOL: f64 = 1e-9;

impl CertifyReport {
    /// The constructed parameters certify and agree with the eigensolve.
    pub fn verdict(&self) -> bool {
        match (&self.params, self.oracle_rho) {
            (Ok(sp), Some(oracle)) => {
                sp.certificate.verdict() && (sp.certificate.rho - oracle).abs() <= ORACLE_TOL
            }
            _ => false,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "algorithm = {}", self.variant);
        let _ = writeln!(s, "compressor = {}", self.compressor);
        let p = &self.profile;
        let _ = writeln!(
            s,
            "profile = C {} delta {} r {} ({:?})",
            float(p.c),
            float(p.delta),
            float(p.r),
            p.provenance
        );
        let _ = writeln!(s, "alpha_x = {}", float(self.alpha_x));
        let _ = writeln!(s, "alpha_y = {}", float(self.alpha_y));
        match &self.params {
            Ok(sp) => {
                let c = &sp.certificate;
                let _ = writeln!(s, "gamma = {}", float(sp.gamma));
                let _ = writeln!(s, "eta = {}", float(sp.eta));
                let eps: Vec<String> = sp.eps.iter().map(|e| float(*e)).collect();
                let _ = writeln!(s, "epsilon = {}", eps.join(" "));
                let _ = writeln!(s, "theta = {}", float(c.theta));
                let _ = writeln!(s, "rho = {}", float(c.rho));
                if let Some(o) = self.oracle_rho {
                    let _ = writeln!(s, "rho_eigensolve = {}", float(o));
                }
                let _ = writeln!(s, "componentwise = {}", c.componentwise_ok);
                let _ = writeln!(s, "decay_bound = {}", float(c.decay_bound));
                let _ = writeln!(s, "margin = {}", float(c.margin));
            }
            Err(e) => {
                let _ = writeln!(s, "error = {e}");
            }
        }
        if let Some(cp) = &self.configured {
            let _ = writeln!(s, "configured_gamma = {}", float(cp.gamma));
            let _ = writeln!(s, "configured_eta = {}", float(cp.eta));
            let _ = writeln!(s, "configured_theta = {}", float(cp.theta));
            match &cp.rho {
                Ok(r) => {
                    let _ = writeln!(s, "configured_rho = {}", float(*r));
                    let _ = writeln!(s, "configured_certified = {}", *r <= cp.theta);
                }
                Err(e) => {
                    let _ = writeln!(s, "configured_rho = n/a ({e})");
                }
            }
        }
        let _ = writeln!(s, "verdict = {}", if self.verdict() { "certified" } else { "not certified" });
        s
    }
}

/// Build the certificate report for a config. `gt` is treated as C-GT with
/// the identity compressor. Step sizes `alpha > 1/r` are clamped to `1/r`
/// for the construction and the configured point is then reported as
/// outside the analysis.
pub fn certify_config(cfg: &ExperimentConfig, estimator: &EstimatorConfig) -> Result<CertifyReport, ConfigError> {
    let inst = cfg.instantiate()?;
    let (variant, kind) = match inst.variant {
        Variant::Gt => (Variant::CgtEfficient, CompressorKind::Identity),
        v => (v, inst.compressor),
    };
    let p = inst.problem.p();
    let profile = empirical_profile(&kind, p, estimator).map_err(|e| ConfigError::field("algorithm.compressor", e))?;
    let ef = variant.uses_error_feedback();
    let limit = if ef { 1.0 } else { 1.0 / profile.r };
    let alpha_x = inst.hyper.alpha_x.min(limit);
    let alpha_y = inst.hyper.alpha_y.min(limit);
    let n = inst.problem.n();
    let constants = inst.problem.constants();
    let spectral = inst.weights.spectral_info();
    let built = if ef {
        sufficient_params_ef(n, &constants, &spectral, &profile, alpha_x, alpha_y, TauChoice::Midpoint)
    } else {
        sufficient_params(n, &constants, &spectral, &profile, alpha_x, alpha_y, TauChoice::Midpoint)
    };
    let params = built.map_err(|e| e.to_string());
    let oracle_rho = params.as_ref().ok().map(|sp| eigen_radius(&system_matrix(variant, sp)));
    let configured = params.as_ref().ok().map(|sp| {
        let (gamma, eta) = (inst.hyper.gamma, inst.hyper.eta);
        let at = sp.constants.at(gamma, eta);
        let rho = if alpha_x != inst.hyper.alpha_x || alpha_y != inst.hyper.alpha_y {
            Err(format!("alpha * r exceeds 1 for r = {}", profile.r))
        } else {
            let m = if ef { build_b(&at) } else { build_a(&at) };
            m.map(|m| spectral_radius_nonneg(&m).value).map_err(|e| e.to_string())
        };
        ConfiguredPoint {
            gamma,
            eta,
            theta: at.theta(),
            rho,
        }
    });
    Ok(CertifyReport {
        name: cfg.name(),
        variant,
        compressor: kind,
        profile,
        alpha_x,
        alpha_y,
        params,
        oracle_rho,
        configured,
    })
}
