//! Experiment configuration files.
//!
//! A config is a small TOML document with one table per concern:
//!
//! ```toml
//! [topology]
//! kind = "ring"
//! n = 10
//! directed = true
//! p_i = 0.1
//!
//! [problem]
//! n = 10
//! p = 20
//! rho = 0.01
//! noise_std = 5.0
//! seed = 13
//!
//! [algorithm]
//! name = "cgt"
//! compressor = "quant:b=2,q=inf"
//! iterations = 5000
//! trace_every = 10
//!
//! [hyper]
//! eta = 0.0047
//! gamma = 1.0
//! alpha_x = 1.0
//! alpha_y = 1.0
//! ```

use std::path::{Path, PathBuf};

use cgt_core::algorithms::{HyperParams, Variant};
use cgt_core::compression::CompressorKind;
use cgt_core::problems::{generate_ridge, RidgeProblem, RidgeSpec, TruthLayout};
use cgt_core::topology::{Graph, WeightMatrix};
use cgt_core::Execution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
    #[error("unknown preset {0:?}; run `cgt preset` for the list")]
    UnknownPreset(String),
    #[error("cannot merge runs: {0}")]
    Mismatch(String),
}

impl ConfigError {
    pub(crate) fn field(field: &str, reason: impl ToString) -> Self {
        ConfigError::Field {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Ring,
    Complete,
}

/// `p_i` as one value for every agent or a list with one entry per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Uniform(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyKind,
    pub n: usize,
    #[serde(default)]
    pub directed: bool,
    /// Out-neighbour weight; the remainder goes on the diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_i: Option<PerAgent>,
    /// Laplacian step for `W = I - a L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    /// One of `gt`, `cgt`, `cgt-ref`, `efcgt`, `efcgt-ref`.
    pub name: String,
    #[serde(default = "identity")]
    pub compressor: String,
    pub iterations: u64,
    #[serde(default = "one")]
    pub trace_every: u64,
    /// Seed for the initial point and the compression streams. Defaults to
    /// the problem seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub execution: Execution,
    /// Stop once the residual falls to this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_below: Option<f64>,
    /// Also write a certificate report.
    #[serde(default)]
    pub certify: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    pub eta: f64,
    #[serde(default = "unit")]
    pub gamma: f64,
    #[serde(default = "unit")]
    pub alpha_x: f64,
    #[serde(default = "unit")]
    pub alpha_y: f64,
    #[serde(default = "unit")]
    pub beta_x: f64,
    #[serde(default = "unit")]
    pub beta_y: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File stem for the trace and report. Defaults to
    /// `<algorithm>_<compressor>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn identity() -> String {
    "identity".into()
}

fn one() -> u64 {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySection,
    pub problem: ProblemSection,
    pub algorithm: AlgorithmSection,
    pub hyper: HyperSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A validated config with everything needed to simulate.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: RidgeProblem,
    pub weights: WeightMatrix,
    pub variant: Variant,
    pub compressor: CompressorKind,
    pub hyper: HyperParams,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::parse_named(text, "<config>")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_named(&text, &path.display().to_string())
    }

    fn parse_named(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn variant(&self) -> Result<Variant, ConfigError> {
        self.algorithm
            .name
            .parse()
            .map_err(|e| ConfigError::field("algorithm.name", e))
    }

    pub fn compressor(&self) -> Result<CompressorKind, ConfigError> {
        let kind: CompressorKind = self
            .algorithm
            .compressor
            .parse()
            .map_err(|e| ConfigError::field("algorithm.compressor", e))?;
        kind.validate(self.problem.p)
            .map_err(|e| ConfigError::field("algorithm.compressor", e))?;
        Ok(kind)
    }

    pub fn seed(&self) -> u64 {
        self.algorithm.seed.unwrap_or(self.problem.seed)
    }

    pub fn hyper_params(&self) -> HyperParams {
        let h = &self.hyper;
        HyperParams::new(h.eta, h.gamma, h.alpha_x, h.alpha_y).with_beta(h.beta_x, h.beta_y)
    }

    /// File stem for outputs.
    pub fn name(&self) -> String {
        match &self.output.name {
            Some(n) => n.clone(),
            None => {
                let comp: String = self
                    .algorithm
                    .compressor
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                    .collect();
                format!("{}_{comp}", self.algorithm.name)
            }
        }
    }

    /// Check every field that can be checked without building the problem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        let pr = &self.problem;
        if t.n != pr.n {
            return Err(ConfigError::field(
                "problem.n",
                format!("{} differs from topology.n = {}", pr.n, t.n),
            ));
        }
        match (&t.p_i, t.a) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::field("topology", "set either p_i or a, not both"))
            }
            (None, None) => return Err(ConfigError::field("topology", "one of p_i or a is required")),
            (Some(PerAgent::List(v)), None) if v.len() != t.n => {
                return Err(ConfigError::field(
                    "topology.p_i",
                    format!("{} weights for {} agents", v.len(), t.n),
                ))
            }
            _ => {}
        }
        if t.kind == TopologyKind::Complete && t.directed {
            return Err(ConfigError::field("topology.directed", "complete graphs are undirected"));
        }
        if pr.p == 0 {
            return Err(ConfigError::field("problem.p", "must be positive"));
        }
        if !(pr.rho > 0.0 && pr.rho.is_finite()) {
            return Err(ConfigError::field("problem.rho", format!("{} must be positive", pr.rho)));
        }
        if !(pr.noise_std >= 0.0 && pr.noise_std.is_finite()) {
            return Err(ConfigError::field(
                "problem.noise_std",
                format!("{} must be nonnegative", pr.noise_std),
            ));
        }
        self.variant()?;
        self.compressor()?;
        if self.algorithm.iterations == 0 {
            return Err(ConfigError::field("algorithm.iterations", "must be positive"));
        }
        if self.algorithm.trace_every == 0 {
            return Err(ConfigError::field("algorithm.trace_every", "must be positive"));
        }
        if let Some(f) = self.algorithm.stop_below {
            if !(f >= 0.0) {
                return Err(ConfigError::field("algorithm.stop_below", "must be nonnegative"));
            }
        }
        self.hyper_params()
            .validate(t.n)
            .map_err(|e| ConfigError::field("hyper", e))?;
        Ok(())
    }

    pub fn graph(&self) -> Result<Graph, ConfigError> {
        let t = &self.topology;
        match t.kind {
            TopologyKind::Ring => Graph::ring(t.n, t.directed),
            TopologyKind::Complete => Graph::complete(t.n),
        }
        .map_err(|e| ConfigError::field("topology", e))
    }

    pub fn weights(&self) -> Result<WeightMatrix, ConfigError> {
        let g = self.graph()?;
        let t = &self.topology;
        let w = match (&t.p_i, t.a) {
            (Some(PerAgent::Uniform(v)), _) => WeightMatrix::from_out_degree(&g, &vec![*v; t.n]),
            (Some(PerAgent::List(v)), _) => WeightMatrix::from_out_degree(&g, v),
            (None, Some(a)) => WeightMatrix::from_laplacian(&g, a),
            (None, None) => return Err(ConfigError::field("topology", "one of p_i or a is required")),
        };
        w.map_err(|e| ConfigError::field("topology", e))
    }

    pub fn ridge_spec(&self) -> RidgeSpec {
        let pr = &self.problem;
        RidgeSpec {
            n: pr.n,
            p: pr.p,
            rho: pr.rho,
            noise_std: pr.noise_std,
            seed: pr.seed,
            truth: TruthLayout::EvenLevels,
        }
    }

    /// Validate and build the problem, weights and parameters.
    pub fn instantiate(&self) -> Result<Instance, ConfigError> {
        self.validate()?;
        let weights = self.weights()?;
        let problem = generate_ridge(&self.ridge_spec()).map_err(|e| ConfigError::field("problem", e))?;
        Ok(Instance {
            problem,
            weights,
            variant: self.variant()?,
            compressor: self.compressor()?,
            hyper: self.hyper_params(),
            seed: self.seed(),
        })
    }
}
