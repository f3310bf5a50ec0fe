//! Named experiment bundles on the standard ridge-regression instance.
//!
//! Every preset uses ten agents on a ring with out-neighbour weight 0.1, the
//! twenty-feature ridge instance with `rho = 0.01` and noise standard
//! deviation 5, and problem seed 13. The reference plots give no
//! iteration counts, so every run defaults to 5000 iterations with a trace
//! row every 10. Rows for LEAD are not included.

use crate::config::{
    AlgorithmSection, ExperimentConfig, HyperSection, OutputSection, PerAgent, ProblemSection,
    TopologyKind, TopologySection,
};

pub const DEFAULT_SEED: u64 = 13;
pub const DEFAULT_ITERATIONS: u64 = 5000;
pub const DEFAULT_TRACE_EVERY: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub runs: Vec<ExperimentConfig>,
}

/// One table row.
#[derive(Debug, Clone, Copy)]
struct Row {
    algorithm: &'static str,
    compressor: &'static str,
    alpha: f64,
    gamma: f64,
    eta: f64,
    beta: f64,
}

const fn row(algorithm: &'static str, compressor: &'static str, alpha: f64, gamma: f64, eta: f64) -> Row {
    Row {
        algorithm,
        compressor,
        alpha,
        gamma,
        eta,
        beta: 1.0,
    }
}

fn config(preset: &str, directed: bool, r: Row) -> ExperimentConfig {
    let n = 10;
    ExperimentConfig {
        topology: TopologySection {
            kind: TopologyKind::Ring,
            n,
            directed,
            p_i: Some(PerAgent::Uniform(0.1)),
            a: None,
        },
        problem: ProblemSection {
            n,
            p: 20,
            rho: 0.01,
            noise_std: 5.0,
            seed: DEFAULT_SEED,
        },
        algorithm: AlgorithmSection {
            name: r.algorithm.into(),
            compressor: r.compressor.into(),
            iterations: DEFAULT_ITERATIONS,
            trace_every: DEFAULT_TRACE_EVERY,
            seed: None,
            execution: Default::default(),
            stop_below: None,
            certify: false,
        },
        hyper: HyperSection {
            eta: r.eta,
            gamma: r.gamma,
            alpha_x: r.alpha,
            alpha_y: r.alpha,
            beta_x: r.beta,
            beta_y: r.beta,
        },
        output: OutputSection {
            dir: None,
            name: Some(format!("{preset}_{}_{}", r.algorithm, short(r.compressor))),
        },
    }
}

fn short(compressor: &str) -> &str {
    compressor.split(':').next().unwrap_or(compressor)
}

const QUANT: &str = "quant:b=2,q=inf";
const TOP1: &str = "topk:k=1";
const RAND1: &str = "randk:k=1";
const NORM_SIGN: &str = "normsign:q=inf";
const RESCALED: &str = "normsign-rescaled:q=inf,r=20";

fn build(name: &'static str, description: &'static str, directed: bool, rows: &[Row]) -> Preset {
    Preset {
        name,
        description,
        runs: rows.iter().map(|r| config(name, directed, *r)).collect(),
    }
}

pub fn presets() -> Vec<Preset> {
    vec![
        build(
            "fig1-cgt",
            "undirected ring, 2-bit quantization: C-GT",
            false,
            &[row("cgt", QUANT, 1.0, 1.0, 0.09)],
        ),
        build(
            "fig2-cgt-directed",
            "directed ring, 2-bit quantization: C-GT against uncompressed GT",
            true,
            &[row("cgt", QUANT, 1.0, 1.0, 0.0047), row("gt", "identity", 1.0, 1.0, 0.0047)],
        ),
        build(
            "fig3a",
            "undirected ring, Top-1: C-GT and EF-C-GT",
            false,
            &[row("cgt", TOP1, 1.0, 0.6, 0.11), row("efcgt", TOP1, 1.0, 0.6, 0.12)],
        ),
        build(
            "fig3b",
            "directed ring, Top-1: C-GT and EF-C-GT",
            true,
            &[row("cgt", TOP1, 1.0, 0.5, 0.00034), row("efcgt", TOP1, 1.0, 1.0, 0.0043)],
        ),
        build(
            "fig4a",
            "undirected ring, Random-1: C-GT and EF-C-GT",
            false,
            &[row("cgt", RAND1, 1.0, 0.1, 0.11), row("efcgt", RAND1, 1.0, 0.1, 0.11)],
        ),
        build(
            "fig4b",
            "directed ring, Random-1: C-GT and EF-C-GT",
            true,
            &[row("cgt", RAND1, 1.0, 0.2, 0.0001), row("efcgt", RAND1, 1.0, 0.3, 0.0012)],
        ),
        build(
            "fig5",
            "directed ring, norm-sign and rescaled norm-sign (r = 20): C-GT and EF-C-GT",
            true,
            &[
                row("cgt", NORM_SIGN, 0.05, 1.0, 0.01),
                Row { beta: 0.01, ..row("efcgt", NORM_SIGN, 0.05, 1.0, 0.02) },
                row("cgt", RESCALED, 1.0, 0.2, 0.0007),
                row("efcgt", RESCALED, 1.0, 0.4, 0.0019),
            ],
        ),
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
