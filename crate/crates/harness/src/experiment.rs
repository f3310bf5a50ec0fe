//! Running configs and writing their outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use cgt_core::algorithms::{AlgorithmError, RunResult, Simulation};
use cgt_core::analysis::{empirical_rate, RateFit};
use cgt_core::compression::EstimatorConfig;

use crate::certify::certify_config;
use crate::config::{ConfigError, ExperimentConfig};
use crate::trace::{self, field, float};
use crate::HarnessError;

/// Simulate a config in memory. On divergence the error carries the
/// partial result.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    let inst = cfg.instantiate()?;
    let mut sim = Simulation::new(
        &inst.problem,
        &inst.weights,
        inst.variant,
        inst.compressor,
        inst.hyper,
        inst.seed,
    )
    .map_err(|e| ConfigError::field("hyper", e))?
    .execution(cfg.algorithm.execution);
    if let Some(f) = cfg.algorithm.stop_below {
        sim = sim.stop_below(f);
    }
    sim.run(cfg.algorithm.iterations, cfg.algorithm.trace_every)
        .map_err(|e| match e {
            AlgorithmError::Diverged { k, residual, partial } => HarnessError::Diverged {
                k,
                residual,
                partial,
                trace_path: None,
            },
            other => HarnessError::Config(ConfigError::field("algorithm", other)),
        })
}

/// The one-line result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub iterations: u64,
    pub final_residual: f64,
    pub fit: Option<RateFit>,
    pub total_bits: u64,
    pub trace_path: Option<PathBuf>,
    pub certificate_path: Option<PathBuf>,
}

impl Summary {
    pub fn of(name: &str, run: &RunResult) -> Self {
        let last = run.trace.last().expect("trace holds the initial state");
        Self {
            name: name.to_string(),
            iterations: last.k,
            final_residual: last.residual,
            fit: empirical_rate(&run.residuals()).ok(),
            total_bits: run.total_bits(),
            trace_path: None,
            certificate_path: None,
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: k={} residual={:.3e} ",
            self.name, self.iterations, self.final_residual
        )?;
        match &self.fit {
            Some(fit) => write!(f, "rate={:.8} r2={:.4} ", fit.rate, fit.r_squared)?,
            None => write!(f, "rate=n/a ")?,
        }
        write!(f, "bits={}", self.total_bits)?;
        if let Some(p) = &self.trace_path {
            write!(f, " trace={}", p.display())?;
        }
        Ok(())
    }
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Resolve the output directory: the config's own, else `default`.
pub fn output_dir(cfg: &ExperimentConfig, default: &Path) -> PathBuf {
    cfg.output.dir.clone().unwrap_or_else(|| default.to_path_buf())
}

/// Run a config, write `<name>.csv` (and `<name>.cert.txt` when requested)
/// under the output directory, and return the summary. A diverging run
/// still writes its partial trace.
pub fn run_experiment(cfg: &ExperimentConfig, default_dir: &Path) -> Result<Summary, HarnessError> {
    cfg.validate()?;
    let dir = output_dir(cfg, default_dir);
    std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    let name = cfg.name();
    let trace_path = dir.join(format!("{name}.csv"));
    let mut certificate_path = None;
    if cfg.algorithm.certify {
        let report = certify_config(cfg, &EstimatorConfig::default())?;
        let path = dir.join(format!("{name}.cert.txt"));
        write(&path, &report.render())?;
        certificate_path = Some(path);
    }
    let run = match simulate(cfg) {
        Ok(run) => run,
        Err(HarnessError::Diverged { k, residual, partial, .. }) => {
            write(&trace_path, &trace::render(&partial.trace))?;
            return Err(HarnessError::Diverged {
                k,
                residual,
                partial,
                trace_path: Some(trace_path),
            });
        }
        Err(e) => return Err(e),
    };
    write(&trace_path, &trace::render(&run.trace))?;
    let mut summary = Summary::of(&name, &run);
    summary.trace_path = Some(trace_path);
    summary.certificate_path = certificate_path;
    Ok(summary)
}

/// Several runs on one problem, merged for overlay plotting.
#[derive(Debug, Clone)]
pub struct Comparison {
    /// `(algorithm, compressor)` labels in config order.
    pub keys: Vec<String>,
    pub runs: Vec<RunResult>,
}

impl Comparison {
    /// First traced iteration with residual at or below `level`.
    pub fn first_below(&self, level: f64) -> Vec<Option<u64>> {
        self.runs
            .iter()
            .map(|r| r.trace.iter().find(|t| t.residual <= level).map(|t| t.k))
            .collect()
    }

    /// One `k` column and one residual column per run. Rows cover the union
    /// of traced iterations; a run without a row at some `k` leaves the cell
    /// empty. A single run is passed through in the full trace schema.
    pub fn render(&self) -> String {
        if self.runs.len() == 1 {
            return trace::render(&self.runs[0].trace);
        }
        let mut ks: Vec<u64> = self.runs.iter().flat_map(|r| r.trace.iter().map(|t| t.k)).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut out = String::from("k");
        for key in &self.keys {
            out.push(',');
            out.push_str(&field(key));
        }
        out.push('\n');
        let mut cursors = vec![0usize; self.runs.len()];
        for k in ks {
            out.push_str(&k.to_string());
            for (run, c) in self.runs.iter().zip(cursors.iter_mut()) {
                out.push(',');
                if let Some(t) = run.trace.get(*c).filter(|t| t.k == k) {
                    out.push_str(&float(t.residual));
                    *c += 1;
                }
            }
            out.push('\n');
        }
        out
    }
}

/// The comparison key for a config.
pub fn key(cfg: &ExperimentConfig) -> String {
    format!("{}[{}]", cfg.algorithm.name, cfg.algorithm.compressor)
}

fn check_comparable(cfgs: &[ExperimentConfig]) -> Result<(), ConfigError> {
    let Some(first) = cfgs.first() else {
        return Err(ConfigError::Mismatch("no configs given".into()));
    };
    for (i, c) in cfgs.iter().enumerate().skip(1) {
        if c.problem != first.problem {
            return Err(ConfigError::Mismatch(format!(
                "config {i} uses problem {:?}, config 0 uses {:?}",
                c.problem, first.problem
            )));
        }
        if c.topology != first.topology {
            return Err(ConfigError::Mismatch(format!(
                "config {i} uses topology {:?}, config 0 uses {:?}",
                c.topology, first.topology
            )));
        }
    }
    let keys: Vec<String> = cfgs.iter().map(key).collect();
    for (i, k) in keys.iter().enumerate() {
        if keys[..i].contains(k) {
            return Err(ConfigError::Mismatch(format!("duplicate run key {k}")));
        }
    }
    Ok(())
}

/// Run configs that share a problem and topology. Runs are independent and
/// execute concurrently with the `parallel` feature.
pub fn compare(cfgs: &[ExperimentConfig]) -> Result<Comparison, HarnessError> {
    check_comparable(cfgs)?;
    for c in cfgs {
        c.validate()?;
    }
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<RunResult, HarnessError>> = {
        use rayon::prelude::*;
        cfgs.par_iter().map(simulate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<RunResult, HarnessError>> = cfgs.iter().map(simulate).collect();
    Ok(Comparison {
        keys: cfgs.iter().map(key).collect(),
        runs: runs.into_iter().collect::<Result<_, _>>()?,
    })
}
