use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cgt_core::compression::EstimatorConfig;
use cgt_harness::certify::certify_config;
use cgt_harness::experiment::{compare, run_experiment, Summary};
use cgt_harness::presets::{preset, presets};
use cgt_harness::trace;
use cgt_harness::verify::{verify_suite, VerifyOptions};
use cgt_harness::{default_output_dir, ConfigError, ExperimentConfig, HarnessError, OUTPUT_DIR_ENV};
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(version, about = "Compressed gradient tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one config and write its trace.
    Run {
        config: PathBuf,
        /// Output directory [default: $CGT_OUTPUT_DIR or ./out]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset, or list presets when no name is given.
    Preset {
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the preset's configs as TOML instead of running them.
        #[arg(long)]
        print: bool,
    },
    /// Run configs on the same problem and merge their residual traces.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Write the merged CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant checks.
    Verify {
        #[arg(long, default_value_t = cgt_harness::presets::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Construct and check certified parameters for a config.
    Certify { config: PathBuf },
}

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(default_output_dir)
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run_preset(name: &str, out: Option<PathBuf>, print: bool) -> Result<(), HarnessError> {
    let p = preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    if print {
        for (i, cfg) in p.runs.iter().enumerate() {
            if i > 0 {
                println!();
            }
            print!("{}", cfg.to_toml());
        }
        return Ok(());
    }
    let dir = out_dir(out);
    let cmp = compare(&p.runs)?;
    for (cfg, run) in p.runs.iter().zip(&cmp.runs) {
        let path = dir.join(format!("{}.csv", cfg.name()));
        write(&path, &trace::render(&run.trace))?;
        let mut s = Summary::of(&cfg.name(), run);
        s.trace_path = Some(path);
        println!("{s}");
    }
    if p.runs.len() > 1 {
        let path = dir.join(format!("{name}.csv"));
        write(&path, &cmp.render())?;
        println!("{name}: overlay {}", path.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg, &out_dir(out))?;
            println!("{summary}");
            if let Some(p) = summary.certificate_path {
                println!("certificate: {}", p.display());
            }
        }
        Command::Preset { name: None, .. } => {
            for p in presets() {
                println!("{:18} {} ({} runs)", p.name, p.description, p.runs.len());
            }
            println!("LEAD rows of the parameter tables are not included.");
            println!("Outputs go to --out, else ${OUTPUT_DIR_ENV}, else ./out.");
        }
        Command::Preset { name: Some(name), out, print } => run_preset(&name, out, print)?,
        Command::Compare { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| ExperimentConfig::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let cmp = compare(&cfgs)?;
            for ((key, run), hit) in cmp.keys.iter().zip(&cmp.runs).zip(cmp.first_below(1e-6)) {
                let reached = hit.map_or("never".to_string(), |k| k.to_string());
                eprintln!("{}; residual 1e-6 reached at k = {reached}", Summary::of(key, run));
            }
            match out {
                Some(path) => write(&path, &cmp.render())?,
                None => print!("{}", cmp.render()),
            }
        }
        Command::Verify { seed, trials } => {
            let report = verify_suite(&VerifyOptions {
                seed,
                trials,
                ..VerifyOptions::default()
            });
            println!("{report}");
            if !report.passed() {
                return Err(HarnessError::Verification("see failed checks above".into()));
            }
        }
        Command::Certify { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = certify_config(&cfg, &EstimatorConfig::default())?;
            print!("{}", report.render());
            if !report.verdict() {
                return Err(HarnessError::Verification("parameters not certified".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
