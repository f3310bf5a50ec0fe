use cgt_harness::config::ExperimentConfig;
use cgt_harness::experiment::{compare, run_experiment, simulate};
use cgt_harness::presets::preset;
use cgt_harness::trace::HEADER;
use cgt_harness::HarnessError;
use cgt_core::Execution;

fn fig3b() -> (ExperimentConfig, ExperimentConfig) {
    let mut runs = preset("fig3b").unwrap().runs;
    let ef = runs.pop().unwrap();
    (runs.pop().unwrap(), ef)
}

fn short(mut cfg: ExperimentConfig, iterations: u64, every: u64) -> ExperimentConfig {
    cfg.algorithm.iterations = iterations;
    cfg.algorithm.trace_every = every;
    cfg
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn trace_has_header_and_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(fig3b().1, 50, 1);
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let csv = std::fs::read_to_string(summary.trace_path.as_ref().unwrap()).unwrap();
    assert_eq!(csv.lines().next().unwrap(), HEADER);
    let rows = rows(&csv);
    assert_eq!(rows.len(), 51);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 10);
        assert_eq!(row[0], k.to_string());
        // Seventeen significant digits.
        let mantissa = row[1].split('e').next().unwrap();
        assert_eq!(mantissa.replace(['.', '-'], "").len(), 17, "{}", row[1]);
    }
    assert_eq!(summary.iterations, 50);
    assert_eq!(summary.final_residual, rows[50][1].parse::<f64>().unwrap());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in preset("fig4b").unwrap().runs.into_iter().chain(preset("fig2-cgt-directed").unwrap().runs) {
        let cfg = short(cfg, 300, 7);
        let a = run_experiment(&cfg, dir.path()).unwrap();
        let first = std::fs::read(a.trace_path.as_ref().unwrap()).unwrap();
        let b = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(first, std::fs::read(b.trace_path.as_ref().unwrap()).unwrap());
        let mut seq = cfg.clone();
        seq.algorithm.execution = Execution::Sequential;
        seq.output.name = Some("sequential".into());
        let mut par = cfg.clone();
        par.algorithm.execution = Execution::Parallel;
        par.output.name = Some("parallel".into());
        let s = run_experiment(&seq, dir.path()).unwrap();
        let p = run_experiment(&par, dir.path()).unwrap();
        assert_eq!(first, std::fs::read(s.trace_path.unwrap()).unwrap());
        assert_eq!(first, std::fs::read(p.trace_path.unwrap()).unwrap());
    }
}

#[test]
fn total_bits_count_every_message() {
    // Top-1 on 20 coordinates sends one double and a 5-bit index.
    let top1 = 64 + 5;
    // 2-bit quantization: the norm, a sign bit and two level bits per entry.
    let quant = 64 + 20 + 2 * 20;
    let (cgt, ef) = fig3b();
    let fig2 = preset("fig2-cgt-directed").unwrap().runs;
    for (cfg, per_round) in [
        (cgt, 10 * 2 * top1),
        (ef, 10 * 4 * top1),
        (fig2[0].clone(), 10 * 2 * quant),
        (fig2[1].clone(), 10 * 2 * 64 * 20),
    ] {
        let run = simulate(&short(cfg, 120, 40)).unwrap();
        assert_eq!(run.total_bits(), 120 * per_round as u64);
        for t in &run.trace {
            assert_eq!(t.bits_cumulative, t.k * per_round as u64);
        }
    }
}

#[test]
fn divergence_keeps_the_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cgt, ef) = fig3b();
    cgt.hyper = ef.hyper.clone();
    cgt.algorithm.iterations = 20_000;
    let err = run_experiment(&cgt, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    match err {
        HarnessError::Diverged { k, residual, partial, trace_path } => {
            assert!(k < 20_000 && residual > 1e12);
            let csv = std::fs::read_to_string(trace_path.unwrap()).unwrap();
            assert_eq!(rows(&csv).len(), partial.trace.len());
            assert_eq!(partial.trace.last().unwrap().k, k);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn certificate_report_is_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(fig3b().0, 10, 10);
    cfg.algorithm.certify = true;
    let s = run_experiment(&cfg, dir.path()).unwrap();
    let report = std::fs::read_to_string(s.certificate_path.unwrap()).unwrap();
    assert!(report.contains("verdict = certified"), "{report}");
    assert!(report.contains("configured_rho"), "{report}");
}

#[test]
fn compare_aligns_runs_on_the_same_problem() {
    let (cgt, ef) = fig3b();
    let cgt = short(cgt, 100, 10);
    let ef = short(ef, 100, 25);
    let cmp = compare(&[cgt.clone(), ef.clone()]).unwrap();
    let csv = cmp.render();
    assert_eq!(csv.lines().next().unwrap(), "k,cgt[topk:k=1],efcgt[topk:k=1]");
    let rows = rows(&csv);
    // Union of multiples of 10 and of 25 up to 100.
    assert_eq!(rows.len(), 13);
    assert_eq!(rows[1], vec!["10".to_string(), rows[1][1].clone(), String::new()]);
    assert_eq!(rows[3], vec!["25".to_string(), String::new(), rows[3][2].clone()]);
    let at_50 = &rows[6];
    assert_eq!(at_50[0], "50");
    let ef_run = simulate(&ef).unwrap();
    assert_eq!(at_50[2].parse::<f64>().unwrap(), ef_run.trace[2].residual);

    // A single config passes straight through.
    let solo = compare(std::slice::from_ref(&cgt)).unwrap().render();
    assert_eq!(solo, cgt_harness::trace::render(&simulate(&cgt).unwrap().trace));
}

#[test]
fn compare_refuses_different_problems() {
    let (cgt, mut ef) = fig3b();
    ef.problem.seed = 14;
    let err = compare(&[cgt.clone(), ef]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("problem"), "{err}");

    let mut undirected = cgt.clone();
    undirected.topology.directed = false;
    assert!(compare(&[cgt.clone(), undirected]).is_err());
    assert!(compare(&[cgt.clone(), cgt]).is_err());
}
