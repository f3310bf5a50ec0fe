use cgt_core::algorithms::{HyperParams, Simulation, Variant};
use cgt_core::analysis::{
    build_a, build_a_shifted, build_b, build_b_shifted, certify, empirical_rate,
    sufficient_params, sufficient_params_ef, ErrorSystemConstants, SufficientParams, TauChoice,
};
use cgt_core::compression::{empirical_profile, CompressorKind, EstimatorConfig};
use cgt_core::linalg::{Matrix, Vector};
use cgt_core::problems::{generate_ridge, RidgeProblem, RidgeSpec};
use cgt_core::topology::{Graph, WeightMatrix};
use proptest::prelude::*;

fn max_modulus(m: &Matrix) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn profile(kind: &str, p: usize) -> cgt_core::compression::CompressorProfile {
    let kind: CompressorKind = kind.parse().unwrap();
    empirical_profile(&kind, p, &EstimatorConfig::default()).unwrap()
}

/// Three agents on a complete graph with `W = J/3` and `kappa` near one.
/// The sufficient conditions give step sizes far enough from zero for a
/// single step to be resolved in double precision.
fn well_conditioned() -> (RidgeProblem, WeightMatrix) {
    let u = vec![vec![0.27, -0.12], vec![-0.06, 0.21], vec![0.15, 0.18]];
    let pb = RidgeProblem::new(u, vec![1.0, -0.5, 0.3], 1.0).unwrap();
    let g = Graph::complete(3).unwrap();
    (pb, WeightMatrix::from_out_degree(&g, &[1.0 / 3.0; 3]).unwrap())
}

#[derive(Debug, Clone, Copy)]
struct Raw {
    n: f64,
    s: f64,
    iw: f64,
    mu: f64,
    l: f64,
    c: f64,
    delta: f64,
    r: f64,
    ax: f64,
    ay: f64,
    gamma: f64,
    eta: f64,
    tau_x: f64,
    tau_y: f64,
}

impl Raw {
    fn constants(&self) -> ErrorSystemConstants {
        ErrorSystemConstants {
            n: self.n as usize,
            s: self.s,
            rho_tilde: 1.0 - self.gamma * self.s,
            norm_i_minus_w: self.iw,
            mu: self.mu,
            l: self.l,
            kappa: self.l / self.mu,
            c: self.c,
            delta: self.delta,
            r: self.r,
            alpha_x: self.ax,
            alpha_y: self.ay,
            gamma: self.gamma,
            eta: self.eta,
            tau_x: self.tau_x,
            tau_y: self.tau_y,
        }
    }
}

/// The C-GT inequalities as derived term by term in the convergence proof.
fn a_oracle(p: &Raw) -> Matrix {
    let Raw { n, s, iw, mu, l, c, delta, r, ax, ay, gamma: g, eta: e, tau_x, tau_y } = *p;
    let w2 = iw * iw;
    let rt = 1.0 - g * s;
    let h = (1.0 + rt * rt) / 2.0;
    let tx = 3.0 * tau_x / (tau_x - 1.0);
    let ty = 3.0 * tau_y / (tau_y - 1.0);
    let c2 = 2.0 * c * w2 / s;
    let c3 = 12.0 * l * l / s;
    let cx = tau_x * (1.0 - ax * r * delta);
    let cy = tau_y * (1.0 - ay * r * delta);
    let l2 = l * l;
    let l4 = l2 * l2;
    let mut a = Matrix::zeros(5, 5);
    a[(0, 0)] = 1.0 - 1.5 * e * mu;
    a[(0, 1)] = 3.0 * e * l2 / (mu * n);
    a[(1, 1)] = h;
    a[(1, 2)] = 2.0 / s * e * e / g;
    a[(1, 3)] = c2 * g;
    a[(2, 0)] = n * c3 * l2 * e * e / g;
    a[(2, 1)] = c3 * l2 * e * e / g + 6.0 * w2 / s * l2 * g;
    a[(2, 2)] = h + 0.5 * c3 * e * e / g;
    a[(2, 3)] = 3.0 * c2 * l2 * g;
    a[(2, 4)] = c2 * g;
    a[(3, 0)] = 2.0 * n * tx * l2 * e * e;
    a[(3, 1)] = tx * w2 * g * g + 2.0 * tx * l2 * e * e;
    a[(3, 2)] = tx * e * e;
    a[(3, 3)] = cx + tx * c * w2 * g * g;
    a[(4, 0)] = 6.0 * n * ty * l4 * e * e;
    a[(4, 1)] = 6.0 * ty * l4 * e * e + 3.0 * ty * w2 * l2 * g * g;
    a[(4, 2)] = ty * w2 * g * g + 3.0 * ty * l2 * e * e;
    a[(4, 3)] = 3.0 * ty * c * w2 * l2 * g * g;
    a[(4, 4)] = cy + ty * c * w2 * g * g;
    a
}

/// The EF-C-GT inequalities, with the accumulator rows appended.
fn b_oracle(p: &Raw) -> Matrix {
    let Raw { n, s, iw, mu, l, delta: dl, ax, ay, gamma: g, eta: e, tau_x, tau_y, .. } = *p;
    let w2 = iw * iw;
    let rt = 1.0 - g * s;
    let h = (1.0 + rt * rt) / 2.0;
    let tx = 3.0 * tau_x / (tau_x - 1.0);
    let ty = 3.0 * tau_y / (tau_y - 1.0);
    let d1 = 2.0 / s;
    let d2 = 2.0 * w2 / s;
    let d3 = tx * w2;
    let d4 = ty * w2;
    let l2 = l * l;
    let l4 = l2 * l2;
    let mut b = Matrix::zeros(7, 7);
    b[(0, 0)] = 1.0 - 1.5 * e * mu;
    b[(0, 1)] = 3.0 * e * l2 / (mu * n);
    b[(1, 1)] = h;
    b[(1, 2)] = d1 * e * e / g;
    b[(1, 3)] = d2 * g;
    b[(1, 5)] = 6.0 * d2 * g / dl;
    b[(2, 0)] = 6.0 * n * d1 * l4 * e * e / g;
    b[(2, 1)] = 3.0 * d2 * l2 * g + 6.0 * d1 * l4 * e * e / g;
    b[(2, 2)] = h + 3.0 * d1 * l2 * e * e / g;
    b[(2, 3)] = 3.0 * d2 * l2 * g;
    b[(2, 4)] = d2 * g;
    b[(2, 5)] = 18.0 * d2 * l2 * g / dl;
    b[(2, 6)] = 6.0 * d2 * g / dl;
    b[(3, 0)] = 2.0 * n * tx * l2 * e * e;
    b[(3, 1)] = d3 * g * g + 2.0 * tx * l2 * e * e;
    b[(3, 2)] = tx * e * e;
    b[(3, 3)] = tau_x * (1.0 - ax * dl) + d3 * g * g;
    b[(3, 5)] = 6.0 * d3 * g * g / dl;
    b[(4, 0)] = 6.0 * n * ty * l4 * e * e;
    b[(4, 1)] = 3.0 * d4 * l2 * g * g + 6.0 * ty * l4 * e * e;
    b[(4, 2)] = 3.0 * ty * l2 * e * e + d4 * g * g;
    b[(4, 3)] = 3.0 * d4 * l2 * g * g;
    b[(4, 4)] = tau_y * (1.0 - ay * dl) + d4 * g * g;
    b[(4, 5)] = 18.0 * d4 * l2 * g * g / dl;
    b[(4, 6)] = 6.0 * d4 * g * g / dl;
    b[(5, 3)] = 2.0 * (1.0 - dl) / dl;
    b[(5, 5)] = 1.0 - dl / 2.0;
    b[(6, 4)] = 2.0 * (1.0 - dl) / dl;
    b[(6, 6)] = 1.0 - dl / 2.0;
    b
}

fn raw() -> impl Strategy<Value = Raw> {
    (
        (2usize..20, 0.01f64..=1.0, 0.0f64..2.0, 0.01f64..1.0, 1.0f64..20.0),
        (0.01f64..1.0, 0.01f64..=1.0, 0.05f64..=1.0, 0.05f64..=1.0),
        (0.01f64..=1.0, 0.0f64..1.0, 1.01f64..3.0, 1.01f64..3.0),
    )
        .prop_map(|((n, s, iw, mu, lf), (c, delta, ax, ay), (gamma, ef, tau_x, tau_y))| {
            let l = mu * lf;
            let cap = (2.0 / (mu + l)).min(1.0 / (3.0 * mu));
            Raw {
                n: n as f64,
                s,
                iw,
                mu,
                l,
                c,
                delta,
                r: 1.0,
                ax,
                ay,
                gamma,
                eta: cap * ef.max(1e-3) * 0.999,
                tau_x,
                tau_y,
            }
        })
}

fn assert_close(m: &Matrix, oracle: &Matrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let (a, b) = (m[(i, j)], oracle[(i, j)]);
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-300), "({i}, {j}): {a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn error_matrices_match_the_derived_inequalities(p in raw()) {
        let k = p.constants();
        let a = build_a(&k).unwrap();
        assert_close(&a, &a_oracle(&p));
        let b = build_b(&k).unwrap();
        assert_close(&b, &b_oracle(&p));
        let eps = Vector::from_fn(5, |i, _| 1.0 + i as f64);
        let direct = a_oracle(&p) * &eps;
        let via = &a * &eps;
        for i in 0..5 {
            prop_assert!((direct[i] - via[i]).abs() <= 1e-12 * direct[i].abs());
        }
    }

    #[test]
    fn shifted_matrices_differ_by_identity(p in raw()) {
        let k = p.constants();
        for (m, d) in [
            (build_a(&k).unwrap(), build_a_shifted(&k).unwrap()),
            (build_b(&k).unwrap(), build_b_shifted(&k).unwrap()),
        ] {
            let back = &d + Matrix::identity(m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    prop_assert!((back[(i, j)] - m[(i, j)]).abs() <= 1e-12 * (1.0 + m[(i, j)]));
                }
            }
        }
    }

    #[test]
    fn a_grows_with_the_variance_constant(p in raw(), extra in 0.0f64..2.0) {
        let lo = build_a(&p.constants()).unwrap();
        let hi_raw = Raw { c: p.c + extra, ..p };
        let hi = build_a(&hi_raw.constants()).unwrap();
        prop_assert!(lo.iter().zip(hi.iter()).all(|(a, b)| a <= b));
        prop_assert!(max_modulus(&lo) <= max_modulus(&hi) * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn contraction_factors_fall_with_delta(p in raw(), d2 in 0.01f64..=1.0) {
        let (d_lo, d_hi) = if d2 < p.delta { (d2, p.delta) } else { (p.delta, d2) };
        let lo = Raw { delta: d_lo, ..p }.constants();
        let hi = Raw { delta: d_hi, ..p }.constants();
        prop_assert!(hi.d_x() <= lo.d_x());
        prop_assert!(hi.d_y() <= lo.d_y());
        prop_assert!(hi.c_x() <= lo.c_x());
        if d_hi > d_lo {
            prop_assert!(hi.d_x() < lo.d_x());
        }
    }

    #[test]
    fn componentwise_test_bounds_the_radius(
        m in (2usize..8).prop_flat_map(|n| prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], n * n)),
        seed_eps in prop::collection::vec(0.1f64..10.0, 8),
    ) {
        let n = (m.len() as f64).sqrt() as usize;
        let mat = Matrix::from_row_slice(n, n, &m);
        let eps: Vec<f64> = seed_eps[..n].to_vec();
        let me = &mat * Vector::from_column_slice(&eps);
        let theta = (0..n).map(|i| me[i] / eps[i]).fold(0.0, f64::max);
        let cert = certify(&mat, &eps, theta).unwrap();
        prop_assert!(cert.componentwise_ok);
        let oracle = max_modulus(&mat);
        prop_assert!(oracle <= theta + 1e-10);
        prop_assert!(cert.rho <= theta + 1e-10);
        prop_assert!(cert.rho >= oracle - 1e-9);
    }
}

fn standard_certificates() -> Vec<(String, SufficientParams, Matrix)> {
    let pb = generate_ridge(&RidgeSpec::standard(13)).unwrap();
    let constants = pb.constants();
    let mut out = Vec::new();
    for directed in [false, true] {
        let w = WeightMatrix::from_out_degree(&Graph::ring(10, directed).unwrap(), &[0.1; 10]).unwrap();
        let info = w.spectral_info();
        for kind in ["identity", "topk:k=1", "quant:b=2,q=inf"] {
            let prof = profile(kind, 20);
            let a = 1.0 / prof.r;
            let sp = sufficient_params(10, &constants, &info, &prof, a, a, TauChoice::Midpoint).unwrap();
            let m = build_a(&sp.constants).unwrap();
            out.push((format!("cgt {kind} directed={directed}"), sp, m));
            let sp = sufficient_params_ef(10, &constants, &info, &prof, 1.0, 1.0, TauChoice::Midpoint).unwrap();
            let m = build_b(&sp.constants).unwrap();
            out.push((format!("efcgt {kind} directed={directed}"), sp, m));
        }
    }
    out
}

#[test]
fn standard_certificates_agree_with_eigensolve() {
    for (name, sp, m) in standard_certificates() {
        let cert = &sp.certificate;
        assert!(cert.verdict(), "{name}");
        let oracle = max_modulus(&m);
        assert!(oracle <= cert.theta + 1e-10, "{name}: {oracle}");
        assert!((cert.rho - oracle).abs() <= 1e-9, "{name}: {} vs {oracle}", cert.rho);
        // Sufficient-condition step sizes respect the step-size cap.
        let k = &sp.constants;
        assert!(sp.eta < (2.0 / (k.mu + k.l)).min(1.0 / (3.0 * k.mu)));
        assert!(sp.gamma > 0.0 && sp.gamma <= 1.0);
    }
}

#[test]
fn one_step_bound_holds_on_certified_runs() {
    let (pb, w) = well_conditioned();
    let info = w.spectral_info();
    for kind in ["identity", "topk:k=1", "normsign:q=inf", "randk:k=1", "quant:b=2,q=inf"] {
        let prof = profile(kind, 2);
        let a = 1.0 / prof.r;
        let sp = sufficient_params(3, &pb.constants(), &info, &prof, a, a, TauChoice::Midpoint).unwrap();
        let am = build_a(&sp.constants).unwrap();
        let kind: CompressorKind = kind.parse().unwrap();
        let hp = HyperParams::new(sp.eta, sp.gamma, a, a);
        let mut sim = Simulation::new(&pb, &w, Variant::CgtEfficient, kind, hp, 1).unwrap();
        let draws = if kind.is_stochastic() { 200 } else { 1 };
        for k in [0u64, 1, 10, 100, 1000] {
            while sim.k() < k {
                sim.step().unwrap();
            }
            let bound = &am * Vector::from_column_slice(&sim.errors().cgt());
            let samples: Vec<[f64; 5]> = (0..draws)
                .map(|d| {
                    let mut next = sim.clone();
                    next.set_seed(1000 + d);
                    next.step().unwrap();
                    next.errors().cgt()
                })
                .collect();
            for i in 0..5 {
                let xs: Vec<f64> = samples.iter().map(|s| s[i]).collect();
                let mean = xs.iter().sum::<f64>() / draws as f64;
                let slack = if draws > 1 {
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
                    3.0 * (var / draws as f64).sqrt()
                } else {
                    0.0
                };
                assert!(mean <= bound[i] + slack, "{kind} k={k} component {i}: {mean} > {}", bound[i]);
            }
        }
    }
}

#[test]
fn certified_run_decays_within_theta() {
    let (pb, w) = well_conditioned();
    let prof = profile("identity", 2);
    let sp = sufficient_params(3, &pb.constants(), &w.spectral_info(), &prof, 1.0, 1.0, TauChoice::Midpoint)
        .unwrap();
    let hp = HyperParams::new(sp.eta, sp.gamma, 1.0, 1.0);
    let run = Simulation::new(&pb, &w, Variant::CgtEfficient, CompressorKind::Identity, hp, 4)
        .unwrap()
        .run(4000, 20)
        .unwrap();
    let fit = empirical_rate(&run.residuals()).unwrap();
    assert!(fit.rate <= sp.certificate.theta, "{} > {}", fit.rate, sp.certificate.theta);
}
