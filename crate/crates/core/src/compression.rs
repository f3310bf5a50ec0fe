//! Compression operators, their `(C, delta, r)` profiles, and Monte Carlo
//! estimators of the variance and contraction bounds.
//!
//! Every operator maps `x ∈ ℝ^p` to a vector of the same length. The zero
//! vector always maps to zero and `sign(0) = 0`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_range, Execution};
use crate::linalg::{dist_sq, norm_sq};
use crate::rng::RngStream;

/// Bits used for one transmitted real number.
pub const FLOAT_BITS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompressionError {
    #[error("k = {k} must satisfy 1 <= k <= p = {p}")]
    BadK { k: usize, p: usize },
    #[error("quantizer needs 1 <= b <= 52 bits, got {0}")]
    BadBits(u32),
    #[error("rescaling factor r = {0} must be positive and finite")]
    BadScale(f64),
    #[error("input coordinate {index} is {value}")]
    NonFinite { index: usize, value: f64 },
    #[error("vector has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("cannot parse compressor {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormIndex {
    One,
    Two,
    Inf,
}

impl NormIndex {
    pub fn norm(self, x: &[f64]) -> f64 {
        match self {
            NormIndex::One => x.iter().map(|v| v.abs()).sum(),
            NormIndex::Two => norm_sq(x).sqrt(),
            NormIndex::Inf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

impl fmt::Display for NormIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormIndex::One => "1",
            NormIndex::Two => "2",
            NormIndex::Inf => "inf",
        })
    }
}

impl FromStr for NormIndex {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1" => Ok(NormIndex::One),
            "2" => Ok(NormIndex::Two),
            "inf" | "∞" => Ok(NormIndex::Inf),
            other => Err(format!("norm index must be 1, 2 or inf, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CompressorKind {
    Identity,
    /// Unbiased `b`-bit quantization relative to the `q`-norm.
    Quantize { b: u32, q: NormIndex },
    TopK { k: usize },
    RandK { k: usize },
    /// `||x||_q sign(x)`.
    NormSign { q: NormIndex },
    /// `||x||_q sign(x) / r`.
    RescaledNormSign { q: NormIndex, r: f64 },
}

impl CompressorKind {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, CompressorKind::Quantize { .. } | CompressorKind::RandK { .. })
    }

    /// Check the parameters against dimension `p`.
    pub fn validate(&self, p: usize) -> Result<(), CompressionError> {
        match *self {
            CompressorKind::TopK { k } | CompressorKind::RandK { k } if k == 0 || k > p => {
                Err(CompressionError::BadK { k, p })
            }
            CompressorKind::Quantize { b, .. } if !(1..=52).contains(&b) => {
                Err(CompressionError::BadBits(b))
            }
            CompressorKind::RescaledNormSign { r, .. } if !(r > 0.0 && r.is_finite()) => {
                Err(CompressionError::BadScale(r))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CompressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressorKind::Identity => write!(f, "identity"),
            CompressorKind::Quantize { b, q } => write!(f, "quant:b={b},q={q}"),
            CompressorKind::TopK { k } => write!(f, "topk:k={k}"),
            CompressorKind::RandK { k } => write!(f, "randk:k={k}"),
            CompressorKind::NormSign { q } => write!(f, "normsign:q={q}"),
            CompressorKind::RescaledNormSign { q, r } => {
                write!(f, "normsign-rescaled:q={q},r={r}")
            }
        }
    }
}

impl FromStr for CompressorKind {
    type Err = CompressionError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let fail = |reason: String| CompressionError::Parse {
            input: input.to_string(),
            reason,
        };
        let s = input.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = std::collections::BTreeMap::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| fail(format!("expected key=value, got {part:?}")))?;
            if params.insert(k.trim(), v.trim()).is_some() {
                return Err(fail(format!("duplicate key {k:?}")));
            }
        }
        let mut take = |key: &str| {
            params
                .remove(key)
                .ok_or_else(|| fail(format!("missing parameter {key:?}")))
        };
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|e| fail(format!("{v:?} is not an integer: {e}")))
        };
        let kind = match name.trim() {
            "identity" => CompressorKind::Identity,
            "quant" => {
                let b = int(take("b")?)? as u32;
                let q = take("q")?.parse().map_err(fail)?;
                CompressorKind::Quantize { b, q }
            }
            "topk" => CompressorKind::TopK { k: int(take("k")?)? },
            "randk" => CompressorKind::RandK { k: int(take("k")?)? },
            "normsign" => CompressorKind::NormSign {
                q: take("q")?.parse().map_err(fail)?,
            },
            "normsign-rescaled" => {
                let q = take("q")?.parse().map_err(fail)?;
                let r_str = take("r")?;
                let r = r_str
                    .parse::<f64>()
                    .map_err(|e| fail(format!("{r_str:?} is not a number: {e}")))?;
                CompressorKind::RescaledNormSign { q, r }
            }
            other => return Err(fail(format!("unknown compressor {other:?}"))),
        };
        if let Some((k, _)) = params.into_iter().next() {
            return Err(fail(format!("unexpected parameter {k:?}")));
        }
        if let CompressorKind::Quantize { b, .. } = kind {
            if b == 0 {
                return Err(CompressionError::BadBits(0));
            }
        }
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedMessage {
    pub payload: Vec<f64>,
    pub bit_cost: u64,
}

/// Bits transmitted for one compressed vector of length `p`.
pub fn bit_cost(kind: &CompressorKind, p: usize) -> u64 {
    let p64 = p as u64;
    match *kind {
        CompressorKind::Identity => FLOAT_BITS * p64,
        CompressorKind::Quantize { b, .. } => FLOAT_BITS + p64 + u64::from(b) * p64,
        CompressorKind::TopK { k } | CompressorKind::RandK { k } => {
            k as u64 * (FLOAT_BITS + index_bits(p))
        }
        CompressorKind::NormSign { .. } | CompressorKind::RescaledNormSign { .. } => {
            FLOAT_BITS + p64
        }
    }
}

/// `ceil(log2 p)`, the bits needed to address one of `p` coordinates.
fn index_bits(p: usize) -> u64 {
    if p <= 1 {
        0
    } else {
        u64::from(usize::BITS - (p - 1).leading_zeros())
    }
}

pub fn compress(
    kind: &CompressorKind,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<CompressedMessage, CompressionError> {
    let mut payload = vec![0.0; x.len()];
    compress_into(kind, x, rng, &mut payload)?;
    Ok(CompressedMessage {
        payload,
        bit_cost: bit_cost(kind, x.len()),
    })
}

/// As [`compress`], writing the payload into `out`.
pub fn compress_into(
    kind: &CompressorKind,
    x: &[f64],
    rng: &mut RngStream,
    out: &mut [f64],
) -> Result<(), CompressionError> {
    let p = x.len();
    if out.len() != p {
        return Err(CompressionError::Length {
            expected: p,
            got: out.len(),
        });
    }
    kind.validate(p)?;
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(CompressionError::NonFinite {
            index,
            value: x[index],
        });
    }
    match *kind {
        CompressorKind::Identity => out.copy_from_slice(x),
        CompressorKind::Quantize { b, q } => {
            // Uniforms are drawn for every coordinate so the stream position
            // never depends on the data.
            let u: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            quantize_with(b, q, x, &u, out);
        }
        CompressorKind::TopK { k } => {
            out.fill(0.0);
            for i in top_k_indices(x, k) {
                out[i] = x[i];
            }
        }
        CompressorKind::RandK { k } => {
            out.fill(0.0);
            for i in index::sample(rng, p, k).into_iter() {
                out[i] = x[i];
            }
        }
        CompressorKind::NormSign { q } => norm_sign(q, 1.0, x, out),
        CompressorKind::RescaledNormSign { q, r } => norm_sign(q, r, x, out),
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The quantizer with an explicit perturbation vector `u ∈ [0,1)^p`.
pub(crate) fn quantize_with(b: u32, q: NormIndex, x: &[f64], u: &[f64], out: &mut [f64]) {
    let norm = q.norm(x);
    if norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let levels = 2f64.powi(b as i32 - 1);
    let scale = norm / levels;
    for ((o, &xi), &ui) in out.iter_mut().zip(x).zip(u) {
        *o = scale * sign(xi) * (levels * xi.abs() / norm + ui).floor();
    }
}

fn norm_sign(q: NormIndex, r: f64, x: &[f64], out: &mut [f64]) {
    let magnitude = q.norm(x) / r;
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = magnitude * sign(xi);
    }
}

/// Indices of the `k` largest magnitudes; ties go to the lowest index.
pub fn top_k_indices(x: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Empirical,
}

/// Constants of the general compression assumption: `E||C(x) - x||² <= C||x||²`
/// and `E||C(x)/r - x||² <= (1 - delta)||x||²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorProfile {
    pub c: f64,
    pub delta: f64,
    pub r: f64,
    pub provenance: Provenance,
}

impl CompressorProfile {
    /// Profile implied by a variance ratio alone. For `C < 1` the operator is
    /// contractive with `r = 1`, `delta = 1 - C`; otherwise the unbiased
    /// reading `r = C + 1`, `delta = 1 / (C + 1)` is used, which is only
    /// valid for unbiased operators.
    pub fn from_variance_ratio(c: f64, provenance: Provenance) -> Self {
        if c < 1.0 {
            Self {
                c,
                delta: 1.0 - c,
                r: 1.0,
                provenance,
            }
        } else {
            Self {
                c,
                delta: 1.0 / (c + 1.0),
                r: c + 1.0,
                provenance,
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        self.c >= 0.0 && self.delta > 0.0 && self.delta <= 1.0 && self.r > 0.0
    }
}

/// Closed-form values for norm-sign with `r = p`, as `(C, delta)`.
fn norm_sign_table(q: NormIndex, p: usize) -> (f64, f64) {
    let pf = p as f64;
    match q {
        NormIndex::One => ((pf - 1.0).powi(2), 1.0 / pf),
        NormIndex::Two => (pf - 1.0, 1.0 / pf),
        NormIndex::Inf => (pf - 1.0, 1.0 / (pf * pf)),
    }
}

/// Closed-form profile where one is known. The quantizer has none and
/// returns `None`; use [`empirical_profile`] for it.
pub fn analytic_profile(kind: &CompressorKind, p: usize) -> Option<CompressorProfile> {
    let profile = |c, delta, r| CompressorProfile {
        c,
        delta,
        r,
        provenance: Provenance::Analytic,
    };
    match *kind {
        CompressorKind::Identity => Some(profile(0.0, 1.0, 1.0)),
        CompressorKind::TopK { k } | CompressorKind::RandK { k } => {
            let delta = k as f64 / p as f64;
            Some(profile(1.0 - delta, delta, 1.0))
        }
        CompressorKind::NormSign { q } => {
            let (c, delta) = norm_sign_table(q, p);
            Some(profile(c, delta, p as f64))
        }
        // Dividing by r = p turns the table's contraction into a plain
        // contractive operator.
        CompressorKind::RescaledNormSign { q, r } if r == p as f64 => {
            let (_, delta) = norm_sign_table(q, p);
            Some(profile(1.0 - delta, delta, 1.0))
        }
        CompressorKind::RescaledNormSign { .. } | CompressorKind::Quantize { .. } => None,
    }
}

/// Settings shared by the Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Number of random unit-norm inputs.
    pub trials: usize,
    /// Draws of the operator per input, for stochastic kinds.
    pub inner: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            inner: 64,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    /// Largest per-input mean ratio.
    pub max_ratio: f64,
    /// Standard error of the mean at the maximizing input (0 when exact).
    pub std_error: f64,
    /// Average ratio over all inputs.
    pub mean_ratio: f64,
    pub trials: usize,
}

/// Family of the `t`-th test input. Cycling through families makes sure
/// inputs near the extremal cases are always present.
fn sample_input(p: usize, t: usize, rng: &mut RngStream) -> Vec<f64> {
    let gauss = |rng: &mut RngStream| -> f64 { StandardNormal.sample(rng) };
    let mut x = vec![0.0; p];
    match t % 5 {
        0 => x.iter_mut().for_each(|v| *v = gauss(rng)),
        1 => {
            let support = rng.random_range(1..=p.div_ceil(2).max(1));
            for i in index::sample(rng, p, support).into_iter() {
                x[i] = gauss(rng);
            }
        }
        2 => {
            let i = rng.random_range(0..p);
            x[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        3 => {
            // One dominant coordinate over a small dense floor.
            let eps = rng.random::<f64>() * 0.3;
            x.iter_mut().for_each(|v| *v = eps * gauss(rng));
            let i = rng.random_range(0..p);
            x[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        _ => x.iter_mut().for_each(|v| {
            *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }),
    }
    let n = norm_sq(&x).sqrt();
    if n == 0.0 {
        x[0] = 1.0;
    } else {
        x.iter_mut().for_each(|v| *v /= n);
    }
    x
}

/// Mean and standard error of `||C(x)/r - x||²` for one unit input.
fn trial_ratio(
    kind: &CompressorKind,
    r: f64,
    x: &[f64],
    inner: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64), CompressionError> {
    let p = x.len();
    if let CompressorKind::RandK { k } = *kind {
        // Each coordinate survives with probability k/p, so the expectation
        // over masks is available exactly.
        let keep = k as f64 / p as f64;
        let per_unit = keep * (1.0 / r - 1.0).powi(2) + (1.0 - keep);
        return Ok((per_unit * norm_sq(x), 0.0));
    }
    let mut out = vec![0.0; p];
    let reps = if kind.is_stochastic() { inner.max(2) } else { 1 };
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        compress_into(kind, x, rng, &mut out)?;
        out.iter_mut().for_each(|v| *v /= r);
        samples.push(dist_sq(&out, x));
    }
    let mean = samples.iter().sum::<f64>() / reps as f64;
    if reps == 1 {
        return Ok((mean, 0.0));
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok((mean, (var / reps as f64).sqrt()))
}

fn estimate(
    kind: &CompressorKind,
    r: f64,
    p: usize,
    cfg: &EstimatorConfig,
) -> Result<RatioEstimate, CompressionError> {
    kind.validate(p)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(CompressionError::BadScale(r));
    }
    let mode = cfg.execution.for_work(cfg.trials * cfg.inner.max(1) * p);
    let results = map_range(mode, cfg.trials, |t| {
        let mut rng = RngStream::aux(cfg.seed, t as u64, 0);
        let x = sample_input(p, t, &mut rng);
        trial_ratio(kind, r, &x, cfg.inner, &mut rng)
    });
    let mut best = (0.0, 0.0);
    let mut total = 0.0;
    for res in results {
        let (mean, se) = res?;
        total += mean;
        if mean > best.0 {
            best = (mean, se);
        }
    }
    Ok(RatioEstimate {
        max_ratio: best.0,
        std_error: best.1,
        mean_ratio: total / cfg.trials.max(1) as f64,
        trials: cfg.trials,
    })
}

/// Largest observed `E||C(x) - x||² / ||x||²` over random inputs.
pub fn estimate_variance_ratio(
    kind: &CompressorKind,
    p: usize,
    cfg: &EstimatorConfig,
) -> Result<RatioEstimate, CompressionError> {
    estimate(kind, 1.0, p, cfg)
}

/// Largest observed `E||C(x)/r - x||² / ||x||²` over random inputs.
pub fn estimate_contraction(
    kind: &CompressorKind,
    r: f64,
    p: usize,
    cfg: &EstimatorConfig,
) -> Result<RatioEstimate, CompressionError> {
    estimate(kind, r, p, cfg)
}

/// Analytic profile if known, otherwise one derived from the estimated
/// variance ratio (inflated by three standard errors).
pub fn empirical_profile(
    kind: &CompressorKind,
    p: usize,
    cfg: &EstimatorConfig,
) -> Result<CompressorProfile, CompressionError> {
    if let Some(profile) = analytic_profile(kind, p) {
        return Ok(profile);
    }
    let est = estimate_variance_ratio(kind, p, cfg)?;
    Ok(CompressorProfile::from_variance_ratio(
        est.max_ratio + 3.0 * est.std_error,
        Provenance::Empirical,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamKey, StreamTag};

    fn stream() -> RngStream {
        RngStream::new(StreamKey::new(1, 0, 0, StreamTag::XDiff))
    }

    fn run(kind: &str, x: &[f64]) -> Vec<f64> {
        compress(&kind.parse().unwrap(), x, &mut stream())
            .unwrap()
            .payload
    }

    #[test]
    fn worked_examples() {
        assert_eq!(run("topk:k=1", &[3.0, -5.0, 1.0]), vec![0.0, -5.0, 0.0]);
        assert_eq!(run("normsign:q=inf", &[2.0, -1.0]), vec![2.0, -2.0]);
        assert_eq!(run("normsign-rescaled:q=inf,r=2", &[2.0, -1.0]), vec![1.0, -1.0]);
        let x = [0.3, -1.7, 2.5];
        let m = compress(&CompressorKind::Identity, &x, &mut stream()).unwrap();
        assert_eq!(m.payload, x.to_vec());
        assert_eq!(m.bit_cost, 64 * 3);
    }

    #[test]
    fn quantizer_with_zero_perturbation() {
        let mut out = [0.0; 2];
        quantize_with(2, NormIndex::Inf, &[1.0, -0.5], &[0.0, 0.0], &mut out);
        assert_eq!(out, [1.0, -0.5]);
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        for kind in [
            "identity",
            "quant:b=2,q=inf",
            "quant:b=3,q=1",
            "topk:k=2",
            "randk:k=2",
            "normsign:q=2",
            "normsign-rescaled:q=1,r=4",
        ] {
            assert_eq!(run(kind, &[0.0; 4]), vec![0.0; 4], "{kind}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = stream();
        assert_eq!(
            compress(&CompressorKind::TopK { k: 4 }, &[1.0; 3], &mut rng),
            Err(CompressionError::BadK { k: 4, p: 3 })
        );
        assert_eq!(
            compress(&CompressorKind::RandK { k: 0 }, &[1.0; 3], &mut rng),
            Err(CompressionError::BadK { k: 0, p: 3 })
        );
        assert!(matches!(
            compress(&CompressorKind::Identity, &[1.0, f64::NAN], &mut rng),
            Err(CompressionError::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            compress(&CompressorKind::NormSign { q: NormIndex::Two }, &[f64::INFINITY], &mut rng),
            Err(CompressionError::NonFinite { index: 0, .. })
        ));
        assert!("quant:b=0,q=inf".parse::<CompressorKind>().is_err());
        assert!("topk".parse::<CompressorKind>().is_err());
        assert!("topk:k=1,j=2".parse::<CompressorKind>().is_err());
        assert!("quant:b=2,q=3".parse::<CompressorKind>().is_err());
        assert!("lead".parse::<CompressorKind>().is_err());
    }

    #[test]
    fn parse_display_round_trip() {
        for s in [
            "identity",
            "quant:b=2,q=inf",
            "topk:k=1",
            "randk:k=1",
            "normsign:q=inf",
            "normsign-rescaled:q=inf,r=20",
        ] {
            let kind: CompressorKind = s.parse().unwrap();
            assert_eq!(kind.to_string(), s);
        }
    }

    #[test]
    fn bit_model() {
        assert_eq!(bit_cost(&CompressorKind::Identity, 20), 1280);
        assert_eq!(
            bit_cost(&CompressorKind::Quantize { b: 2, q: NormIndex::Inf }, 20),
            124
        );
        assert_eq!(bit_cost(&CompressorKind::TopK { k: 1 }, 20), 69);
        assert_eq!(bit_cost(&CompressorKind::RandK { k: 3 }, 16), 3 * 68);
        assert_eq!(bit_cost(&CompressorKind::NormSign { q: NormIndex::One }, 20), 84);
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(32), 5);
        assert_eq!(index_bits(33), 6);
    }

    #[test]
    fn analytic_profiles() {
        let p = 20;
        let pf = 20.0;
        let ns2 = analytic_profile(&CompressorKind::NormSign { q: NormIndex::Two }, p).unwrap();
        assert_eq!((ns2.c, ns2.delta, ns2.r), (pf - 1.0, 1.0 / pf, pf));
        let nsi = analytic_profile(&CompressorKind::NormSign { q: NormIndex::Inf }, p).unwrap();
        assert_eq!((nsi.c, nsi.delta, nsi.r), (pf - 1.0, 1.0 / (pf * pf), pf));
        let ns1 = analytic_profile(&CompressorKind::NormSign { q: NormIndex::One }, p).unwrap();
        assert_eq!((ns1.c, ns1.delta), (361.0, 0.05));
        let top = analytic_profile(&CompressorKind::TopK { k: 1 }, p).unwrap();
        assert_eq!((top.c, top.delta, top.r), (0.95, 0.05, 1.0));
        let id = analytic_profile(&CompressorKind::Identity, p).unwrap();
        assert_eq!((id.c, id.delta, id.r), (0.0, 1.0, 1.0));
        assert_eq!(
            analytic_profile(&CompressorKind::Quantize { b: 2, q: NormIndex::Inf }, p),
            None
        );
        let resc = analytic_profile(
            &CompressorKind::RescaledNormSign { q: NormIndex::Inf, r: 20.0 },
            p,
        )
        .unwrap();
        assert_eq!((resc.delta, resc.r), (1.0 / 400.0, 1.0));
    }

    #[test]
    fn variance_ratio_rule() {
        let a = CompressorProfile::from_variance_ratio(0.25, Provenance::Empirical);
        assert_eq!((a.r, a.delta), (1.0, 0.75));
        let b = CompressorProfile::from_variance_ratio(3.0, Provenance::Empirical);
        assert_eq!((b.r, b.delta), (4.0, 0.25));
    }

    #[test]
    fn identity_and_full_support_have_zero_error() {
        let cfg = EstimatorConfig {
            trials: 1000,
            ..Default::default()
        };
        for kind in [CompressorKind::Identity, CompressorKind::TopK { k: 7 }] {
            assert_eq!(estimate_variance_ratio(&kind, 7, &cfg).unwrap().max_ratio, 0.0);
        }
        let r = estimate_contraction(&CompressorKind::RandK { k: 7 }, 1.0, 7, &cfg).unwrap();
        assert_eq!(r.max_ratio, 0.0);
    }

    #[test]
    fn estimators_are_mode_independent() {
        let kind = CompressorKind::Quantize { b: 2, q: NormIndex::Inf };
        let mut cfg = EstimatorConfig {
            trials: 1000,
            inner: 8,
            seed: 3,
            execution: Execution::Sequential,
        };
        let a = estimate_variance_ratio(&kind, 20, &cfg).unwrap();
        cfg.execution = Execution::Parallel;
        let b = estimate_variance_ratio(&kind, 20, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantizer_profile_is_empirical() {
        let cfg = EstimatorConfig {
            trials: 1000,
            inner: 16,
            ..Default::default()
        };
        let prof =
            empirical_profile(&CompressorKind::Quantize { b: 2, q: NormIndex::Inf }, 20, &cfg)
                .unwrap();
        assert_eq!(prof.provenance, Provenance::Empirical);
        assert!(prof.is_valid());
        // Per-coordinate variance is at most (||x||_inf / 2)² / 4.
        assert!(prof.c <= 20.0 / 16.0);
    }
}
