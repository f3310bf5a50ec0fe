//! Gradient tracking with and without compressed communication.
//!
//! A [`Simulation`] advances all agents in synchronous rounds. Each round has
//! two phases separated by a barrier:
//!
//! 1. every agent compresses its own differences and publishes its messages;
//! 2. every agent mixes the messages of the agents in the support of its row
//!    of `W`, then updates its decision variable and gradient tracker.
//!
//! Phase 1 only touches the agent's own state and phase 2 only reads the
//! published messages, so the agents inside a phase may run concurrently.
//! Random draws come from streams keyed by `(seed, agent, iteration, tag)`,
//! which makes trajectories independent of scheduling and lets the reference
//! and message-passing forms of an algorithm consume identical randomness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compression::{bit_cost, compress_into, CompressionError, CompressorKind, CompressorProfile};
use crate::exec::{map_mut, Execution};
use crate::linalg::{dist_sq, norm_sq};
use crate::problems::{initial_point, RidgeProblem};
use crate::rng::{RngStream, StreamKey, StreamTag};
use crate::topology::WeightMatrix;

/// Runs abort once the residual exceeds this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Plain gradient tracking with full-precision messages.
    Gt,
    /// C-GT, matrix form.
    CgtReference,
    /// C-GT, message-passing form.
    CgtEfficient,
    /// EF-C-GT, matrix form.
    EfcgtReference,
    /// EF-C-GT, message-passing form.
    EfcgtEfficient,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Gt,
        Variant::CgtReference,
        Variant::CgtEfficient,
        Variant::EfcgtReference,
        Variant::EfcgtEfficient,
    ];

    pub fn uses_error_feedback(self) -> bool {
        matches!(self, Variant::EfcgtReference | Variant::EfcgtEfficient)
    }

    pub fn is_compressed(self) -> bool {
        self != Variant::Gt
    }

    pub fn is_efficient(self) -> bool {
        matches!(self, Variant::CgtEfficient | Variant::EfcgtEfficient)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gt => "gt",
            Variant::CgtReference => "cgt-ref",
            Variant::CgtEfficient => "cgt",
            Variant::EfcgtReference => "efcgt-ref",
            Variant::EfcgtEfficient => "efcgt",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}; expected gt, cgt, cgt-ref, efcgt or efcgt-ref"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta: f64,
    pub gamma: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    /// Damping of the error accumulator; 1 gives plain error feedback.
    pub beta_x: f64,
    pub beta_y: f64,
    /// Optional uncoordinated step-sizes, one per agent, replacing `eta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_eta: Option<Vec<f64>>,
}

impl HyperParams {
    pub fn new(eta: f64, gamma: f64, alpha_x: f64, alpha_y: f64) -> Self {
        Self {
            eta,
            gamma,
            alpha_x,
            alpha_y,
            beta_x: 1.0,
            beta_y: 1.0,
            agent_eta: None,
        }
    }

    pub fn with_beta(mut self, beta_x: f64, beta_y: f64) -> Self {
        self.beta_x = beta_x;
        self.beta_y = beta_y;
        self
    }

    pub fn validate(&self, n: usize) -> Result<(), AlgorithmError> {
        let bad = |field: &str, value: f64, range: &str| {
            Err(AlgorithmError::InvalidHyper(format!(
                "{field} = {value} must lie in {range}"
            )))
        };
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", self.eta, "(0, inf)");
        }
        for (field, v) in [
            ("gamma", self.gamma),
            ("alpha_x", self.alpha_x),
            ("alpha_y", self.alpha_y),
            ("beta_x", self.beta_x),
            ("beta_y", self.beta_y),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(field, v, "(0, 1]");
            }
        }
        if let Some(etas) = &self.agent_eta {
            if etas.len() != n {
                return Err(AlgorithmError::InvalidHyper(format!(
                    "agent_eta has {} entries for {n} agents",
                    etas.len()
                )));
            }
            if let Some(i) = etas.iter().position(|e| !(*e > 0.0 && e.is_finite())) {
                return bad(&format!("agent_eta[{i}]"), etas[i], "(0, inf)");
            }
        }
        Ok(())
    }

    /// Departures from the theory's admissible range that do not prevent a
    /// run.
    pub fn warnings(&self, profile: &CompressorProfile) -> Vec<String> {
        let mut out = Vec::new();
        for (name, a) in [("alpha_x", self.alpha_x), ("alpha_y", self.alpha_y)] {
            if a > 1.0 / profile.r {
                out.push(format!(
                    "{name} = {a} exceeds 1/r = {} for this compressor",
                    1.0 / profile.r
                ));
            }
        }
        out
    }

    pub fn eta_of(&self, agent: usize) -> f64 {
        self.agent_eta.as_ref().map_or(self.eta, |e| e[agent])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h_x: Vec<f64>,
    pub h_y: Vec<f64>,
    /// Row `i` of `W H_x`, maintained by the message-passing variants.
    pub h_xw: Vec<f64>,
    pub h_yw: Vec<f64>,
    pub e_x: Vec<f64>,
    pub e_y: Vec<f64>,
    /// `∇f_i(x)` at the current `x`.
    pub grad_prev: Vec<f64>,
    #[serde(skip)]
    scratch: Scratch,
}

/// Per-agent buffers carried from the compression phase to the mixing
/// phase.
#[derive(Debug, Clone, PartialEq, Default)]
struct Scratch {
    x_hat: Vec<f64>,
    y_hat: Vec<f64>,
}

/// What one agent broadcasts in a round.
#[derive(Debug, Clone, Default)]
struct Published {
    /// `x̂` (matrix forms), `q_x` (C-GT) or `q̂_x` (EF-C-GT).
    x: Vec<f64>,
    y: Vec<f64>,
    /// `q_x` for EF-C-GT message passing, empty otherwise.
    x_aux: Vec<f64>,
    y_aux: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    /// `||X - 1x*ᵀ||² / ||X⁰ - 1x*ᵀ||²`.
    pub residual: f64,
    /// `||X̄ - x*||²`.
    pub opt_error: f64,
    pub consensus_error: f64,
    pub tracking_error: f64,
    pub compress_error_x: f64,
    pub compress_error_y: f64,
    pub ef_error_x: f64,
    pub ef_error_y: f64,
    pub bits_cumulative: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub compressor: CompressorKind,
    pub hyper: HyperParams,
    pub seed: u64,
    pub trace: Vec<TraceRecord>,
    pub final_states: Vec<AgentState>,
}

impl RunResult {
    pub fn total_bits(&self) -> u64 {
        self.trace.last().map_or(0, |r| r.bits_cumulative)
    }

    pub fn residuals(&self) -> Vec<(u64, f64)> {
        self.trace.iter().map(|r| (r.k, r.residual)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgorithmError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error("diverged at iteration {k}: residual {residual:e} exceeds the guard")]
    Diverged {
        k: u64,
        residual: f64,
        partial: Box<RunResult>,
    },
}

/// The five error quantities of the C-GT analysis for the current state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector {
    pub opt: f64,
    pub consensus: f64,
    pub tracking: f64,
    pub compress_x: f64,
    pub compress_y: f64,
    pub ef_x: f64,
    pub ef_y: f64,
}

impl ErrorVector {
    pub fn cgt(&self) -> [f64; 5] {
        [self.opt, self.consensus, self.tracking, self.compress_x, self.compress_y]
    }

    pub fn efcgt(&self) -> [f64; 7] {
        [
            self.opt,
            self.consensus,
            self.tracking,
            self.compress_x,
            self.compress_y,
            self.ef_x,
            self.ef_y,
        ]
    }
}

/// Immutable per-round context shared by all agents.
struct Round<'a> {
    pb: &'a RidgeProblem,
    rows: &'a [Vec<(usize, f64)>],
    variant: Variant,
    kind: &'a CompressorKind,
    hp: &'a HyperParams,
    seed: u64,
    k: u64,
}

impl Round<'_> {
    fn stream(&self, agent: usize, tag: StreamTag) -> RngStream {
        RngStream::new(StreamKey::new(self.seed, agent, self.k, tag))
    }

    fn compress(
        &self,
        agent: usize,
        tag: StreamTag,
        v: &[f64],
    ) -> Result<Vec<f64>, CompressionError> {
        let mut out = vec![0.0; v.len()];
        let mut rng = self.stream(agent, tag);
        compress_into(self.kind, v, &mut rng, &mut out)?;
        Ok(out)
    }

    /// Phase 1: local compression and reference-state updates.
    fn publish(&self, i: usize, st: &mut AgentState) -> Result<Published, CompressionError> {
        let hp = self.hp;
        match self.variant {
            Variant::Gt => Ok(Published {
                x: st.x.clone(),
                y: st.y.clone(),
                ..Default::default()
            }),
            Variant::CgtReference | Variant::CgtEfficient => {
                let identity = *self.kind == CompressorKind::Identity;
                let (qx, x_hat) =
                    self.difference(i, StreamTag::XDiff, &st.x, &st.h_x, identity)?;
                let (qy, y_hat) =
                    self.difference(i, StreamTag::YDiff, &st.y, &st.h_y, identity)?;
                relax(&mut st.h_x, &x_hat, hp.alpha_x);
                relax(&mut st.h_y, &y_hat, hp.alpha_y);
                st.scratch.x_hat = x_hat;
                st.scratch.y_hat = y_hat;
                Ok(if self.variant == Variant::CgtReference {
                    Published {
                        x: st.scratch.x_hat.clone(),
                        y: st.scratch.y_hat.clone(),
                        ..Default::default()
                    }
                } else {
                    Published {
                        x: qx,
                        y: qy,
                        ..Default::default()
                    }
                })
            }
            Variant::EfcgtReference | Variant::EfcgtEfficient => {
                let (qx, qhx, x_hat) = self.error_feedback(
                    i,
                    [StreamTag::XDiff, StreamTag::XErrorFeedback],
                    &st.x,
                    &mut st.h_x,
                    &mut st.e_x,
                    hp.beta_x,
                    hp.alpha_x,
                )?;
                let (qy, qhy, y_hat) = self.error_feedback(
                    i,
                    [StreamTag::YDiff, StreamTag::YErrorFeedback],
                    &st.y,
                    &mut st.h_y,
                    &mut st.e_y,
                    hp.beta_y,
                    hp.alpha_y,
                )?;
                st.scratch.x_hat = x_hat;
                st.scratch.y_hat = y_hat;
                Ok(if self.variant == Variant::EfcgtReference {
                    Published {
                        x: st.scratch.x_hat.clone(),
                        y: st.scratch.y_hat.clone(),
                        ..Default::default()
                    }
                } else {
                    Published {
                        x: qhx,
                        y: qhy,
                        x_aux: qx,
                        y_aux: qy,
                    }
                })
            }
        }
    }

    /// `q = C(z - h)` and `ẑ = h + q`. Under the identity compressor the
    /// reconstruction is lossless by definition and `ẑ = z` is returned
    /// exactly.
    fn difference(
        &self,
        i: usize,
        tag: StreamTag,
        z: &[f64],
        h: &[f64],
        identity: bool,
    ) -> Result<(Vec<f64>, Vec<f64>), CompressionError> {
        let diff: Vec<f64> = z.iter().zip(h).map(|(a, b)| a - b).collect();
        let q = self.compress(i, tag, &diff)?;
        let z_hat = if identity {
            z.to_vec()
        } else {
            h.iter().zip(&q).map(|(a, b)| a + b).collect()
        };
        Ok((q, z_hat))
    }

    /// One error-feedback exchange. Returns `(q, q̂, ẑ)` and updates `h` and
    /// `e` in place. The accumulator uses the reference state from before
    /// the `h` update.
    #[allow(clippy::too_many_arguments)]
    fn error_feedback(
        &self,
        i: usize,
        tags: [StreamTag; 2],
        z: &[f64],
        h: &mut [f64],
        e: &mut [f64],
        beta: f64,
        alpha: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), CompressionError> {
        let diff: Vec<f64> = z.iter().zip(h.iter()).map(|(a, b)| a - b).collect();
        let q = self.compress(i, tags[0], &diff)?;
        let fed: Vec<f64> = e
            .iter()
            .zip(z)
            .zip(h.iter())
            .map(|((ej, zj), hj)| beta * ej + zj - hj)
            .collect();
        let q_hat = self.compress(i, tags[1], &fed)?;
        for ((ej, f), qh) in e.iter_mut().zip(&fed).zip(&q_hat) {
            *ej = f - qh;
        }
        let z_hat: Vec<f64> = h.iter().zip(&q_hat).map(|(a, b)| a + b).collect();
        for (hj, qj) in h.iter_mut().zip(&q) {
            *hj += alpha * qj;
        }
        Ok((q, q_hat, z_hat))
    }

    /// Phase 2: mix neighbours' messages and take the local step.
    fn update(&self, i: usize, st: &mut AgentState, published: &[Published]) {
        let hp = self.hp;
        let row = &self.rows[i];
        let p = st.x.len();
        let mix = |pick: fn(&Published) -> &Vec<f64>| -> Vec<f64> {
            let mut acc = vec![0.0; p];
            for &(j, w) in row {
                for (a, v) in acc.iter_mut().zip(pick(&published[j])) {
                    *a += w * v;
                }
            }
            acc
        };

        // dx = row i of (I - W) x̂, computed the way each form communicates.
        let (dx, dy) = match self.variant {
            Variant::Gt | Variant::CgtReference | Variant::EfcgtReference => {
                let mx = mix(|m| &m.x);
                let my = mix(|m| &m.y);
                let own = &published[i];
                (sub(&own.x, &mx), sub(&own.y, &my))
            }
            Variant::CgtEfficient => {
                let x_hat_w = add(&st.h_xw, &mix(|m| &m.x));
                let y_hat_w = add(&st.h_yw, &mix(|m| &m.y));
                relax(&mut st.h_xw, &x_hat_w, hp.alpha_x);
                relax(&mut st.h_yw, &y_hat_w, hp.alpha_y);
                (sub(&st.scratch.x_hat, &x_hat_w), sub(&st.scratch.y_hat, &y_hat_w))
            }
            Variant::EfcgtEfficient => {
                let x_hat_w = add(&st.h_xw, &mix(|m| &m.x));
                let y_hat_w = add(&st.h_yw, &mix(|m| &m.y));
                let qx_w = mix(|m| &m.x_aux);
                let qy_w = mix(|m| &m.y_aux);
                for (h, q) in st.h_xw.iter_mut().zip(&qx_w) {
                    *h += hp.alpha_x * q;
                }
                for (h, q) in st.h_yw.iter_mut().zip(&qy_w) {
                    *h += hp.alpha_y * q;
                }
                (sub(&st.scratch.x_hat, &x_hat_w), sub(&st.scratch.y_hat, &y_hat_w))
            }
        };

        let eta = hp.eta_of(i);
        let gamma = hp.gamma;
        for j in 0..p {
            st.x[j] = st.x[j] - gamma * dx[j] - eta * st.y[j];
        }
        let mut g_new = vec![0.0; p];
        self.pb.local_gradient_into(i, &st.x, &mut g_new);
        for j in 0..p {
            st.y[j] = st.y[j] - gamma * dy[j] + g_new[j] - st.grad_prev[j];
        }
        st.grad_prev = g_new;
    }
}

fn relax(h: &mut [f64], target: &[f64], alpha: f64) {
    for (a, b) in h.iter_mut().zip(target) {
        *a = (1.0 - alpha) * *a + alpha * b;
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// A running instance of one algorithm on one problem.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pb: &'a RidgeProblem,
    rows: Vec<Vec<(usize, f64)>>,
    variant: Variant,
    kind: CompressorKind,
    hp: HyperParams,
    seed: u64,
    execution: Execution,
    stop_below: Option<f64>,
    states: Vec<AgentState>,
    k: u64,
    bits: u64,
    x_star: Vec<f64>,
    denom: f64,
}

impl<'a> Simulation<'a> {
    /// Start from `X⁰` drawn uniformly in `[0, 1]^p` with `seed`, `H⁰ = E⁰ = 0`
    /// and `Y⁰ = ∇F(X⁰)`.
    pub fn new(
        pb: &'a RidgeProblem,
        w: &WeightMatrix,
        variant: Variant,
        kind: CompressorKind,
        hp: HyperParams,
        seed: u64,
    ) -> Result<Self, AlgorithmError> {
        let x0 = initial_point(pb.n(), pb.p(), seed);
        Self::with_initial(pb, w, variant, kind, hp, seed, x0)
    }

    pub fn with_initial(
        pb: &'a RidgeProblem,
        w: &WeightMatrix,
        variant: Variant,
        kind: CompressorKind,
        hp: HyperParams,
        seed: u64,
        x0: Vec<Vec<f64>>,
    ) -> Result<Self, AlgorithmError> {
        let (n, p) = (pb.n(), pb.p());
        if w.n() != n {
            return Err(AlgorithmError::Shape(format!(
                "weight matrix is {0}x{0} but the problem has {n} agents",
                w.n()
            )));
        }
        if x0.len() != n || x0.iter().any(|x| x.len() != p) {
            return Err(AlgorithmError::Shape(format!(
                "initial point must be {n} rows of length {p}"
            )));
        }
        hp.validate(n)?;
        if variant.is_compressed() {
            kind.validate(p)?;
        }
        let kind = if variant.is_compressed() {
            kind
        } else {
            CompressorKind::Identity
        };
        let states = x0
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let grad = pb.local_gradient(i, &x).expect("agent index in range");
                AgentState {
                    y: grad.clone(),
                    grad_prev: grad,
                    x,
                    h_x: vec![0.0; p],
                    h_y: vec![0.0; p],
                    h_xw: vec![0.0; p],
                    h_yw: vec![0.0; p],
                    e_x: vec![0.0; p],
                    e_y: vec![0.0; p],
                    scratch: Scratch::default(),
                }
            })
            .collect::<Vec<_>>();
        let x_star = pb.optimal_solution().x_star;
        let denom: f64 = states.iter().map(|s| dist_sq(&s.x, &x_star)).sum();
        Ok(Self {
            pb,
            rows: w.rows(),
            variant,
            kind,
            hp,
            seed,
            execution: Execution::default(),
            stop_below: None,
            states,
            k: 0,
            bits: 0,
            x_star,
            denom,
        })
    }

    pub fn execution(mut self, mode: Execution) -> Self {
        self.execution = mode;
        self
    }

    /// End [`run`](Self::run) early once the residual is at or below `floor`.
    pub fn stop_below(mut self, floor: f64) -> Self {
        self.stop_below = Some(floor);
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hp
    }

    /// Bits all agents transmit in one round.
    pub fn bits_per_round(&self) -> u64 {
        let (n, p) = (self.pb.n() as u64, self.pb.p());
        let per_agent = match self.variant {
            Variant::Gt | Variant::CgtReference | Variant::EfcgtReference => {
                2 * bit_cost(&CompressorKind::Identity, p)
            }
            Variant::CgtEfficient => 2 * bit_cost(&self.kind, p),
            Variant::EfcgtEfficient => 4 * bit_cost(&self.kind, p),
        };
        n * per_agent
    }

    /// Advance one synchronous round.
    pub fn step(&mut self) -> Result<(), AlgorithmError> {
        let round = Round {
            pb: self.pb,
            rows: &self.rows,
            variant: self.variant,
            kind: &self.kind,
            hp: &self.hp,
            seed: self.seed,
            k: self.k,
        };
        let work = self.rows.iter().map(|r| r.len() + 1).sum::<usize>() * self.pb.p();
        let mode = self.execution.for_work(work);
        let published = map_mut(mode, &mut self.states, |i, st| round.publish(i, st))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        map_mut(mode, &mut self.states, |i, st| {
            round.update(i, st, &published)
        });
        self.k += 1;
        self.bits += self.bits_per_round();
        Ok(())
    }

    pub fn errors(&self) -> ErrorVector {
        let p = self.pb.p();
        let x_bar = mean_rows(self.states.iter().map(|s| &s.x), p);
        let y_bar = mean_rows(self.states.iter().map(|s| &s.y), p);
        let sum = |f: &dyn Fn(&AgentState) -> f64| self.states.iter().map(f).sum::<f64>();
        let compressed = self.variant.is_compressed();
        ErrorVector {
            opt: dist_sq(&x_bar, &self.x_star),
            consensus: sum(&|s| dist_sq(&s.x, &x_bar)),
            tracking: sum(&|s| dist_sq(&s.y, &y_bar)),
            compress_x: if compressed { sum(&|s| dist_sq(&s.x, &s.h_x)) } else { 0.0 },
            compress_y: if compressed { sum(&|s| dist_sq(&s.y, &s.h_y)) } else { 0.0 },
            ef_x: sum(&|s| norm_sq(&s.e_x)),
            ef_y: sum(&|s| norm_sq(&s.e_y)),
        }
    }

    pub fn residual(&self) -> f64 {
        let num: f64 = self.states.iter().map(|s| dist_sq(&s.x, &self.x_star)).sum();
        if self.denom > 0.0 {
            num / self.denom
        } else {
            num
        }
    }

    pub fn record(&self) -> TraceRecord {
        let e = self.errors();
        TraceRecord {
            k: self.k,
            residual: self.residual(),
            opt_error: e.opt,
            consensus_error: e.consensus,
            tracking_error: e.tracking,
            compress_error_x: e.compress_x,
            compress_error_y: e.compress_y,
            ef_error_x: e.ef_x,
            ef_error_y: e.ef_y,
            bits_cumulative: self.bits,
        }
    }

    fn result(&self, trace: Vec<TraceRecord>) -> RunResult {
        RunResult {
            variant: self.variant,
            compressor: self.kind,
            hyper: self.hp.clone(),
            seed: self.seed,
            trace,
            final_states: self.states.clone(),
        }
    }

    /// Run `iterations` rounds, recording every `trace_every`-th state plus
    /// the final one. Aborts with [`AlgorithmError::Diverged`] once the
    /// residual passes [`DIVERGENCE_THRESHOLD`] or stops being finite.
    pub fn run(mut self, iterations: u64, trace_every: u64) -> Result<RunResult, AlgorithmError> {
        let every = trace_every.max(1);
        let mut trace = vec![self.record()];
        for _ in 0..iterations {
            self.step()?;
            let last = self.k == iterations;
            let residual = self.residual();
            if !(residual <= DIVERGENCE_THRESHOLD) {
                trace.push(self.record());
                return Err(AlgorithmError::Diverged {
                    k: self.k,
                    residual,
                    partial: Box::new(self.result(trace)),
                });
            }
            let done = self.stop_below.is_some_and(|f| residual <= f);
            if self.k % every == 0 || last || done {
                trace.push(self.record());
            }
            if done {
                break;
            }
        }
        Ok(self.result(trace))
    }
}

fn mean_rows<'b>(rows: impl Iterator<Item = &'b Vec<f64>>, p: usize) -> Vec<f64> {
    let mut acc = vec![0.0; p];
    let mut n = 0usize;
    for r in rows {
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    acc
}

/// `max_j |Σ_i y_ij - Σ_i ∇f_i(x_i)_j|` using each agent's cached gradient.
pub fn tracking_defect(states: &[AgentState]) -> f64 {
    let p = states.first().map_or(0, |s| s.y.len());
    (0..p)
        .map(|j| {
            let sy: f64 = states.iter().map(|s| s.y[j]).sum();
            let sg: f64 = states.iter().map(|s| s.grad_prev[j]).sum();
            (sy - sg).abs()
        })
        .fold(0.0, f64::max)
}

/// `||X̄⁺ - X̄ + eta Ȳ||` between two consecutive states.
pub fn mean_step_defect(before: &[AgentState], after: &[AgentState], eta: f64) -> f64 {
    let p = before.first().map_or(0, |s| s.x.len());
    let xb = mean_rows(before.iter().map(|s| &s.x), p);
    let yb = mean_rows(before.iter().map(|s| &s.y), p);
    let xa = mean_rows(after.iter().map(|s| &s.x), p);
    (0..p)
        .map(|j| (xa[j] - xb[j] + eta * yb[j]).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn run(
    pb: &RidgeProblem,
    w: &WeightMatrix,
    variant: Variant,
    kind: CompressorKind,
    hp: &HyperParams,
    iterations: u64,
    seed: u64,
) -> Result<RunResult, AlgorithmError> {
    Simulation::new(pb, w, variant, kind, hp.clone(), seed)?.run(iterations, 1)
}

pub fn run_gt(
    pb: &RidgeProblem,
    w: &WeightMatrix,
    hp: &HyperParams,
    iterations: u64,
    seed: u64,
) -> Result<RunResult, AlgorithmError> {
    run(pb, w, Variant::Gt, CompressorKind::Identity, hp, iterations, seed)
}

pub fn run_cgt_reference(
    pb: &RidgeProblem,
    w: &WeightMatrix,
    hp: &HyperParams,
    kind: CompressorKind,
    iterations: u64,
    seed: u64,
) -> Result<RunResult, AlgorithmError> {
    run(pb, w, Variant::CgtReference, kind, hp, iterations, seed)
}

pub fn run_cgt_efficient(
    pb: &RidgeProblem,
    w: &WeightMatrix,
    hp: &HyperParams,
    kind: CompressorKind,
    iterations: u64,
    seed: u64,
) -> Result<RunResult, AlgorithmError> {
    run(pb, w, Variant::CgtEfficient, kind, hp, iterations, seed)
}

pub fn run_efcgt_reference(
    pb: &RidgeProblem,
    w: &WeightMatrix,
    hp: &HyperParams,
    kind: CompressorKind,
    iterations: u64,
    seed: u64,
) -> Result<RunResult, AlgorithmError> {
    run(pb, w, Variant::EfcgtReference, kind, hp, iterations, seed)
}

pub fn run_efcgt_efficient(
    pb: &RidgeProblem,
    w: &WeightMatrix,
    hp: &HyperParams,
    kind: CompressorKind,
    iterations: u64,
    seed: u64,
) -> Result<RunResult, AlgorithmError> {
    run(pb, w, Variant::EfcgtEfficient, kind, hp, iterations, seed)
}
