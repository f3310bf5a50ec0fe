//! Communication graphs, doubly stochastic weight matrices and their
//! spectral quantities.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{spectral_norm, Matrix};

/// Row and column sums must match 1 to this absolute tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("graph needs at least {min} agents, got {n}")]
    TooSmall { n: usize, min: usize },
    #[error("edge ({0}, {1}) refers to an agent outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop on agent {0}; self-weights live on the diagonal of W")]
    SelfLoop(usize),
    #[error("graph is not strongly connected: agent {to} unreachable from agent {from}")]
    NotStronglyConnected { from: usize, to: usize },
    #[error("agent {agent}: weight p_i = {p} must be positive")]
    NonPositiveWeight { agent: usize, p: f64 },
    #[error("agent {agent}: 1 - deg_out * p_i = {remainder} must be positive")]
    DiagonalNotPositive { agent: usize, remainder: f64 },
    #[error("expected {expected} per-agent weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("laplacian step a = {a} must be positive")]
    NonPositiveStep { a: f64 },
    #[error("entry ({row}, {col}) = {value} is negative; largest admissible step is a = {max_a}")]
    LaplacianStepTooLarge {
        row: usize,
        col: usize,
        value: f64,
        max_a: f64,
    },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("row {index} sums to {sum}, not 1")]
    RowSum { index: usize, sum: f64 },
    #[error("column {index} sums to {sum}, not 1")]
    ColumnSum { index: usize, sum: f64 },
}

/// A communication graph. The edge `(i, j)` means agent `i` can send to
/// agent `j`. Undirected graphs store both orientations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    directed: bool,
}

impl Graph {
    /// Build a graph from ordered pairs. For undirected graphs every pair is
    /// stored in both orientations. Fails on self-loops or when some agent
    /// cannot reach another.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        directed: bool,
    ) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::TooSmall { n, min: 1 });
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(TopologyError::EdgeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(TopologyError::SelfLoop(i));
            }
            set.insert((i, j));
            if !directed {
                set.insert((j, i));
            }
        }
        let g = Self {
            n,
            edges: set,
            directed,
        };
        g.check_strongly_connected()?;
        Ok(g)
    }

    /// Ring `i -> i+1 mod n`; the undirected ring also has `i+1 -> i`.
    pub fn ring(n: usize, directed: bool) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::TooSmall { n, min: 2 });
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)), directed)
    }

    pub fn complete(n: usize) -> Result<Self, TopologyError> {
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
        Self::new(n, edges, false)
    }

    /// A single isolated agent. Useful for reducing to centralized descent.
    pub fn singleton() -> Self {
        Self {
            n: 1,
            edges: BTreeSet::new(),
            directed: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn out_neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((i, 0)..(i + 1, 0)).map(|&(_, j)| j)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbours(i).count()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.edges.iter().filter(|&&(_, t)| t == j).count()
    }

    /// `D_out - A` with `A_ij = 1` for each edge `i -> j`.
    pub fn laplacian(&self) -> Matrix {
        let mut l = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            l[(i, j)] -= 1.0;
            l[(i, i)] += 1.0;
        }
        l
    }

    fn reach(&self, start: usize, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(i, j) in &self.edges {
                let (from, to) = if forward { (i, j) } else { (j, i) };
                if from == u && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }

    // Strong connectivity holds iff every agent is reachable from agent 0
    // and agent 0 is reachable from every agent.
    fn check_strongly_connected(&self) -> Result<(), TopologyError> {
        if let Some(to) = self.reach(0, true).iter().position(|&s| !s) {
            return Err(TopologyError::NotStronglyConnected { from: 0, to });
        }
        if let Some(from) = self.reach(0, false).iter().position(|&s| !s) {
            return Err(TopologyError::NotStronglyConnected { from, to: 0 });
        }
        Ok(())
    }
}

/// A validated doubly stochastic mixing matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    w: Matrix,
}

impl WeightMatrix {
    /// `w_ij = p_i` for each out-neighbour `j` of `i`, with the remainder on
    /// the diagonal. The result is validated, not assumed, to be doubly
    /// stochastic.
    pub fn from_out_degree(g: &Graph, p: &[f64]) -> Result<Self, TopologyError> {
        let n = g.n();
        if p.len() != n {
            return Err(TopologyError::WeightCount {
                expected: n,
                got: p.len(),
            });
        }
        let mut w = Matrix::zeros(n, n);
        for (i, &pi) in p.iter().enumerate() {
            if !(pi > 0.0) {
                return Err(TopologyError::NonPositiveWeight { agent: i, p: pi });
            }
            let deg = g.out_degree(i);
            let remainder = 1.0 - deg as f64 * pi;
            if !(remainder > 0.0) {
                return Err(TopologyError::DiagonalNotPositive {
                    agent: i,
                    remainder,
                });
            }
            for j in g.out_neighbours(i) {
                w[(i, j)] = pi;
            }
            w[(i, i)] = remainder;
        }
        Self::from_matrix(w)
    }

    /// `W = I - a L`.
    pub fn from_laplacian(g: &Graph, a: f64) -> Result<Self, TopologyError> {
        if !(a > 0.0) {
            return Err(TopologyError::NonPositiveStep { a });
        }
        let n = g.n();
        let w = Matrix::identity(n, n) - g.laplacian() * a;
        for i in 0..n {
            for j in 0..n {
                if w[(i, j)] < 0.0 {
                    let max_deg = (0..n).map(|k| g.out_degree(k)).max().unwrap_or(1).max(1);
                    return Err(TopologyError::LaplacianStepTooLarge {
                        row: i,
                        col: j,
                        value: w[(i, j)],
                        max_a: 1.0 / max_deg as f64,
                    });
                }
            }
        }
        Self::from_matrix(w)
    }

    /// Validate an arbitrary matrix: square, finite, nonnegative, and every
    /// row and column summing to 1 within [`STOCHASTIC_TOL`].
    pub fn from_matrix(w: Matrix) -> Result<Self, TopologyError> {
        validate_doubly_stochastic(&w)?;
        Ok(Self { w })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// Nonzero `(j, w_ij)` pairs of row `i`, in ascending `j`. This is the
    /// set of agents whose messages agent `i` consumes.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.n())
            .filter_map(|j| {
                let v = self.w[(i, j)];
                (v != 0.0).then_some((j, v))
            })
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// `(1 - gamma) I + gamma W`.
    pub fn lazy(&self, gamma: f64) -> Matrix {
        let n = self.n();
        Matrix::identity(n, n) * (1.0 - gamma) + &self.w * gamma
    }

    pub fn spectral_info(&self) -> SpectralInfo {
        spectral_info(self)
    }
}

/// Check the doubly stochastic conditions, naming the first offending index.
pub fn validate_doubly_stochastic(w: &Matrix) -> Result<(), TopologyError> {
    if !w.is_square() {
        return Err(TopologyError::NotSquare {
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    let n = w.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = w[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(TopologyError::BadEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    for i in 0..n {
        let sum: f64 = w.row(i).iter().sum();
        if (sum - 1.0).abs() >= STOCHASTIC_TOL {
            return Err(TopologyError::RowSum { index: i, sum });
        }
    }
    for j in 0..n {
        let sum: f64 = w.column(j).iter().sum();
        if (sum - 1.0).abs() >= STOCHASTIC_TOL {
            return Err(TopologyError::ColumnSum { index: j, sum });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// `||W - 11ᵀ/n||_2`.
    pub rho_w: f64,
    /// Spectral gap `1 - rho_w`.
    pub s: f64,
    /// `||I - W||_2`.
    pub norm_i_minus_w: f64,
}

impl SpectralInfo {
    /// Contraction of the lazy matrix `(1 - gamma) I + gamma W` on the
    /// disagreement subspace, `1 - gamma s`.
    pub fn rho_tilde(&self, gamma: f64) -> f64 {
        1.0 - gamma * self.s
    }
}

pub fn spectral_info(w: &WeightMatrix) -> SpectralInfo {
    let n = w.n();
    let avg = Matrix::from_element(n, n, 1.0 / n as f64);
    let rho_w = spectral_norm(&(w.matrix() - avg)).value;
    let norm_i_minus_w = spectral_norm(&(Matrix::identity(n, n) - w.matrix())).value;
    SpectralInfo {
        rho_w,
        s: 1.0 - rho_w,
        norm_i_minus_w,
    }
}
