//! Communication digraph between the navigator (node 0) and the tracking vehicles (1..=m).
//!
//! The edge list is the source of truth. The adjacency matrices and the augmented
//! Laplacian `𝕃 = 𝕎 − 𝔸_m` are derived from it on construction; the network is
//! immutable afterwards.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Row sums of `𝔸_m + 𝔸_0` within this distance of one count as balanced.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("network needs at least {min} vehicles for a {kind} topology, got {m}")]
    TooSmall { kind: TopologyKind, m: usize, min: usize },
    #[error("edge ({receiver}, {sender}): receiver must be a vehicle in 1..={m}")]
    BadReceiver { receiver: usize, sender: usize, m: usize },
    #[error("edge ({receiver}, {sender}): sender must be in 0..={m}")]
    BadSender { receiver: usize, sender: usize, m: usize },
    #[error("edge ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("edge ({receiver}, {sender}) has invalid weight {weight}")]
    BadWeight { receiver: usize, sender: usize, weight: f64 },
    #[error("edge ({receiver}, {sender}) listed twice")]
    Duplicate { receiver: usize, sender: usize },
    #[error("vehicle {0} has zero total in-weight and cannot be normalized")]
    Isolated(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Star,
    Cyclic,
    Path,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [TopologyKind::Star, TopologyKind::Cyclic, TopologyKind::Path];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Star => "star",
            TopologyKind::Cyclic => "cyclic",
            TopologyKind::Path => "path",
        }
    }
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Directed edge: `receiver` listens to `sender` with weight `w_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub receiver: usize,
    pub sender: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(receiver: usize, sender: usize, weight: f64) -> Self {
        Self { receiver, sender, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommNetwork {
    m: usize,
    edges: Vec<Edge>,
    /// In-neighbors `(sender, weight)` per vehicle, sorted by sender; index 0 is unused.
    neighbors: Vec<Vec<(usize, f64)>>,
    adj_m: DMatrix<f64>,
    nav: DVector<f64>,
    lap: DMatrix<f64>,
}

impl CommNetwork {
    pub fn from_edges(m: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut neighbors = vec![Vec::new(); m + 1];
        for e in &edges {
            if e.receiver == 0 || e.receiver > m {
                return Err(GraphError::BadReceiver { receiver: e.receiver, sender: e.sender, m });
            }
            if e.sender > m {
                return Err(GraphError::BadSender { receiver: e.receiver, sender: e.sender, m });
            }
            if e.sender == e.receiver {
                return Err(GraphError::SelfLoop(e.receiver));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(GraphError::BadWeight { receiver: e.receiver, sender: e.sender, weight: e.weight });
            }
            let row: &mut Vec<(usize, f64)> = &mut neighbors[e.receiver];
            if row.iter().any(|&(j, _)| j == e.sender) {
                return Err(GraphError::Duplicate { receiver: e.receiver, sender: e.sender });
            }
            row.push((e.sender, e.weight));
        }
        for row in &mut neighbors {
            row.sort_by_key(|&(j, _)| j);
        }

        let mut adj_m = DMatrix::zeros(m, m);
        let mut nav = DVector::zeros(m);
        for e in &edges {
            if e.sender == 0 {
                nav[e.receiver - 1] = e.weight;
            } else {
                adj_m[(e.receiver - 1, e.sender - 1)] = e.weight;
            }
        }
        let mut lap = -adj_m.clone();
        for i in 0..m {
            let w_i: f64 = adj_m.row(i).sum() + nav[i];
            lap[(i, i)] += w_i;
        }
        Ok(Self { m, edges, neighbors, adj_m, nav, lap })
    }

    /// One of the three reference topologies, with per-row weight classes fixed for any `m`.
    pub fn build_topology(kind: TopologyKind, m: usize) -> Result<Self, GraphError> {
        let min = match kind {
            TopologyKind::Cyclic => 3,
            _ => 2,
        };
        if m < min {
            return Err(GraphError::TooSmall { kind, m, min });
        }
        let mut edges = Vec::new();
        match kind {
            TopologyKind::Star => {
                edges.extend((1..=m).map(|i| Edge::new(i, 0, 1.0)));
            }
            TopologyKind::Cyclic => {
                for i in 1..=m {
                    let prev = if i == 1 { m } else { i - 1 };
                    let next = if i == m { 1 } else { i + 1 };
                    edges.push(Edge::new(i, 0, 0.1));
                    edges.push(Edge::new(i, prev, 0.45));
                    edges.push(Edge::new(i, next, 0.45));
                }
            }
            TopologyKind::Path => {
                edges.push(Edge::new(1, 0, 1.0));
                edges.extend((2..=m).map(|i| Edge::new(i, i - 1, 1.0)));
            }
        }
        Self::from_edges(m, edges)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `𝒩_i` with weights, sorted by sender index.
    pub fn in_neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn weight(&self, receiver: usize, sender: usize) -> Option<f64> {
        self.neighbors
            .get(receiver)?
            .iter()
            .find(|&&(j, _)| j == sender)
            .map(|&(_, w)| w)
    }

    /// Inter-vehicle adjacency `𝔸_m`.
    pub fn adj_m(&self) -> &DMatrix<f64> {
        &self.adj_m
    }

    /// Diagonal of `𝔸_0`: navigator weights `w_i0`.
    pub fn navigator_weights(&self) -> &DVector<f64> {
        &self.nav
    }

    pub fn adj_0(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.nav)
    }

    /// In-degree matrix `𝔻_m` of the vehicle subgraph.
    pub fn degree_m(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| if i == j { self.adj_m.row(i).sum() } else { 0.0 })
    }

    /// `𝕃_m = 𝔻_m − 𝔸_m`.
    pub fn laplacian_m(&self) -> DMatrix<f64> {
        self.degree_m() - &self.adj_m
    }

    /// `𝕎 = diag(w_i)`, `w_i = d_i + w_i0`.
    pub fn total_weights(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| if i == j { self.adj_m.row(i).sum() + self.nav[i] } else { 0.0 })
    }

    /// Augmented Laplacian `𝕃 = 𝕃_m + 𝔸_0`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.lap
    }

    /// Rescales every row so that `(𝔸_m + 𝔸_0)·1 = 1`.
    pub fn normalized(&self) -> Result<Self, GraphError> {
        let mut edges = self.edges.clone();
        for i in 1..=self.m {
            let w_i: f64 = self.neighbors[i].iter().map(|&(_, w)| w).sum();
            if w_i <= 0.0 {
                return Err(GraphError::Isolated(i));
            }
            for e in edges.iter_mut().filter(|e| e.receiver == i) {
                // Leave already-balanced rows bit-identical.
                if (w_i - 1.0).abs() > f64::EPSILON {
                    e.weight /= w_i;
                }
            }
        }
        Self::from_edges(self.m, edges)
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_fn(self.m, |i, _| self.adj_m.row(i).sum() + self.nav[i])
    }

    pub fn is_balanced(&self) -> bool {
        self.row_sums().iter().all(|s| (s - 1.0).abs() <= BALANCE_TOL)
    }

    /// Whether every vehicle lies on a directed path from the navigator.
    pub fn navigator_reachable(&self) -> bool {
        let mut children = vec![Vec::new(); self.m + 1];
        for e in &self.edges {
            children[e.sender].push(e.receiver);
        }
        let mut seen = vec![false; self.m + 1];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &c in &children[v] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn laplacian_positive_stable(&self) -> bool {
        linalg::eigenvalues(&self.lap).iter().all(|ev| ev.re > 1e-9)
    }
}
