//! Resilient construction of the local desired signal.
//!
//! Each vehicle scores its non-trusted neighbors by their mean distance to the
//! trusted neighbors' reported outputs, discards the `ϑ` highest-scoring ones and
//! fuses the rest with renormalized weights.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use thiserror::Error;

use crate::netgraph::CommNetwork;
use crate::vehicle::OutputDerivatives;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResilienceError {
    #[error("vehicle {vehicle}: trusted neighbor {sender} is not an in-neighbor")]
    TrustedNotNeighbor { vehicle: usize, sender: usize },
    #[error("vehicle {vehicle}: needs exactly {expected} trusted neighbors, has {got}")]
    TrustedCount { vehicle: usize, expected: usize, got: usize },
    #[error("trusted set is empty")]
    EmptyTrusted,
    #[error("trusted neighbor {0} sent no signal")]
    MissingTrusted(usize),
    #[error("vehicle {0}: every neighbor was trimmed")]
    EmptyKeptSet(usize),
    #[error("resilience configured for vehicle {vehicle} outside 1..={m}")]
    UnknownVehicle { vehicle: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResilienceConfig {
    pub theta: usize,
    /// Explicit trusted neighbors per vehicle. The navigator is added automatically
    /// wherever it is an in-neighbor.
    pub trusted: BTreeMap<usize, BTreeSet<usize>>,
}

/// How one vehicle forms its reference.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionMode {
    /// Plain weighted sum over all neighbors (`ϑ = 0`).
    Nominal,
    /// Score-and-trim against the given trusted set.
    Guarded { trusted: BTreeSet<usize> },
    /// `|𝒩_i| < 2ϑ + 1`: untrimmed, only the bounded-disturbance analysis applies.
    WorstCase,
}

impl ResilienceConfig {
    pub fn new(theta: usize) -> Self {
        Self { theta, trusted: BTreeMap::new() }
    }

    pub fn with_trusted(mut self, vehicle: usize, senders: impl IntoIterator<Item = usize>) -> Self {
        self.trusted.entry(vehicle).or_default().extend(senders);
        self
    }

    /// Resolves the fusion mode of every vehicle (index `i - 1` for vehicle `i`).
    pub fn plan(&self, net: &CommNetwork) -> Result<Vec<FusionMode>, ResilienceError> {
        let m = net.m();
        for (&vehicle, senders) in &self.trusted {
            if vehicle == 0 || vehicle > m {
                return Err(ResilienceError::UnknownVehicle { vehicle, m });
            }
            for &sender in senders {
                if net.weight(vehicle, sender).is_none() {
                    return Err(ResilienceError::TrustedNotNeighbor { vehicle, sender });
                }
            }
        }
        (1..=m)
            .map(|i| {
                if self.theta == 0 {
                    return Ok(FusionMode::Nominal);
                }
                let nbrs = net.in_neighbors(i);
                if nbrs.len() < 2 * self.theta + 1 {
                    return Ok(FusionMode::WorstCase);
                }
                let mut trusted = self.trusted.get(&i).cloned().unwrap_or_default();
                if nbrs.iter().any(|&(j, _)| j == 0) {
                    trusted.insert(0);
                }
                if trusted.len() != self.theta {
                    return Err(ResilienceError::TrustedCount { vehicle: i, expected: self.theta, got: trusted.len() });
                }
                Ok(FusionMode::Guarded { trusted })
            })
            .collect()
    }
}

/// One neighbor's transmitted (possibly corrupted) signal with its nominal weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Received {
    pub sender: usize,
    pub weight: f64,
    pub signal: OutputDerivatives,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimResult {
    /// `Δ_ik` for every non-trusted neighbor.
    pub scores: BTreeMap<usize, f64>,
    /// `ℛ_i`
    pub removed: BTreeSet<usize>,
    /// `(sender, w̃_ij)` over `𝒩_i^res`, in sender order.
    pub kept: Vec<(usize, f64)>,
}

impl TrimResult {
    pub fn kept_senders(&self) -> BTreeSet<usize> {
        self.kept.iter().map(|&(j, _)| j).collect()
    }
}

/// `Δ_ik = (1/|𝒩_i^tr|) Σ_ℓ ‖y_ℓ − y_k‖` for every non-trusted `k`.
pub fn deviation_scores(
    received: &[(usize, Vector2<f64>)],
    trusted: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, f64>, ResilienceError> {
    if trusted.is_empty() {
        return Err(ResilienceError::EmptyTrusted);
    }
    let anchors: Vec<Vector2<f64>> = trusted
        .iter()
        .map(|&l| {
            received
                .iter()
                .find(|&&(j, _)| j == l)
                .map(|&(_, y)| y)
                .ok_or(ResilienceError::MissingTrusted(l))
        })
        .collect::<Result<_, _>>()?;
    let n = anchors.len() as f64;
    Ok(received
        .iter()
        .filter(|(k, _)| !trusted.contains(k))
        .map(|&(k, yk)| (k, anchors.iter().map(|yl| (yl - yk).norm()).sum::<f64>() / n))
        .collect())
}

/// Removes the `theta` highest-scoring non-trusted neighbors; ties remove the lower
/// sender index first. Kept weights are rescaled to sum to one (uniform if they are
/// all zero). `theta = 0` keeps everything with the weights untouched.
pub fn trim(
    vehicle: usize,
    neighbors: &[(usize, f64)],
    scores: &BTreeMap<usize, f64>,
    theta: usize,
) -> Result<TrimResult, ResilienceError> {
    if theta == 0 {
        return Ok(TrimResult { scores: scores.clone(), removed: BTreeSet::new(), kept: neighbors.to_vec() });
    }
    let mut ranked: Vec<(usize, f64)> = scores.iter().map(|(&k, &s)| (k, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let removed: BTreeSet<usize> = ranked.iter().take(theta).map(|&(k, _)| k).collect();
    let kept: Vec<(usize, f64)> = neighbors.iter().copied().filter(|(j, _)| !removed.contains(j)).collect();
    if kept.is_empty() {
        return Err(ResilienceError::EmptyKeptSet(vehicle));
    }
    let total: f64 = kept.iter().map(|&(_, w)| w).sum();
    let kept = if total > 0.0 {
        kept.into_iter().map(|(j, w)| (j, w / total)).collect()
    } else {
        let u = 1.0 / kept.len() as f64;
        kept.into_iter().map(|(j, _)| (j, u)).collect()
    };
    Ok(TrimResult { scores: scores.clone(), removed, kept })
}

/// Weighted sum of the signals of the listed senders, in the order given.
pub fn fuse(received: &[Received], weights: &[(usize, f64)]) -> OutputDerivatives {
    let mut z = OutputDerivatives::zeros();
    for &(j, w) in weights {
        if let Some(r) = received.iter().find(|r| r.sender == j) {
            z.y += r.signal.y * w;
            z.dy += r.signal.dy * w;
            z.ddy += r.signal.ddy * w;
        }
    }
    z
}

/// Trimmed, renormalized reference `z_i^res` with its first two derivatives.
pub fn resilient_reference(
    vehicle: usize,
    received: &[Received],
    trusted: &BTreeSet<usize>,
    theta: usize,
) -> Result<(OutputDerivatives, TrimResult), ResilienceError> {
    let neighbors: Vec<(usize, f64)> = received.iter().map(|r| (r.sender, r.weight)).collect();
    let scores = if theta == 0 {
        BTreeMap::new()
    } else {
        let positions: Vec<(usize, Vector2<f64>)> = received.iter().map(|r| (r.sender, r.signal.y)).collect();
        deviation_scores(&positions, trusted)?
    };
    let trimmed = trim(vehicle, &neighbors, &scores, theta)?;
    Ok((fuse(received, &trimmed.kept), trimmed))
}
