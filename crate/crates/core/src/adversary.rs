//! Bounded adversarial corruption of transmitted neighbor signals.
//!
//! A corrupted edge `(i, j)` delivers `y_j + a_ij(t)` to vehicle `i`, together with
//! the matching derivatives `ẏ_j + ȧ_ij` and `ÿ_j + ä_ij`. Every generator
//! satisfies `‖a_ij(t)‖ ≤ ā` for all `t` and is smooth, so the corrupted signals
//! stay differentiable.

use std::collections::BTreeMap;
use std::f64::consts::{SQRT_2, TAU};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{CommNetwork, GraphError, TopologyKind};
use crate::vehicle::OutputDerivatives;

/// Attacked senders used by the reference experiment.
pub const DEFAULT_ATTACKED: [usize; 4] = [2, 5, 8, 11];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("attack bound must be positive and finite, got {0}")]
    BadBound(f64),
    #[error("attacked vehicle {index} is outside 1..={m}")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("attacked edge ({0}, {1}) is not an edge of the network")]
    NotAnEdge(usize, usize),
    #[error("constant offset norm {norm} exceeds the bound {abar}")]
    OffsetTooLarge { norm: f64, abar: f64 },
    #[error("bounded_random needs 1..=5 components, got {0}")]
    Components(usize),
    #[error("invalid attack parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `a`, `ȧ`, `ä` of one attack signal at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSample {
    pub a: Vector2<f64>,
    pub da: Vector2<f64>,
    pub dda: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Harmonic {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (s, c) = (self.frequency * t + self.phase).sin_cos();
        let w = self.frequency;
        (self.amplitude * s, self.amplitude * w * c, -self.amplitude * w * w * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackSignal {
    ConstantOffset { offset: Vector2<f64> },
    /// Offset of constant magnitude rotating at `frequency`:
    /// `amplitude · (cos(ω t + φ), sin(ω t + φ))`.
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
    /// Independent sums of sinusoids per axis; the per-axis amplitudes sum to at most `ā/√2`.
    BoundedRandom { x: Vec<Harmonic>, y: Vec<Harmonic> },
}

impl AttackSignal {
    pub fn sample(&self, t: f64) -> AttackSample {
        match self {
            AttackSignal::ConstantOffset { offset } => AttackSample { a: *offset, da: Vector2::zeros(), dda: Vector2::zeros() },
            AttackSignal::Sinusoid { amplitude, frequency, phase } => {
                let (s, c) = (frequency * t + phase).sin_cos();
                let (r, w) = (*amplitude, *frequency);
                AttackSample {
                    a: Vector2::new(r * c, r * s),
                    da: Vector2::new(-r * w * s, r * w * c),
                    dda: Vector2::new(-r * w * w * c, -r * w * w * s),
                }
            }
            AttackSignal::BoundedRandom { x, y } => {
                let sum = |hs: &[Harmonic]| {
                    hs.iter().fold((0.0, 0.0, 0.0), |acc, h| {
                        let (a, b, c) = h.eval(t);
                        (acc.0 + a, acc.1 + b, acc.2 + c)
                    })
                };
                let (ax, dax, ddax) = sum(x);
                let (ay, day, dday) = sum(y);
                AttackSample { a: Vector2::new(ax, ay), da: Vector2::new(dax, day), dda: Vector2::new(ddax, dday) }
            }
        }
    }

    /// A bound on `sup_t ‖a(t)‖` that holds by construction.
    pub fn sup_bound(&self) -> f64 {
        match self {
            AttackSignal::ConstantOffset { offset } => offset.norm(),
            AttackSignal::Sinusoid { amplitude, .. } => amplitude.abs(),
            AttackSignal::BoundedRandom { x, y } => {
                let ax: f64 = x.iter().map(|h| h.amplitude.abs()).sum();
                let ay: f64 = y.iter().map(|h| h.amplitude.abs()).sum();
                ax.hypot(ay)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    ConstantOffset,
    #[default]
    Sinusoid,
    BoundedRandom,
}

fn default_frequency() -> f64 {
    0.1
}

fn default_components() -> usize {
    5
}

/// Generator parameters; the fields that do not apply to the chosen kind are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalParams {
    /// Constant offset vector; defaults to `(ā, 0)`.
    #[serde(default)]
    pub offset: Option<[f64; 2]>,
    /// Angular frequency (rad/s) of the sinusoid, and the base frequency of bounded_random.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_components")]
    pub components: usize,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self { offset: None, frequency: default_frequency(), phase: 0.0, components: default_components() }
    }
}

/// Builds the generator for one edge. `seed` only affects `BoundedRandom`.
pub fn make_signal(
    kind: SignalKind,
    params: &SignalParams,
    abar: f64,
    seed: u64,
    edge: (usize, usize),
) -> Result<AttackSignal, AttackError> {
    if !(params.frequency.is_finite() && params.phase.is_finite()) {
        return Err(AttackError::BadParam("frequency and phase must be finite".into()));
    }
    match kind {
        SignalKind::ConstantOffset => {
            let o = params.offset.unwrap_or([abar, 0.0]);
            let offset = Vector2::new(o[0], o[1]);
            if !offset.iter().all(|v| v.is_finite()) {
                return Err(AttackError::BadParam("offset must be finite".into()));
            }
            if offset.norm() > abar * (1.0 + 1e-12) {
                return Err(AttackError::OffsetTooLarge { norm: offset.norm(), abar });
            }
            Ok(AttackSignal::ConstantOffset { offset })
        }
        SignalKind::Sinusoid => Ok(AttackSignal::Sinusoid { amplitude: abar, frequency: params.frequency, phase: params.phase }),
        SignalKind::BoundedRandom => {
            let n = params.components;
            if !(1..=5).contains(&n) {
                return Err(AttackError::Components(n));
            }
            let mix = seed ^ ((edge.0 as u64) << 32 | edge.1 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(mix);
            let axis = |rng: &mut ChaCha8Rng| {
                let mut hs: Vec<Harmonic> = (0..n)
                    .map(|_| Harmonic {
                        amplitude: rng.random_range(0.2..1.0),
                        frequency: params.frequency * rng.random_range(0.5..1.5),
                        phase: rng.random_range(0.0..TAU),
                    })
                    .collect();
                let total: f64 = hs.iter().map(|h| h.amplitude).sum();
                let scale = abar / SQRT_2 / total;
                for h in &mut hs {
                    h.amplitude *= scale;
                }
                hs
            };
            let x = axis(&mut rng);
            let y = axis(&mut rng);
            Ok(AttackSignal::BoundedRandom { x, y })
        }
    }
}

/// Adversarial edge set `ℰ_a` with one generator per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    abar: f64,
    signals: BTreeMap<(usize, usize), AttackSignal>,
}

impl AttackModel {
    pub fn new(abar: f64, signals: BTreeMap<(usize, usize), AttackSignal>) -> Result<Self, AttackError> {
        if !(abar > 0.0 && abar.is_finite()) {
            return Err(AttackError::BadBound(abar));
        }
        for sig in signals.values() {
            if sig.sup_bound() > abar * (1.0 + 1e-12) {
                return Err(AttackError::OffsetTooLarge { norm: sig.sup_bound(), abar });
            }
        }
        Ok(Self { abar, signals })
    }

    /// Same generator kind on every listed edge, validated against `net`.
    pub fn on_edges(
        net: &CommNetwork,
        edges: &[(usize, usize)],
        kind: SignalKind,
        params: &SignalParams,
        abar: f64,
        seed: u64,
    ) -> Result<Self, AttackError> {
        if !(abar > 0.0 && abar.is_finite()) {
            return Err(AttackError::BadBound(abar));
        }
        let mut signals = BTreeMap::new();
        for &(i, j) in edges {
            if net.weight(i, j).is_none() {
                return Err(AttackError::NotAnEdge(i, j));
            }
            signals.insert((i, j), make_signal(kind, params, abar, seed, (i, j))?);
        }
        Self::new(abar, signals)
    }

    pub fn abar(&self) -> f64 {
        self.abar
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.signals.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signal(&self, receiver: usize, sender: usize) -> Option<&AttackSignal> {
        self.signals.get(&(receiver, sender))
    }

    /// Whether any navigator channel `(i, 0)` is corrupted.
    pub fn corrupts_navigator(&self) -> bool {
        self.signals.keys().any(|&(_, j)| j == 0)
    }

    /// Adversarial in-neighbors `𝒩_i^a`.
    pub fn adversarial_neighbors(&self, receiver: usize) -> Vec<usize> {
        self.signals.keys().filter(|&&(i, _)| i == receiver).map(|&(_, j)| j).collect()
    }

    pub fn sample(&self, receiver: usize, sender: usize, t: f64) -> Option<AttackSample> {
        self.signals.get(&(receiver, sender)).map(|s| s.sample(t))
    }

    pub fn corrupt(&self, out: &OutputDerivatives, edge: (usize, usize), t: f64) -> OutputDerivatives {
        match self.sample(edge.0, edge.1, t) {
            Some(s) => apply(out, &s),
            None => *out,
        }
    }

    /// Every generator evaluated at `t`.
    pub fn view(&self, t: f64) -> AttackView {
        AttackView { samples: self.signals.iter().map(|(&e, s)| (e, s.sample(t))).collect() }
    }
}

fn apply(out: &OutputDerivatives, s: &AttackSample) -> OutputDerivatives {
    OutputDerivatives { y: out.y + s.a, dy: out.dy + s.da, ddy: out.ddy + s.dda }
}

/// Attack samples at one instant, keyed by `(receiver, sender)`. Clean edges are absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackView {
    samples: BTreeMap<(usize, usize), AttackSample>,
}

impl AttackView {
    pub fn get(&self, receiver: usize, sender: usize) -> Option<&AttackSample> {
        self.samples.get(&(receiver, sender))
    }

    pub fn corrupt(&self, out: &OutputDerivatives, receiver: usize, sender: usize) -> OutputDerivatives {
        match self.get(receiver, sender) {
            Some(s) => apply(out, s),
            None => *out,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &AttackSample)> {
        self.samples.iter().map(|(&e, s)| (e, s))
    }
}

/// Edges corrupted by the reference experiment: navigator channels of the attacked
/// vehicles on the star, every outgoing transmission of an attacked sender otherwise.
pub fn preset_edges(kind: TopologyKind, m: usize, attacked: &[usize]) -> Result<Vec<(usize, usize)>, AttackError> {
    for &index in attacked {
        if index == 0 || index > m {
            return Err(AttackError::IndexOutOfRange { index, m });
        }
    }
    let net = CommNetwork::build_topology(kind, m)?;
    let edges = match kind {
        TopologyKind::Star => attacked.iter().map(|&i| (i, 0)).collect(),
        _ => net
            .edges()
            .iter()
            .filter(|e| attacked.contains(&e.sender))
            .map(|e| (e.receiver, e.sender))
            .collect(),
    };
    Ok(edges)
}

pub fn preset_attack(
    kind: TopologyKind,
    m: usize,
    abar: f64,
    attacked: &[usize],
    signal: SignalKind,
    params: &SignalParams,
    seed: u64,
) -> Result<AttackModel, AttackError> {
    let edges = preset_edges(kind, m, attacked)?;
    let net = CommNetwork::build_topology(kind, m)?;
    AttackModel::on_edges(&net, &edges, signal, params, abar, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outputs() -> OutputDerivatives {
        OutputDerivatives { y: Vector2::new(1.0, 2.0), dy: Vector2::new(0.5, -0.5), ddy: Vector2::new(0.1, 0.2) }
    }

    fn star(m: usize) -> CommNetwork {
        CommNetwork::build_topology(TopologyKind::Star, m).unwrap()
    }

    #[test]
    fn clean_edge_is_identity() {
        let model = AttackModel::on_edges(&star(3), &[(1, 0)], SignalKind::Sinusoid, &SignalParams::default(), 1.0, 0).unwrap();
        assert_eq!(model.corrupt(&outputs(), (2, 0), 3.0), outputs());
    }

    #[test]
    fn constant_offset_shifts_position_only() {
        let params = SignalParams { offset: Some([0.5, 0.0]), ..Default::default() };
        let model = AttackModel::on_edges(&star(3), &[(1, 0)], SignalKind::ConstantOffset, &params, 0.5, 0).unwrap();
        let c = model.corrupt(&outputs(), (1, 0), 7.0);
        assert_eq!(c.y, Vector2::new(1.5, 2.0));
        assert_eq!(c.dy, outputs().dy);
        assert_eq!(c.ddy, outputs().ddy);
    }

    #[test]
    fn offset_over_bound_is_rejected() {
        let params = SignalParams { offset: Some([0.6, 0.0]), ..Default::default() };
        assert!(matches!(
            AttackModel::on_edges(&star(3), &[(1, 0)], SignalKind::ConstantOffset, &params, 0.5, 0),
            Err(AttackError::OffsetTooLarge { .. })
        ));
        assert_eq!(
            AttackModel::on_edges(&star(3), &[(1, 0)], SignalKind::Sinusoid, &SignalParams::default(), 0.0, 0),
            Err(AttackError::BadBound(0.0))
        );
        assert_eq!(
            AttackModel::on_edges(&star(3), &[(1, 2)], SignalKind::Sinusoid, &SignalParams::default(), 1.0, 0),
            Err(AttackError::NotAnEdge(1, 2))
        );
    }

    #[test]
    fn sinusoid_sup_norm_equals_bound_on_dense_grid() {
        let sig = make_signal(SignalKind::Sinusoid, &SignalParams { frequency: 0.7, ..Default::default() }, 1.3, 0, (1, 0)).unwrap();
        let sup = (0..200_000).map(|k| sig.sample(k as f64 * 1e-3).a.norm()).fold(0.0, f64::max);
        assert!((sup - 1.3).abs() < 1e-9, "sup = {sup}");
    }

    #[test]
    fn signal_derivatives_match_finite_differences() {
        let params = SignalParams { frequency: 0.4, phase: 0.3, ..Default::default() };
        for kind in [SignalKind::Sinusoid, SignalKind::BoundedRandom, SignalKind::ConstantOffset] {
            let sig = make_signal(kind, &params, 1.0, 11, (3, 2)).unwrap();
            let h = 1e-4;
            for &t in &[0.0, 1.7, 12.5] {
                let (a, b, s) = (sig.sample(t - h), sig.sample(t + h), sig.sample(t));
                assert!(((b.a - a.a) / (2.0 * h) - s.da).norm() < 1e-7);
                assert!(((b.da - a.da) / (2.0 * h) - s.dda).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn bounded_random_is_seeded_and_bounded() {
        let p = SignalParams::default();
        let a = make_signal(SignalKind::BoundedRandom, &p, 2.0, 42, (4, 5)).unwrap();
        let b = make_signal(SignalKind::BoundedRandom, &p, 2.0, 42, (4, 5)).unwrap();
        let c = make_signal(SignalKind::BoundedRandom, &p, 2.0, 43, (4, 5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.sup_bound() <= 2.0 + 1e-12);
        let sup = (0..100_000).map(|k| a.sample(k as f64 * 0.01).a.norm()).fold(0.0, f64::max);
        assert!(sup <= 2.0);
        assert_eq!(
            make_signal(SignalKind::BoundedRandom, &SignalParams { components: 6, ..p }, 1.0, 0, (1, 0)),
            Err(AttackError::Components(6))
        );
    }

    #[test]
    fn preset_edge_counts() {
        let star = preset_edges(TopologyKind::Star, 12, &DEFAULT_ATTACKED).unwrap();
        assert_eq!(star, vec![(2, 0), (5, 0), (8, 0), (11, 0)]);
        let cyc = preset_edges(TopologyKind::Cyclic, 12, &DEFAULT_ATTACKED).unwrap();
        assert_eq!(cyc.len(), 8);
        // Chain edges with an attacked sender: 2→3, 5→6, 8→9, 11→12.
        let path = preset_edges(TopologyKind::Path, 12, &DEFAULT_ATTACKED).unwrap();
        assert_eq!(path, vec![(3, 2), (6, 5), (9, 8), (12, 11)]);
        assert_eq!(
            preset_edges(TopologyKind::Star, 4, &DEFAULT_ATTACKED),
            Err(AttackError::IndexOutOfRange { index: 5, m: 4 })
        );
    }

    #[test]
    fn preset_star_corrupts_navigator() {
        let model = preset_attack(TopologyKind::Star, 12, 1.0, &DEFAULT_ATTACKED, SignalKind::Sinusoid, &SignalParams::default(), 0).unwrap();
        assert!(model.corrupts_navigator());
        assert_eq!(model.len(), 4);
        let model = preset_attack(TopologyKind::Cyclic, 12, 1.0, &DEFAULT_ATTACKED, SignalKind::Sinusoid, &SignalParams::default(), 0).unwrap();
        assert!(!model.corrupts_navigator());
        assert_eq!(model.adversarial_neighbors(1), vec![2]);
    }

    #[test]
    fn view_matches_direct_sampling() {
        let model = preset_attack(TopologyKind::Cyclic, 12, 1.0, &DEFAULT_ATTACKED, SignalKind::BoundedRandom, &SignalParams::default(), 9).unwrap();
        let view = model.view(4.2);
        for ((i, j), s) in view.iter() {
            assert_eq!(Some(*s), model.sample(i, j, 4.2));
        }
        assert!(view.get(2, 1).is_none());
    }
}
