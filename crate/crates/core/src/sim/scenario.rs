//! JSON scenario files and their validated, resolved form.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{self, AttackModel, SignalKind, SignalParams, DEFAULT_ATTACKED};
use crate::fblin::{ControllerConfig, Gains};
use crate::navigator::NavigatorTrajectory;
use crate::netgraph::{CommNetwork, Edge, TopologyKind};
use crate::resilience::{FusionMode, ResilienceConfig};
use crate::vehicle::VehicleState;

use super::SimError;

pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_POLE: f64 = 2.0;
pub const DEFAULT_V_MIN: f64 = 0.1;
pub const DEFAULT_ABAR: f64 = 1.0;
pub const DEFAULT_RING_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub m: usize,
}

/// Either `topology` or `m` plus `edges` (`[receiver, sender, weight]`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
}

fn default_v_min() -> f64 {
    DEFAULT_V_MIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    /// Triple pole of every axis chain. Ignored when `gains` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pole: Option<f64>,
    /// `[k1, k2, k3]`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<[f64; 3]>,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self { pole: None, gains: None, v_min: DEFAULT_V_MIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSpec {
    #[serde(default = "default_attacked")]
    pub attacked: Vec<usize>,
}

fn default_attacked() -> Vec<usize> {
    DEFAULT_ATTACKED.to_vec()
}

impl Default for PresetSpec {
    fn default() -> Self {
        Self { attacked: default_attacked() }
    }
}

fn default_abar() -> f64 {
    DEFAULT_ABAR
}

/// Either `preset` (the reference experiment's edges for the scenario topology) or
/// explicit `edges` (`[receiver, sender]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PresetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub kind: SignalKind,
    #[serde(default = "default_abar")]
    pub abar: f64,
    /// Defaults to the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: SignalParams,
    #[serde(default)]
    pub allow_navigator_corruption: bool,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            preset: Some(PresetSpec::default()),
            edges: None,
            kind: SignalKind::default(),
            abar: DEFAULT_ABAR,
            seed: None,
            params: SignalParams::default(),
            allow_navigator_corruption: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResilienceSpec {
    pub theta: usize,
    /// Vehicle id → explicitly trusted senders. The navigator is implied.
    #[serde(default)]
    pub trusted: BTreeMap<usize, Vec<usize>>,
}

fn default_ring_radius() -> f64 {
    DEFAULT_RING_RADIUS
}

/// Vehicles start on a ring around `y_0(0)` with the navigator's velocity,
/// acceleration and heading, unless `states` lists `[px, py, θ, v, ω, F]` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "default_ring_radius")]
    pub ring_radius: f64,
    #[serde(default)]
    pub ring_phase: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<[f64; 6]>>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { ring_radius: DEFAULT_RING_RADIUS, ring_phase: 0.0, states: None }
    }
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Scenario file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub graph: GraphSpec,
    #[serde(default)]
    pub navigator: NavigatorTrajectory,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resilience: Option<ResilienceSpec>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub initial: InitialSpec,
}

impl ScenarioFile {
    /// Clean run on a built-in topology with every other setting at its default.
    pub fn topology(kind: TopologyKind, m: usize) -> Self {
        Self {
            graph: GraphSpec { topology: Some(TopologySpec { kind, m }), ..Default::default() },
            navigator: NavigatorTrajectory::default(),
            controller: ControllerSpec::default(),
            attack: None,
            resilience: None,
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
            seed: 0,
            output_dir: None,
            initial: InitialSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn resolve(&self) -> Result<Scenario, SimError> {
        Scenario::resolve(self)
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub source: ScenarioFile,
    pub topology: Option<TopologyKind>,
    pub network: CommNetwork,
    pub navigator: NavigatorTrajectory,
    pub controller: ControllerConfig,
    pub attack: Option<AttackModel>,
    pub resilience: Option<ResilienceConfig>,
    pub modes: Vec<FusionMode>,
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub initial: Vec<VehicleState>,
}

fn config<E: std::fmt::Display>(section: &str) -> impl Fn(E) -> SimError + '_ {
    move |e| SimError::Config(format!("{section}: {e}"))
}

impl Scenario {
    fn resolve(file: &ScenarioFile) -> Result<Self, SimError> {
        let (network, topology) = match (&file.graph.topology, file.graph.m, &file.graph.edges) {
            (Some(t), None, None) => (CommNetwork::build_topology(t.kind, t.m).map_err(config("graph"))?, Some(t.kind)),
            (None, Some(m), Some(edges)) => {
                let edges = edges.iter().map(|&(i, j, w)| Edge::new(i, j, w)).collect();
                (CommNetwork::from_edges(m, edges).map_err(config("graph"))?, None)
            }
            _ => return Err(SimError::Config("graph: give either `topology` or both `m` and `edges`".into())),
        };
        if !network.is_balanced() {
            return Err(SimError::Config("graph: weights are not balanced (row sums of A_m + A_0 must be 1)".into()));
        }
        if !network.navigator_reachable() {
            return Err(SimError::Config("graph: some vehicle cannot be reached from the navigator".into()));
        }
        let m = network.m();

        if !file.navigator.is_finite() {
            return Err(SimError::Config("navigator: parameters must be finite".into()));
        }

        let c = &file.controller;
        let gains = match (c.gains, c.pole) {
            (Some([k1, k2, k3]), _) => Gains { k1, k2, k3 },
            (None, pole) => Gains::from_pole(pole.unwrap_or(DEFAULT_POLE)).map_err(config("controller"))?,
        };
        let controller = ControllerConfig::new(gains, c.v_min).map_err(config("controller"))?;

        if !(file.horizon > 0.0 && file.horizon.is_finite()) || !(file.dt > 0.0 && file.dt.is_finite()) {
            return Err(SimError::Config("horizon and dt must be positive".into()));
        }
        let ratio = file.horizon / file.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(SimError::Config(format!("horizon/dt = {ratio} is not an integer")));
        }

        let resilience = match &file.resilience {
            Some(r) => {
                let mut cfg = ResilienceConfig::new(r.theta);
                for (&v, senders) in &r.trusted {
                    let set: BTreeSet<usize> = senders.iter().copied().collect();
                    cfg = cfg.with_trusted(v, set);
                }
                Some(cfg)
            }
            None => None,
        };
        let modes = match &resilience {
            Some(cfg) => cfg.plan(&network).map_err(config("resilience"))?,
            None => vec![FusionMode::Nominal; m],
        };
        let trimming = modes.iter().any(|md| !matches!(md, FusionMode::Nominal));

        let attack = match &file.attack {
            None => None,
            Some(a) => {
                let seed = a.seed.unwrap_or(file.seed);
                let (edges, preset_star) = match (&a.preset, &a.edges) {
                    (Some(p), None) => {
                        let kind = topology.ok_or_else(|| {
                            SimError::Config("attack: `preset` needs a built-in topology; list `edges` instead".into())
                        })?;
                        (adversary::preset_edges(kind, m, &p.attacked).map_err(config("attack"))?, kind == TopologyKind::Star)
                    }
                    (None, Some(edges)) => (edges.clone(), false),
                    _ => return Err(SimError::Config("attack: give exactly one of `preset` or `edges`".into())),
                };
                let model = AttackModel::on_edges(&network, &edges, a.kind, &a.params, a.abar, seed).map_err(config("attack"))?;
                if model.corrupts_navigator() && trimming && !(a.allow_navigator_corruption || preset_star) {
                    return Err(SimError::Config(
                        "attack: navigator links are trusted by the resilience layer; set allow_navigator_corruption to corrupt them"
                            .into(),
                    ));
                }
                Some(model)
            }
        };

        let y0 = file.navigator.eval(0.0);
        let initial = match &file.initial.states {
            Some(rows) => {
                if rows.len() != m {
                    return Err(SimError::Config(format!("initial: {} states for {m} vehicles", rows.len())));
                }
                rows.iter().map(|r| VehicleState::new(r[0], r[1], r[2], r[3], r[4], r[5])).collect()
            }
            None => {
                let r = file.initial.ring_radius;
                if !(r >= 0.0 && r.is_finite() && file.initial.ring_phase.is_finite()) {
                    return Err(SimError::Config("initial: ring_radius must be finite and nonnegative".into()));
                }
                let base = VehicleState::on_trajectory(&y0);
                (0..m)
                    .map(|k| {
                        let phi = file.initial.ring_phase + TAU * k as f64 / m as f64;
                        VehicleState { px: base.px + r * phi.cos(), py: base.py + r * phi.sin(), ..base }
                    })
                    .collect()
            }
        };
        let initial: Vec<VehicleState> = initial;
        if let Some(k) = initial.iter().position(|s| !s.is_finite()) {
            return Err(SimError::Config(format!("initial: state of vehicle {} is not finite", k + 1)));
        }

        Ok(Scenario {
            source: file.clone(),
            topology,
            network,
            navigator: file.navigator,
            controller,
            attack,
            resilience,
            modes,
            horizon: file.horizon,
            dt: file.dt,
            steps: steps as usize,
            seed: file.seed,
            output_dir: file.output_dir.clone(),
            initial,
        })
    }

    pub fn m(&self) -> usize {
        self.network.m()
    }

    /// Some vehicle lacks the redundancy to trim and runs untrimmed.
    pub fn worst_case(&self) -> bool {
        self.modes.iter().any(|m| matches!(m, FusionMode::WorstCase))
    }

    /// Attack bound, zero without an attack.
    pub fn abar(&self) -> f64 {
        self.attack.as_ref().map_or(0.0, AttackModel::abar)
    }

    pub fn label(&self) -> String {
        let topo = self.topology.map_or("custom", TopologyKind::name);
        let attack = if self.attack.as_ref().is_some_and(|a| !a.is_empty()) { "attacked" } else { "clean" };
        format!("{topo}-m{}-{attack}", self.m())
    }

    /// Values that fall back to artifact defaults rather than being set in the file.
    pub fn defaulted_settings(&self) -> Vec<String> {
        let f = &self.source;
        let mut out = Vec::new();
        if f.horizon == DEFAULT_HORIZON {
            out.push(format!("horizon T = {DEFAULT_HORIZON} s"));
        }
        if f.dt == DEFAULT_DT {
            out.push(format!("time step dt = {DEFAULT_DT} s"));
        }
        if f.controller.gains.is_none() && f.controller.pole.is_none() {
            out.push(format!("pole p = {DEFAULT_POLE}"));
        }
        if f.navigator == NavigatorTrajectory::default() {
            out.push("navigator: circle radius 5 m, rate 0.2 rad/s".into());
        }
        if let Some(a) = &f.attack {
            if a.abar == DEFAULT_ABAR {
                out.push(format!("attack bound abar = {DEFAULT_ABAR}"));
            }
        }
        if f.initial.states.is_none() && f.initial.ring_radius == DEFAULT_RING_RADIUS {
            out.push(format!("initial ring radius = {DEFAULT_RING_RADIUS} m"));
        }
        out
    }
}
