//! Distributed trajectory tracking for networks of unicycle vehicles.
//!
//! Vehicles follow a navigator (node 0) through exact input–output feedback
//! linearization, fusing neighbor outputs into a local reference. When some links
//! are corrupted, each vehicle can trim suspicious neighbors against a trusted set.

// Negated float comparisons are used on purpose so that NaN fails every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod analysis;
pub mod fblin;
pub mod linalg;
pub mod navigator;
pub mod netgraph;
pub mod resilience;
pub mod sim;
pub mod vehicle;

pub use adversary::{AttackModel, AttackSignal, AttackView, SignalKind, SignalParams};
pub use analysis::{MetricsSeries, RobustnessCertificate};
pub use fblin::{ControllerConfig, ErrorState, FusionWeights, Gains};
pub use navigator::{NavigatorSample, NavigatorTrajectory};
pub use netgraph::{CommNetwork, Edge, TopologyKind};
pub use resilience::{FusionMode, ResilienceConfig, TrimResult};
pub use vehicle::{ControlInput, NetworkState, OutputDerivatives, VehicleState};
pub use sim::{run_experiment_grid, run_scenario, RunLog, Scenario, ScenarioFile, SimError};
