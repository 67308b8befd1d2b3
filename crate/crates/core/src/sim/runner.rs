//! The closed loop: navigator → adversary → fusion → `η̄` → control → RK4.
//!
//! The trimmed sets are chosen once per step from the signals at the start of the
//! step and held over the RK stages; the control itself is re-solved at every stage.

use std::collections::BTreeSet;

use crate::fblin::{self, ControlError, FusionWeights};
use crate::resilience::FusionMode;
use crate::vehicle::{self, ControlInput, IntegrationError, NetworkState, VehicleState};

use super::log::{LogRow, RunLog};
use super::scenario::Scenario;
use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub label: String,
    pub modes: Vec<FusionMode>,
    pub worst_case: bool,
    pub navigator_corrupted: bool,
    /// Largest `‖M ū − rhs‖_∞` over every stage of every step.
    pub max_residual: f64,
    pub steps_completed: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: RunLog,
    pub outcome: RunOutcome,
}

/// A run that stopped early, with everything logged up to the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: SimError,
    pub partial: RunResult,
}

enum StageError {
    Control(ControlError),
    Integration(IntegrationError),
}

impl From<IntegrationError> for StageError {
    fn from(e: IntegrationError) -> Self {
        StageError::Integration(e)
    }
}

fn removed_sets(trims: &[Option<crate::resilience::TrimResult>]) -> Vec<Option<BTreeSet<usize>>> {
    trims.iter().map(|t| t.as_ref().map(|t| t.removed.clone())).collect()
}

pub fn run_scenario(sc: &Scenario) -> Result<RunResult, Box<RunFailure>> {
    let m = sc.m();
    let net = &sc.network;
    let nominal = FusionWeights::nominal(net);
    let mut log = RunLog::new(m);
    log.rows.reserve(sc.steps + 1);
    let mut outcome = RunOutcome {
        label: sc.label(),
        modes: sc.modes.clone(),
        worst_case: sc.worst_case(),
        navigator_corrupted: sc.attack.as_ref().is_some_and(|a| a.corrupts_navigator()),
        max_residual: 0.0,
        steps_completed: 0,
    };
    let mut state = NetworkState { t: 0.0, states: sc.initial.clone() };
    let mut switches = vec![0u64; m];
    let mut prev_removed: Option<Vec<Option<BTreeSet<usize>>>> = None;

    let fail = |error: SimError, log: RunLog, outcome: RunOutcome| Box::new(RunFailure { error, partial: RunResult { log, outcome } });

    for k in 0..=sc.steps {
        let t = k as f64 * sc.dt;
        state.t = t;
        let nav = sc.navigator.eval(t);
        let view = sc.attack.as_ref().map(|a| a.view(t));
        let built = match fblin::build_eta(&state.states, net, &nav, view.as_ref(), Some(&sc.modes)) {
            Ok(b) => b,
            Err(source) => return Err(fail(SimError::Resilience { step: k, t, source }, log, outcome)),
        };
        let removed = removed_sets(&built.trims);
        if let Some(prev) = &prev_removed {
            for (i, (a, b)) in prev.iter().zip(&removed).enumerate() {
                if a != b {
                    switches[i] += 1;
                }
            }
        }
        prev_removed = Some(removed);

        let sol = match fblin::solve_control(&state.states, &built.eta, &built.weights, &sc.controller, &nav) {
            Ok(s) => s,
            Err(source) => return Err(fail(SimError::Control { step: k, t, source }, log, outcome)),
        };
        outcome.max_residual = outcome.max_residual.max(sol.residual);

        let clean = fblin::build_eta_with_weights(&state.states, net, &nav, None, &nominal).0;
        let mut attack_norms = vec![0.0; m];
        if let Some(v) = &view {
            for ((i, _), s) in v.iter() {
                attack_norms[i - 1] = f64::max(attack_norms[i - 1], s.a.norm());
            }
        }
        let e_tilde = state.states.iter().map(|s| (s.position() - nav.y).norm()).sum::<f64>() / m as f64;
        let eps_tilde = state.states.iter().zip(&built.refs).map(|(s, z)| (s.position() - z.y).norm()).sum::<f64>() / m as f64;
        log.rows.push(LogRow {
            t,
            states: state.states.clone(),
            nav,
            refs: built.refs.iter().map(|z| z.y).collect(),
            controls: sol.controls.clone(),
            switches: switches.clone(),
            attack_norms,
            e_tilde,
            eps_tilde,
            eta_norm: built.eta.norm(),
            eta_clean_norm: clean.norm(),
            solve_residual: sol.residual,
        });
        if k == sc.steps {
            break;
        }

        let weights = &built.weights;
        let mut max_res = outcome.max_residual;
        let stepped = vehicle::rk4_step_with(&state, sc.dt, |ts: f64, states: &[VehicleState]| {
            let nav = sc.navigator.eval(ts);
            let view = sc.attack.as_ref().map(|a| a.view(ts));
            let (eta, _) = fblin::build_eta_with_weights(states, net, &nav, view.as_ref(), weights);
            let sol = fblin::solve_control(states, &eta, weights, &sc.controller, &nav).map_err(StageError::Control)?;
            max_res = max_res.max(sol.residual);
            Ok::<Vec<ControlInput>, StageError>(sol.controls)
        });
        outcome.max_residual = max_res;
        match stepped {
            Ok((next, _)) => state = next,
            Err(e) => {
                let error = match e {
                    StageError::Control(source) => SimError::Control { step: k, t, source },
                    StageError::Integration(source) => SimError::Integration { step: k, t, source },
                };
                return Err(fail(error, log, outcome));
            }
        }
        outcome.steps_completed = k + 1;
    }
    Ok(RunResult { log, outcome })
}
