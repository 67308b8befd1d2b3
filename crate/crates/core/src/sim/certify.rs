//! Ultimate-bound certificate for a scenario, with `ρ_d` estimated from a run.

use nalgebra::DMatrix;

use crate::analysis::{self, CertificateReport, STEADY_FRACTION};
use crate::fblin;

use super::runner::{run_scenario, RunResult};
use super::scenario::Scenario;
use super::SimError;

/// Builds the certificate from a finished run of `sc`.
///
/// `ρ̄` is reconstructed from `η̄` recomputed with the nominal weights and clean
/// signals, so it captures exactly what the corruption injects into the nominal
/// error dynamics. `Q = I` and `c_ε = 1`.
pub fn certify_run(sc: &Scenario, run: &RunResult) -> Result<CertificateReport, SimError> {
    let abar = sc.abar();
    if !(abar > 0.0) {
        return Err(SimError::Config("certify: the scenario needs an attack with abar > 0".into()));
    }
    let m = sc.m();
    let a_c = fblin::closed_loop_matrix(m, &sc.controller.gains);
    let b = fblin::chain_matrices(m).1;
    let q = DMatrix::identity(6 * m, 6 * m);
    let s = analysis::selection_matrix(m);

    let log = &run.log;
    let t = log.times();
    let eta = log.clean_eta(&sc.network);
    let residuals = analysis::disturbance_residuals(&t, &eta, &a_c)?;
    let rho_d = analysis::estimate_rho_d(&residuals, abar)?;
    let certificate = analysis::ultimate_bound(&a_c, &b, &q, rho_d, abar, &s, 1.0)?;

    let eta_norms: Vec<f64> = eta.iter().map(|e| e.norm()).collect();
    let out_err: Vec<f64> = log
        .rows
        .iter()
        .map(|r| r.states.iter().map(|st| (st.position() - r.nav.y).norm()).fold(0.0, f64::max))
        .collect();
    Ok(CertificateReport {
        label: sc.label(),
        certificate,
        worst_case: sc.worst_case(),
        limsup_eta: Some(analysis::steady_max(&t, &eta_norms, STEADY_FRACTION)),
        limsup_output: Some(analysis::steady_max(&t, &out_err, STEADY_FRACTION)),
    })
}

pub fn certify(sc: &Scenario) -> Result<(CertificateReport, RunResult), SimError> {
    if !(sc.abar() > 0.0) {
        return Err(SimError::Config("certify: the scenario needs an attack with abar > 0".into()));
    }
    let run = run_scenario(sc).map_err(|f| f.error)?;
    Ok((certify_run(sc, &run)?, run))
}
