//! Input–output feedback linearization of the vehicle network.
//!
//! With `ε_i = y_i − z_i` and `η_i = [ε_i; ε̇_i; ε̈_i]`, the output jerk of each
//! vehicle is `y⃛_i = σ_i + ψ_i u_i`. Choosing the virtual inputs so that
//! `ε⃛ = K η` turns the error dynamics into `η̇ = (A + B K) η`. Because the
//! reference `z_i` mixes the neighbors' outputs, their jerks (and therefore their
//! inputs) enter every equation, which gives the implicit network-level solve
//!
//! ```text
//! M ū = Ψ⁻¹ [−σ̄ + (Ã_m ⊗ I₂) σ̄ + (ã_0 ⊗ I₂) y⃛_0 + K η̄],   M = I − Ψ⁻¹ (Ã_m ⊗ I₂) Ψ
//! ```
//!
//! where `Ã` are the fusion weights in effect (nominal, or trimmed and renormalized).

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::adversary::AttackView;
use crate::linalg::{self, LinalgError};
use crate::navigator::NavigatorSample;
use crate::netgraph::CommNetwork;
use crate::resilience::{self, FusionMode, Received, ResilienceError, TrimResult};
use crate::vehicle::{ControlInput, OutputDerivatives, VehicleState};

/// Pivots of `M` below this are treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("pole must be positive and finite, got {0}")]
    BadPole(f64),
    #[error("gains ({k1}, {k2}, {k3}) do not give a Hurwitz error chain")]
    NotHurwitz { k1: f64, k2: f64, k3: f64 },
    #[error("v_min must be positive, got {0}")]
    BadSpeedGuard(f64),
    #[error("Ψ is singular: vehicle {vehicle} has speed {speed:.3e} below the guard {v_min}")]
    Singularity { vehicle: usize, speed: f64, v_min: f64 },
    #[error("M is singular: {0}")]
    SingularM(LinalgError),
    #[error(transparent)]
    Resilience(#[from] ResilienceError),
}

/// Per-axis feedback `u⁺ = −k1 ε − k2 ε̇ − k3 ε̈`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Gains {
    /// Places all three poles of each axis chain at `−p`: `(s + p)³`.
    pub fn from_pole(p: f64) -> Result<Self, ControlError> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(ControlError::BadPole(p));
        }
        Ok(Self { k1: p * p * p, k2: 3.0 * p * p, k3: 3.0 * p })
    }

    /// Routh test for `s³ + k3 s² + k2 s + k1`.
    pub fn is_hurwitz(&self) -> bool {
        self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 && self.k2 * self.k3 > self.k1
    }

    fn feedback(&self, eta_i: &[f64]) -> Vector2<f64> {
        Vector2::new(
            -self.k1 * eta_i[0] - self.k2 * eta_i[2] - self.k3 * eta_i[4],
            -self.k1 * eta_i[1] - self.k2 * eta_i[3] - self.k3 * eta_i[5],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub gains: Gains,
    /// Smallest admissible `|v_x|`; `det ψ_i = v_x`.
    pub v_min: f64,
}

impl ControllerConfig {
    pub fn new(gains: Gains, v_min: f64) -> Result<Self, ControlError> {
        if !gains.is_hurwitz() {
            return Err(ControlError::NotHurwitz { k1: gains.k1, k2: gains.k2, k3: gains.k3 });
        }
        if !(v_min > 0.0 && v_min.is_finite()) {
            return Err(ControlError::BadSpeedGuard(v_min));
        }
        Ok(Self { gains, v_min })
    }

    pub fn from_pole(p: f64, v_min: f64) -> Result<Self, ControlError> {
        Self::new(Gains::from_pole(p)?, v_min)
    }
}

/// Single-vehicle error chain `(𝒜, ℬ)` in the `[ε_x, ε_y, ε̇_x, ε̇_y, ε̈_x, ε̈_y]` ordering.
pub fn chain_block() -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(6, 6);
    for k in 0..4 {
        a[(k, k + 2)] = 1.0;
    }
    let mut b = DMatrix::zeros(6, 2);
    b[(4, 0)] = 1.0;
    b[(5, 1)] = 1.0;
    (a, b)
}

/// `𝐀 = I_m ⊗ 𝒜`, `𝐁 = I_m ⊗ ℬ`.
pub fn chain_matrices(m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (a, b) = chain_block();
    (linalg::block_diagonal(m, &a), linalg::block_diagonal(m, &b))
}

/// `𝐊 ∈ ℝ^{2m×6m}` with `u⁺ = 𝐊 η̄`.
pub fn gain_matrix(m: usize, g: &Gains) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(2, 6);
    for axis in 0..2 {
        k[(axis, axis)] = -g.k1;
        k[(axis, axis + 2)] = -g.k2;
        k[(axis, axis + 4)] = -g.k3;
    }
    linalg::block_diagonal(m, &k)
}

/// `𝐀 + 𝐁𝐊`.
pub fn closed_loop_matrix(m: usize, g: &Gains) -> DMatrix<f64> {
    let (a, b) = chain_matrices(m);
    a + b * gain_matrix(m, g)
}

/// `(σ_i, ψ_i)` with `y⃛_i = σ_i + ψ_i u_i`.
pub fn sigma_psi(s: &VehicleState) -> (Vector2<f64>, Matrix2<f64>) {
    let (sn, cs) = s.theta.sin_cos();
    let (v, w, f) = (s.vx, s.omega, s.force);
    let sigma = Vector2::new(-(2.0 * f * w * sn + v * w * w * cs), 2.0 * f * w * cs - v * w * w * sn);
    let psi = Matrix2::new(cs, -v * sn, sn, v * cs);
    (sigma, psi)
}

/// Output jerk `σ_i + ψ_i u_i` of one vehicle.
pub fn output_jerk(s: &VehicleState, u: &ControlInput) -> Vector2<f64> {
    let (sigma, psi) = sigma_psi(s);
    sigma + psi * Vector2::new(u.u1, u.u2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationTerms {
    pub sigma: Vec<Vector2<f64>>,
    pub psi: Vec<Matrix2<f64>>,
    /// `λ_i = σ_i − z⃛_i`, available once the inputs are known.
    pub lambda: Option<Vec<Vector2<f64>>>,
}

impl LinearizationTerms {
    pub fn new(states: &[VehicleState]) -> Self {
        let (sigma, psi) = states.iter().map(sigma_psi).unzip();
        Self { sigma, psi, lambda: None }
    }

    /// Fills `λ` from the applied inputs: `z⃛_i = Σ_j w̃_ij y⃛_j + w̃_i0 y⃛_0`.
    pub fn with_lambda(mut self, weights: &FusionWeights, controls: &[ControlInput], nav: &NavigatorSample) -> Self {
        let jerk: Vec<Vector2<f64>> = (0..self.sigma.len())
            .map(|i| self.sigma[i] + self.psi[i] * Vector2::new(controls[i].u1, controls[i].u2))
            .collect();
        let lambda = weights
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let zddd: Vector2<f64> = row.iter().map(|&(j, w)| if j == 0 { nav.dddy * w } else { jerk[j - 1] * w }).sum();
                self.sigma[i] - zddd
            })
            .collect();
        self.lambda = Some(lambda);
        self
    }
}

/// Fusion weights in effect for every vehicle: `(sender, w̃_ij)` in sender order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl FusionWeights {
    pub fn nominal(net: &CommNetwork) -> Self {
        Self { rows: (1..=net.m()).map(|i| net.in_neighbors(i).to_vec()).collect() }
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// `(Ã_m, ã_0)`
    pub fn matrices(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.m();
        let mut adj = DMatrix::zeros(m, m);
        let mut nav = DVector::zeros(m);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                if j == 0 {
                    nav[i] = w;
                } else {
                    adj[(i, j - 1)] = w;
                }
            }
        }
        (adj, nav)
    }
}

/// Stacked error coordinates `η̄ ∈ ℝ^{6m}`, vehicle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub eta: DVector<f64>,
}

impl ErrorState {
    pub fn from_references(states: &[VehicleState], refs: &[OutputDerivatives]) -> Self {
        let mut eta = DVector::zeros(6 * states.len());
        for (i, (s, z)) in states.iter().zip(refs).enumerate() {
            let o = s.output_derivatives();
            let e = [o.y - z.y, o.dy - z.dy, o.ddy - z.ddy];
            for (k, v) in e.iter().enumerate() {
                eta[6 * i + 2 * k] = v.x;
                eta[6 * i + 2 * k + 1] = v.y;
            }
        }
        Self { eta }
    }

    pub fn m(&self) -> usize {
        self.eta.len() / 6
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.eta.as_slice()[6 * i..6 * i + 6]
    }

    pub fn epsilon(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.eta[6 * i], self.eta[6 * i + 1])
    }

    pub fn norm(&self) -> f64 {
        self.eta.norm()
    }
}

/// Signals received by every vehicle, corrupted where `attacks` says so.
pub fn gather(
    net: &CommNetwork,
    states: &[VehicleState],
    nav: &NavigatorSample,
    attacks: Option<&AttackView>,
) -> Vec<Vec<Received>> {
    let outputs: Vec<OutputDerivatives> = states.iter().map(VehicleState::output_derivatives).collect();
    let nav_out = OutputDerivatives::from_navigator(nav);
    (1..=net.m())
        .map(|i| {
            net.in_neighbors(i)
                .iter()
                .map(|&(j, w)| {
                    let clean = if j == 0 { nav_out } else { outputs[j - 1] };
                    let signal = match attacks {
                        Some(view) => view.corrupt(&clean, i, j),
                        None => clean,
                    };
                    Received { sender: j, weight: w, signal }
                })
                .collect()
        })
        .collect()
}

/// Chooses each vehicle's fusion weights from its fusion mode.
pub fn select_weights(
    received: &[Vec<Received>],
    modes: &[FusionMode],
) -> Result<(FusionWeights, Vec<Option<TrimResult>>), ResilienceError> {
    let mut rows = Vec::with_capacity(received.len());
    let mut trims = Vec::with_capacity(received.len());
    for (idx, (recv, mode)) in received.iter().zip(modes).enumerate() {
        match mode {
            FusionMode::Nominal | FusionMode::WorstCase => {
                rows.push(recv.iter().map(|r| (r.sender, r.weight)).collect());
                trims.push(None);
            }
            FusionMode::Guarded { trusted } => {
                let theta = trusted.len();
                let (_, t) = resilience::resilient_reference(idx + 1, recv, trusted, theta)?;
                rows.push(t.kept.clone());
                trims.push(Some(t));
            }
        }
    }
    Ok((FusionWeights { rows }, trims))
}

pub fn references(received: &[Vec<Received>], weights: &FusionWeights) -> Vec<OutputDerivatives> {
    received.iter().zip(&weights.rows).map(|(recv, row)| resilience::fuse(recv, row)).collect()
}

/// Everything produced while forming `η̄` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaBuild {
    pub eta: ErrorState,
    pub refs: Vec<OutputDerivatives>,
    pub weights: FusionWeights,
    pub trims: Vec<Option<TrimResult>>,
}

/// Forms `η̄` from the (possibly corrupted, possibly trimmed) local references.
///
/// `modes = None` uses the nominal weights of `net`.
pub fn build_eta(
    states: &[VehicleState],
    net: &CommNetwork,
    nav: &NavigatorSample,
    attacks: Option<&AttackView>,
    modes: Option<&[FusionMode]>,
) -> Result<EtaBuild, ResilienceError> {
    let received = gather(net, states, nav, attacks);
    let (weights, trims) = match modes {
        Some(modes) => select_weights(&received, modes)?,
        None => (FusionWeights::nominal(net), vec![None; net.m()]),
    };
    let refs = references(&received, &weights);
    let eta = ErrorState::from_references(states, &refs);
    Ok(EtaBuild { eta, refs, weights, trims })
}

/// Same as [`build_eta`] but with the fusion weights fixed in advance.
pub fn build_eta_with_weights(
    states: &[VehicleState],
    net: &CommNetwork,
    nav: &NavigatorSample,
    attacks: Option<&AttackView>,
    weights: &FusionWeights,
) -> (ErrorState, Vec<OutputDerivatives>) {
    let received = gather(net, states, nav, attacks);
    let refs = references(&received, weights);
    (ErrorState::from_references(states, &refs), refs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    pub controls: Vec<ControlInput>,
    /// `‖M ū − rhs‖_∞`
    pub residual: f64,
    pub condition: f64,
}

/// Assembles `M` and the right-hand side of the implicit control equation.
pub fn control_system(
    terms: &LinearizationTerms,
    psi_inv: &[Matrix2<f64>],
    eta: &ErrorState,
    weights: &FusionWeights,
    gains: &Gains,
    nav: &NavigatorSample,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = weights.m();
    let mut mat = DMatrix::identity(2 * m, 2 * m);
    let mut rhs = DVector::zeros(2 * m);
    for (i, row) in weights.rows.iter().enumerate() {
        let mut acc = -terms.sigma[i] + gains.feedback(eta.block(i));
        for &(j, w) in row {
            if j == 0 {
                acc += nav.dddy * w;
            } else {
                acc += terms.sigma[j - 1] * w;
                let block = -(psi_inv[i] * terms.psi[j - 1]) * w;
                let mut view = mat.view_mut((2 * i, 2 * (j - 1)), (2, 2));
                view += block;
            }
        }
        let r = psi_inv[i] * acc;
        rhs[2 * i] = r.x;
        rhs[2 * i + 1] = r.y;
    }
    (mat, rhs)
}

/// Solves the implicit network control equation by dense LU with partial pivoting.
pub fn solve_control(
    states: &[VehicleState],
    eta: &ErrorState,
    weights: &FusionWeights,
    cfg: &ControllerConfig,
    nav: &NavigatorSample,
) -> Result<ControlSolution, ControlError> {
    for (i, s) in states.iter().enumerate() {
        if !(s.vx.abs() >= cfg.v_min) {
            return Err(ControlError::Singularity { vehicle: i + 1, speed: s.vx, v_min: cfg.v_min });
        }
    }
    let terms = LinearizationTerms::new(states);
    let psi_inv: Vec<Matrix2<f64>> = states
        .iter()
        .map(|s| {
            let (sn, cs) = s.theta.sin_cos();
            Matrix2::new(cs, sn, -sn / s.vx, cs / s.vx)
        })
        .collect();
    let (mat, rhs) = control_system(&terms, &psi_inv, eta, weights, &cfg.gains, nav);
    let solved = linalg::lu_solve(&mat, &rhs, PIVOT_TOL).map_err(ControlError::SingularM)?;
    let controls = (0..states.len())
        .map(|i| ControlInput { u1: solved.x[2 * i], u2: solved.x[2 * i + 1] })
        .collect();
    Ok(ControlSolution { controls, residual: solved.residual, condition: solved.condition })
}
