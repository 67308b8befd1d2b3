//! Dynamically extended nonholonomic vehicle and fixed-step RK4 integration of the network.
//!
//! Per vehicle: `ṗx = v cos θ`, `ṗy = v sin θ`, `θ̇ = ω`, `v̇ = F`, `ω̇ = u2`, `Ḟ = u1`.
//! Force `F` is a state (dynamic extension), so the planar position has relative
//! degree three in both channels.

use nalgebra::{Vector2, Vector6};
use thiserror::Error;

use crate::navigator::NavigatorSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("integration diverged: vehicle {vehicle} has a non-finite state at t = {t}")]
    Divergence { vehicle: usize, t: f64 },
    #[error("expected {expected} control inputs, got {got}")]
    ControlCount { expected: usize, got: usize },
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub px: f64,
    pub py: f64,
    /// Heading, not wrapped.
    pub theta: f64,
    pub vx: f64,
    pub omega: f64,
    pub force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Jerk channel, `Ḟ`.
    pub u1: f64,
    /// Torque channel, `ω̇`.
    pub u2: f64,
}

/// Position output and its first two derivatives, all analytic in the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputDerivatives {
    pub y: Vector2<f64>,
    pub dy: Vector2<f64>,
    pub ddy: Vector2<f64>,
}

impl OutputDerivatives {
    pub fn zeros() -> Self {
        Self { y: Vector2::zeros(), dy: Vector2::zeros(), ddy: Vector2::zeros() }
    }

    pub fn from_navigator(s: &NavigatorSample) -> Self {
        Self { y: s.y, dy: s.dy, ddy: s.ddy }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub states: Vec<VehicleState>,
}

impl VehicleState {
    pub fn new(px: f64, py: f64, theta: f64, vx: f64, omega: f64, force: f64) -> Self {
        Self { px, py, theta, vx, omega, force }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.px, self.py, self.theta, self.vx, self.omega, self.force)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.px, self.py)
    }

    /// The state whose output and first two derivatives coincide with the navigator's.
    ///
    /// Requires a nonzero navigator speed.
    pub fn on_trajectory(s: &NavigatorSample) -> Self {
        let v = s.dy.norm();
        let theta = s.dy.y.atan2(s.dy.x);
        let omega = (s.dy.x * s.ddy.y - s.dy.y * s.ddy.x) / (v * v);
        let force = s.dy.dot(&s.ddy) / v;
        Self::new(s.y.x, s.y.y, theta, v, omega, force)
    }

    pub fn output_derivatives(&self) -> OutputDerivatives {
        let (s, c) = self.theta.sin_cos();
        let v = self.vx;
        let vw = v * self.omega;
        OutputDerivatives {
            y: Vector2::new(self.px, self.py),
            dy: Vector2::new(v * c, v * s),
            ddy: Vector2::new(self.force * c - vw * s, self.force * s + vw * c),
        }
    }
}

/// Right-hand side `(ṗx, ṗy, θ̇, v̇, ω̇, Ḟ)`.
pub fn derivative(s: &VehicleState, u: &ControlInput) -> Vector6<f64> {
    let (sn, cs) = s.theta.sin_cos();
    Vector6::new(s.vx * cs, s.vx * sn, s.omega, s.force, u.u2, u.u1)
}

fn check_finite(states: &[VehicleState], t: f64) -> Result<(), IntegrationError> {
    match states.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(IntegrationError::Divergence { vehicle: i + 1, t }),
        None => Ok(()),
    }
}

fn offset(states: &[VehicleState], k: &[Vector6<f64>], h: f64) -> Vec<VehicleState> {
    states
        .iter()
        .zip(k)
        .map(|(s, d)| VehicleState::from_vector(&(s.to_vector() + d * h)))
        .collect()
}

/// One classical RK4 step where the controls are produced by `control` at every stage.
///
/// `control(t, states)` is evaluated at the four RK stages; the first evaluation
/// corresponds to the state at the start of the step. Returns the new network
/// state together with the stage-one controls.
pub fn rk4_step_with<E, F>(net: &NetworkState, dt: f64, mut control: F) -> Result<(NetworkState, Vec<ControlInput>), E>
where
    F: FnMut(f64, &[VehicleState]) -> Result<Vec<ControlInput>, E>,
    E: From<IntegrationError>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegrationError::BadStep(dt).into());
    }
    let m = net.states.len();
    let rates = |states: &[VehicleState], u: &[ControlInput]| -> Result<Vec<Vector6<f64>>, IntegrationError> {
        if u.len() != m {
            return Err(IntegrationError::ControlCount { expected: m, got: u.len() });
        }
        Ok(states.iter().zip(u).map(|(s, u)| derivative(s, u)).collect())
    };

    let t = net.t;
    let u1 = control(t, &net.states)?;
    let k1 = rates(&net.states, &u1)?;
    let s2 = offset(&net.states, &k1, dt / 2.0);
    check_finite(&s2, t + dt / 2.0)?;
    let k2 = rates(&s2, &control(t + dt / 2.0, &s2)?)?;
    let s3 = offset(&net.states, &k2, dt / 2.0);
    check_finite(&s3, t + dt / 2.0)?;
    let k3 = rates(&s3, &control(t + dt / 2.0, &s3)?)?;
    let s4 = offset(&net.states, &k3, dt);
    check_finite(&s4, t + dt)?;
    let k4 = rates(&s4, &control(t + dt, &s4)?)?;

    let states: Vec<VehicleState> = (0..m)
        .map(|i| {
            let x = net.states[i].to_vector() + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
            VehicleState::from_vector(&x)
        })
        .collect();
    check_finite(&states, t + dt)?;
    Ok((NetworkState { t: t + dt, states }, u1))
}

/// RK4 step with the given controls held constant over the step.
pub fn step(net: &NetworkState, controls: &[ControlInput], dt: f64) -> Result<NetworkState, IntegrationError> {
    rk4_step_with(net, dt, |_, _| Ok::<_, IntegrationError>(controls.to_vec())).map(|(s, _)| s)
}
