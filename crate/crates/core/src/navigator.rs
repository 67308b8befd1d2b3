//! Reference trajectories for the navigator, with closed-form derivatives through order 3.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Navigator output and its first three time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigatorSample {
    pub y: Vector2<f64>,
    pub dy: Vector2<f64>,
    pub ddy: Vector2<f64>,
    pub dddy: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NavigatorTrajectory {
    /// `c + a (cos(ω t + φ), sin(ω t + φ))`
    Circle {
        radius: f64,
        rate: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        phase: f64,
    },
    /// Figure-eight of Gerono: `c + (a_x sin ω t, (a_y / 2) sin 2ω t)`.
    Lemniscate {
        ax: f64,
        ay: f64,
        rate: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `origin + velocity · t`
    Line { origin: [f64; 2], velocity: [f64; 2] },
}

impl Default for NavigatorTrajectory {
    fn default() -> Self {
        NavigatorTrajectory::Circle { radius: 5.0, rate: 0.2, center: [0.0, 0.0], phase: 0.0 }
    }
}

impl NavigatorTrajectory {
    pub fn eval(&self, t: f64) -> NavigatorSample {
        match *self {
            NavigatorTrajectory::Circle { radius, rate, center, phase } => {
                let (s, c) = (rate * t + phase).sin_cos();
                let (w2, w3) = (rate * rate, rate * rate * rate);
                NavigatorSample {
                    y: Vector2::new(center[0] + radius * c, center[1] + radius * s),
                    dy: Vector2::new(-radius * rate * s, radius * rate * c),
                    ddy: Vector2::new(-radius * w2 * c, -radius * w2 * s),
                    dddy: Vector2::new(radius * w3 * s, -radius * w3 * c),
                }
            }
            NavigatorTrajectory::Lemniscate { ax, ay, rate, center } => {
                let (s1, c1) = (rate * t).sin_cos();
                let (s2, c2) = (2.0 * rate * t).sin_cos();
                let w = rate;
                let hy = 0.5 * ay;
                NavigatorSample {
                    y: Vector2::new(center[0] + ax * s1, center[1] + hy * s2),
                    dy: Vector2::new(ax * w * c1, hy * 2.0 * w * c2),
                    ddy: Vector2::new(-ax * w * w * s1, -hy * 4.0 * w * w * s2),
                    dddy: Vector2::new(-ax * w * w * w * c1, -hy * 8.0 * w * w * w * c2),
                }
            }
            NavigatorTrajectory::Line { origin, velocity } => NavigatorSample {
                y: Vector2::new(origin[0] + velocity[0] * t, origin[1] + velocity[1] * t),
                dy: Vector2::new(velocity[0], velocity[1]),
                ddy: Vector2::zeros(),
                dddy: Vector2::zeros(),
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        let vals: Vec<f64> = match *self {
            NavigatorTrajectory::Circle { radius, rate, center, phase } => vec![radius, rate, center[0], center[1], phase],
            NavigatorTrajectory::Lemniscate { ax, ay, rate, center } => vec![ax, ay, rate, center[0], center[1]],
            NavigatorTrajectory::Line { origin, velocity } => vec![origin[0], origin[1], velocity[0], velocity[1]],
        };
        vals.iter().all(|v| v.is_finite())
    }
}
