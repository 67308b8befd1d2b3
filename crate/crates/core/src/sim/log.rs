//! Per-step run log and its CSV form.
//!
//! Floats are written with 17 significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DVector, Vector2};

use crate::analysis::{self, MetricsSeries};
use crate::fblin::{self, FusionWeights};
use crate::navigator::NavigatorSample;
use crate::netgraph::CommNetwork;
use crate::vehicle::{ControlInput, VehicleState};

use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub states: Vec<VehicleState>,
    pub nav: NavigatorSample,
    /// Reference position `z_i` in effect (trimmed where trimming is active).
    pub refs: Vec<Vector2<f64>>,
    /// Inputs applied over the step starting at `t`.
    pub controls: Vec<ControlInput>,
    /// Cumulative number of changes of each vehicle's trimmed set.
    pub switches: Vec<u64>,
    /// Largest `‖a_ij(t)‖` over each vehicle's corrupted incoming links.
    pub attack_norms: Vec<f64>,
    pub e_tilde: f64,
    pub eps_tilde: f64,
    pub eta_norm: f64,
    /// `‖η̄‖` computed with nominal weights and uncorrupted signals.
    pub eta_clean_norm: f64,
    pub solve_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub m: usize,
    pub rows: Vec<LogRow>,
}

const STATE_FIELDS: [&str; 6] = ["px", "py", "theta", "v", "omega", "force"];

impl RunLog {
    pub fn new(m: usize) -> Self {
        Self { m, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn metrics(&self) -> MetricsSeries {
        let t = self.times();
        let outputs: Vec<Vec<Vector2<f64>>> = self.rows.iter().map(|r| r.states.iter().map(|s| s.position()).collect()).collect();
        let nav: Vec<Vector2<f64>> = self.rows.iter().map(|r| r.nav.y).collect();
        let refs: Vec<Vec<Vector2<f64>>> = self.rows.iter().map(|r| r.refs.clone()).collect();
        let eta: Vec<f64> = self.rows.iter().map(|r| r.eta_norm).collect();
        analysis::compute_metrics(&t, &outputs, &nav, &refs, &eta)
    }

    /// `η̄` recomputed from the logged states with the nominal weights of `net`
    /// and uncorrupted signals.
    pub fn clean_eta(&self, net: &CommNetwork) -> Vec<DVector<f64>> {
        let weights = FusionWeights::nominal(net);
        self.rows
            .iter()
            .map(|r| fblin::build_eta_with_weights(&r.states, net, &r.nav, None, &weights).0.eta)
            .collect()
    }

    pub fn column(&self, f: impl Fn(&LogRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn header(m: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for i in 1..=m {
            h.extend(STATE_FIELDS.iter().map(|f| format!("v{i}_{f}")));
        }
        for d in ["y0", "dy0", "ddy0", "dddy0"] {
            h.push(format!("{d}_x"));
            h.push(format!("{d}_y"));
        }
        for i in 1..=m {
            h.push(format!("z{i}_x"));
            h.push(format!("z{i}_y"));
        }
        for i in 1..=m {
            h.push(format!("u{i}_1"));
            h.push(format!("u{i}_2"));
        }
        h.extend((1..=m).map(|i| format!("sw{i}")));
        h.extend((1..=m).map(|i| format!("a{i}_norm")));
        h.extend(["e_tilde", "eps_tilde", "eta_norm", "eta_clean_norm", "solve_residual"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::header(self.m).join(","))?;
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            let mut put = |v: f64| {
                if !line.is_empty() {
                    line.push(',');
                }
                let _ = write!(line, "{v:.16e}");
            };
            put(r.t);
            for s in &r.states {
                for v in s.to_vector().iter() {
                    put(*v);
                }
            }
            for v in [r.nav.y, r.nav.dy, r.nav.ddy, r.nav.dddy] {
                put(v.x);
                put(v.y);
            }
            for z in &r.refs {
                put(z.x);
                put(z.y);
            }
            for u in &r.controls {
                put(u.u1);
                put(u.u2);
            }
            for &s in &r.switches {
                let _ = write!(line, ",{s}");
            }
            let mut put = |v: f64| {
                let _ = write!(line, ",{v:.16e}");
            };
            for &a in &r.attack_norms {
                put(a);
            }
            for v in [r.e_tilde, r.eps_tilde, r.eta_norm, r.eta_clean_norm, r.solve_residual] {
                put(v);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SimError> {
        let bad = |line: usize, msg: String| SimError::Log(format!("line {line}: {msg}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?.map_err(|e| bad(1, e.to_string()))?;
        let cols: Vec<&str> = header.split(',').collect();
        // 1 + 6m + 8 + 2m + 2m + m + m + 5 = 12m + 14
        if cols.len() < 26 || !(cols.len() - 14).is_multiple_of(12) {
            return Err(bad(1, format!("{} columns do not match any vehicle count", cols.len())));
        }
        let m = (cols.len() - 14) / 12;
        if cols != Self::header(m) {
            return Err(bad(1, "unexpected header".into()));
        }
        let mut log = RunLog::new(m);
        for (k, line) in lines.enumerate() {
            let n = k + 2;
            let line = line.map_err(|e| bad(n, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(bad(n, format!("{} fields, expected {}", fields.len(), cols.len())));
            }
            let mut it = fields.into_iter();
            let mut num = || -> Result<f64, SimError> {
                let f = it.next().expect("length checked");
                f.parse::<f64>().map_err(|e| bad(n, format!("`{f}`: {e}")))
            };
            let t = num()?;
            let mut states = Vec::with_capacity(m);
            for _ in 0..m {
                states.push(VehicleState::new(num()?, num()?, num()?, num()?, num()?, num()?));
            }
            let vec2 = |num: &mut dyn FnMut() -> Result<f64, SimError>| -> Result<Vector2<f64>, SimError> {
                Ok(Vector2::new(num()?, num()?))
            };
            let nav = NavigatorSample { y: vec2(&mut num)?, dy: vec2(&mut num)?, ddy: vec2(&mut num)?, dddy: vec2(&mut num)? };
            let refs = (0..m).map(|_| vec2(&mut num)).collect::<Result<_, _>>()?;
            let controls = (0..m).map(|_| Ok(ControlInput { u1: num()?, u2: num()? })).collect::<Result<_, SimError>>()?;
            let switches = (0..m)
                .map(|_| {
                    let v = num()?;
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(bad(n, format!("switch count {v} is not a count")));
                    }
                    Ok(v as u64)
                })
                .collect::<Result<_, _>>()?;
            let attack_norms = (0..m).map(|_| num()).collect::<Result<_, _>>()?;
            log.rows.push(LogRow {
                t,
                states,
                nav,
                refs,
                controls,
                switches,
                attack_norms,
                e_tilde: num()?,
                eps_tilde: num()?,
                eta_norm: num()?,
                eta_clean_norm: num()?,
                solve_residual: num()?,
            });
        }
        Ok(log)
    }

    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        Self::read_csv(text.as_bytes())
    }
}
