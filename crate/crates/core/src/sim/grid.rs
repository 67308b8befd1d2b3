//! The reference experiment: three topologies, each clean and under the preset attack.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::adversary::SignalKind;
use crate::analysis::{self, STEADY_FRACTION};
use crate::netgraph::TopologyKind;
use crate::resilience::FusionMode;

use super::log::RunLog;
use super::plot::{self, Chart, Series};
use super::runner::{run_scenario, RunResult};
use super::scenario::{AttackSpec, ResilienceSpec, Scenario, ScenarioFile, DEFAULT_ABAR, DEFAULT_DT, DEFAULT_HORIZON};
use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub m: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub abar: f64,
    pub signal: SignalKind,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { m: 12, horizon: DEFAULT_HORIZON, dt: DEFAULT_DT, seed: 0, abar: DEFAULT_ABAR, signal: SignalKind::default() }
    }
}

impl GridOptions {
    /// Scenario of one grid cell. Attacked cells trim with `ϑ = 1` and the
    /// navigator as the trusted neighbor.
    pub fn scenario(&self, kind: TopologyKind, attacked: bool) -> ScenarioFile {
        let mut f = ScenarioFile::topology(kind, self.m);
        f.horizon = self.horizon;
        f.dt = self.dt;
        f.seed = self.seed;
        if attacked {
            f.attack = Some(AttackSpec { kind: self.signal, abar: self.abar, ..Default::default() });
            f.resilience = Some(ResilienceSpec { theta: 1, ..Default::default() });
        }
        f
    }
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub topology: TopologyKind,
    pub attacked: bool,
    pub scenario: Scenario,
    pub result: RunResult,
}

impl GridRun {
    pub fn name(&self) -> String {
        format!("{}_{}", self.topology.name(), if self.attacked { "attacked" } else { "clean" })
    }

    pub fn steady_e_tilde(&self) -> f64 {
        let log = &self.result.log;
        analysis::steady_max(&log.times(), &log.column(|r| r.e_tilde), STEADY_FRACTION)
    }

    pub fn steady_eps_tilde(&self) -> f64 {
        let log = &self.result.log;
        analysis::steady_max(&log.times(), &log.column(|r| r.eps_tilde), STEADY_FRACTION)
    }

    fn mode_label(&self) -> &'static str {
        let modes = &self.result.outcome.modes;
        if modes.iter().all(|m| *m == FusionMode::Nominal) {
            "nominal"
        } else if modes.contains(&FusionMode::WorstCase) {
            "worst-case"
        } else {
            "trimmed"
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub options: GridOptions,
    /// Topology-major, clean before attacked.
    pub runs: Vec<GridRun>,
    pub defaults: Vec<String>,
}

pub fn run_experiment_grid(opts: &GridOptions) -> Result<GridReport, SimError> {
    let mut cells = Vec::new();
    for kind in TopologyKind::ALL {
        for attacked in [false, true] {
            cells.push((kind, attacked, opts.scenario(kind, attacked).resolve()?));
        }
    }
    let defaults = cells.last().map(|c| c.2.defaulted_settings()).unwrap_or_default();
    let results: Vec<Result<RunResult, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = cells
            .iter()
            .map(|(_, _, sc)| s.spawn(move || run_scenario(sc).map_err(|f| f.error)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect()
    });
    let mut runs = Vec::with_capacity(cells.len());
    for ((topology, attacked, scenario), result) in cells.into_iter().zip(results) {
        runs.push(GridRun { topology, attacked, scenario, result: result? });
    }
    Ok(GridReport { options: opts.clone(), runs, defaults })
}

impl GridReport {
    pub fn run(&self, kind: TopologyKind, attacked: bool) -> &GridRun {
        self.runs.iter().find(|r| r.topology == kind && r.attacked == attacked).expect("every cell is run")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let o = &self.options;
        let _ = writeln!(s, "experiment grid: m = {}, T = {} s, dt = {} s, seed = {}, abar = {}", o.m, o.horizon, o.dt, o.seed, o.abar);
        let _ = writeln!(s, "steady state = max over the final {:.0}% of the horizon", 100.0 * STEADY_FRACTION);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<18} {:<11} {:>14} {:>14} {:>14} {:>12} {:>9}",
            "run", "fusion", "ss e~", "ss eps~", "final e~", "max resid", "switches"
        );
        for r in &self.runs {
            let last = r.result.log.rows.last().expect("nonempty log");
            let _ = writeln!(
                s,
                "{:<18} {:<11} {:>14.6e} {:>14.6e} {:>14.6e} {:>12.3e} {:>9}",
                r.name(),
                r.mode_label(),
                r.steady_e_tilde(),
                r.steady_eps_tilde(),
                last.e_tilde,
                r.result.outcome.max_residual,
                last.switches.iter().sum::<u64>()
            );
        }
        if !self.defaults.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "artifact defaults (not fixed by the reference experiment):");
            for d in &self.defaults {
                let _ = writeln!(s, "  - {d}");
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("run,topology,attacked,fusion,steady_e_tilde,steady_eps_tilde,final_e_tilde,max_residual\n");
        for r in &self.runs {
            let last = r.result.log.rows.last().expect("nonempty log");
            let _ = writeln!(
                s,
                "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.name(),
                r.topology.name(),
                r.attacked,
                r.mode_label(),
                r.steady_e_tilde(),
                r.steady_eps_tilde(),
                last.e_tilde,
                r.result.outcome.max_residual
            );
        }
        s
    }

    fn overlay(&self, attacked: bool, title: &str, f: impl Fn(&super::log::LogRow) -> f64) -> Chart {
        let mut c = Chart::new(title, "t (s)", "error (m)");
        c.log_y = true;
        for kind in TopologyKind::ALL {
            let log: &RunLog = &self.run(kind, attacked).result.log;
            c.series.push(Series::new(kind.name(), log.rows.iter().map(|r| (r.t, f(r))).collect()));
        }
        c
    }

    /// Six logs, six trajectory plots, two error overlays and the summary.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: &[u8]| -> Result<(), SimError> {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            written.push(p);
            Ok(())
        };
        for r in &self.runs {
            put(&format!("{}.csv", r.name()), r.result.log.to_csv().as_bytes())?;
            let title = format!("{} topology, {}", r.topology.name(), if r.attacked { "attacked" } else { "clean" });
            put(&format!("{}_trajectory.svg", r.name()), plot::trajectory_chart(&r.result.log, &title).to_svg(760.0, 620.0).as_bytes())?;
        }
        let e = [self.overlay(false, "e~ clean", |r| r.e_tilde), self.overlay(true, "e~ attacked", |r| r.e_tilde)];
        put("errors_e_tilde.svg", plot::stacked_svg(&e, 760.0, 400.0).as_bytes())?;
        let eps = [self.overlay(false, "eps~ clean", |r| r.eps_tilde), self.overlay(true, "eps~ attacked", |r| r.eps_tilde)];
        put("errors_eps_tilde.svg", plot::stacked_svg(&eps, 760.0, 400.0).as_bytes())?;
        put("summary.txt", self.summary().as_bytes())?;
        put("summary.csv", self.summary_csv().as_bytes())?;
        Ok(written)
    }
}
