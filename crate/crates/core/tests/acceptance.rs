//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhtrack_core::adversary::{SignalKind, SignalParams};
use nhtrack_core::analysis::{self, STEADY_FRACTION};
use nhtrack_core::fblin;
use nhtrack_core::resilience::{self, Received};
use nhtrack_core::sim::certify;
use nhtrack_core::sim::grid::{GridOptions, GridReport};
use nhtrack_core::sim::scenario::{AttackSpec, ResilienceSpec};
use nhtrack_core::sim::{run_experiment_grid, run_scenario, RunLog, ScenarioFile};
use nhtrack_core::{CommNetwork, OutputDerivatives, TopologyKind};

const POLE: f64 = 2.0;
const AC1_TOL: f64 = 1e-4;
const AC1_MAX_RUNTIME: Duration = Duration::from_secs(10);
const AC2_FINAL_E: f64 = 1e-3;
const AC2_RATE_FACTOR: f64 = 0.8;
const AC2_AGREE: f64 = 0.05;
/// Five closed-loop time constants `1/p`.
const TRANSIENT: f64 = 5.0 / POLE;
const DECAY_FLOOR: f64 = 1e-10;
const AC3_TOL: f64 = 1e-9;
const AC4_CASES: usize = 200;
const AC4_ORACLE_MAX_NEIGHBORS: usize = 8;
const AC4_CONVEX_TOL: f64 = 1e-12;
const AC5_CLEAN_FACTOR: f64 = 10.0;
const AC5_TRIM_GAIN: f64 = 5.0;
const AC7_ABARS: [f64; 3] = [0.1, 0.2, 0.4];
const AC7_LINEAR_TOL: f64 = 0.3;
const AC8_LYAP_TOL: f64 = 1e-8;
const AC8_RATIO: (f64, f64) = (12.0, 20.0);
const AC8_RESIDUAL: f64 = 1e-9;

struct Ctx {
    grid: Option<GridReport>,
    /// Largest control-solve residual seen in any run of the suite.
    max_residual: f64,
}

fn steady(log: &RunLog, f: impl Fn(&nhtrack_core::sim::LogRow) -> f64) -> f64 {
    analysis::steady_max(&log.times(), &log.column(f), STEADY_FRACTION)
}

/// `𝐀 + 𝐁𝐊` written out from the triple-integrator definition.
fn oracle_closed_loop(m: usize, p: f64) -> DMatrix<f64> {
    let (k1, k2, k3) = (p * p * p, 3.0 * p * p, 3.0 * p);
    let mut a = DMatrix::zeros(6 * m, 6 * m);
    for i in 0..m {
        let o = 6 * i;
        for axis in 0..2 {
            a[(o + axis, o + 2 + axis)] = 1.0;
            a[(o + 2 + axis, o + 4 + axis)] = 1.0;
            a[(o + 4 + axis, o + axis)] = -k1;
            a[(o + 4 + axis, o + 2 + axis)] = -k2;
            a[(o + 4 + axis, o + 4 + axis)] = -k3;
        }
    }
    a
}

fn ac1(ctx: &mut Ctx) -> (bool, String) {
    let a_c = oracle_closed_loop(4, POLE);
    let mut worst = 0.0_f64;
    let mut slowest = Duration::ZERO;
    for kind in TopologyKind::ALL {
        let mut f = ScenarioFile::topology(kind, 4);
        f.horizon = 10.0;
        f.dt = 1e-3;
        f.controller.pole = Some(POLE);
        let sc = f.resolve().unwrap();
        let start = Instant::now();
        let run = run_scenario(&sc).unwrap();
        slowest = slowest.max(start.elapsed());
        ctx.max_residual = ctx.max_residual.max(run.outcome.max_residual);
        let eta = run.log.clean_eta(&sc.network);
        let eta0 = eta[0].clone();
        for (k, row) in run.log.rows.iter().enumerate().step_by(10) {
            assert!((row.eta_norm - eta[k].norm()).abs() <= 1e-12 * eta0.norm());
            let exact = (&a_c * row.t).exp() * &eta0;
            worst = worst.max((&eta[k] - &exact).amax()).max((row.eta_norm - exact.norm()).abs());
        }
    }
    (
        worst <= AC1_TOL && slowest < AC1_MAX_RUNTIME,
        format!("sup |η − e^(A_c t) η(0)| = {worst:.3e} (tol {AC1_TOL:e}); slowest run {slowest:.2?} (limit {AC1_MAX_RUNTIME:?})"),
    )
}

fn after(log: &RunLog, f: impl Fn(&nhtrack_core::sim::LogRow) -> f64) -> Vec<f64> {
    log.rows.iter().filter(|r| r.t >= TRANSIENT).map(f).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup(a: &[f64]) -> f64 {
    a.iter().copied().fold(0.0, f64::max)
}

fn ac2(ctx: &mut Ctx) -> (bool, String) {
    let grid = ctx.grid.as_ref().unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    let mut e_curves = Vec::new();
    let mut eps_curves = Vec::new();
    for kind in TopologyKind::ALL {
        let log = &grid.run(kind, false).result.log;
        let final_e = log.rows.last().unwrap().e_tilde;
        let rate = analysis::fit_decay_rate(&log.times(), &log.column(|r| r.eta_norm), TRANSIENT, DECAY_FLOOR).unwrap_or(0.0);
        ok &= final_e <= AC2_FINAL_E && rate >= AC2_RATE_FACTOR * POLE;
        detail.push(format!("{}: e~(T)={final_e:.2e} rate={rate:.3}", kind.name()));
        e_curves.push(after(log, |r| r.e_tilde));
        eps_curves.push(after(log, |r| r.eps_tilde));
    }
    let mut e_gap = 0.0_f64;
    let mut eps_gap = f64::INFINITY;
    for a in 0..3 {
        for b in a + 1..3 {
            let scale_e = sup(&e_curves[a]).max(sup(&e_curves[b]));
            e_gap = e_gap.max(sup_diff(&e_curves[a], &e_curves[b]) / scale_e);
            let scale_eps = sup(&eps_curves[a]).max(sup(&eps_curves[b]));
            eps_gap = eps_gap.min(sup_diff(&eps_curves[a], &eps_curves[b]) / scale_eps);
        }
    }
    ok &= e_gap <= AC2_AGREE && eps_gap > AC2_AGREE;
    detail.push(format!("e~ max relative gap {e_gap:.2e} (≤ {AC2_AGREE}), eps~ min relative gap {eps_gap:.3} (> {AC2_AGREE})"));
    (ok, detail.join("; "))
}

fn ac3(_: &mut Ctx) -> (bool, String) {
    let mut ok = true;
    let mut worst = 0.0_f64;
    for kind in TopologyKind::ALL {
        let net = CommNetwork::build_topology(kind, 12).unwrap();
        ok &= net.is_balanced() && net.navigator_reachable() && net.laplacian_positive_stable();
        // 𝕃 = diag(row sums of A_m) − A_m + diag(a_0), built directly from the edges.
        let mut l = DMatrix::<f64>::zeros(12, 12);
        let mut a0 = DVector::<f64>::zeros(12);
        for e in net.edges() {
            if e.sender == 0 {
                a0[e.receiver - 1] += e.weight;
                l[(e.receiver - 1, e.receiver - 1)] += e.weight;
            } else {
                l[(e.receiver - 1, e.receiver - 1)] += e.weight;
                l[(e.receiver - 1, e.sender - 1)] -= e.weight;
            }
        }
        let x = l.lu().solve(&a0).unwrap();
        worst = worst.max(x.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    }
    ok &= worst <= AC3_TOL;
    (ok, format!("balance, reachability and positive stability hold for all three topologies; max |𝕃⁻¹A₀1 − 1| = {worst:.2e}"))
}

fn ac4(_: &mut Ctx) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0004);
    let (mut leaked, mut nonconvex, mut oracle_mismatch, mut oracle_cases) = (0, 0, 0, 0);
    for _ in 0..AC4_CASES {
        let theta: usize = rng.random_range(1..=2);
        let m: usize = rng.random_range((2 * theta + 1).max(4)..=12);
        let i: usize = rng.random_range(1..=m);
        let mut candidates: Vec<usize> = (0..=m).filter(|&j| j != i).collect();
        candidates.shuffle(&mut rng);
        let n = rng.random_range(2 * theta + 1..=candidates.len());
        let neighbors = &candidates[..n];
        let trusted: BTreeSet<usize> = neighbors[..theta].iter().copied().collect();
        let untrusted: Vec<usize> = neighbors[theta..].to_vec();
        let q = rng.random_range(0..=theta);
        let adversarial: BTreeSet<usize> = untrusted[..q].iter().copied().collect();

        let center = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let radius = rng.random_range(0.05..1.0);
        let truth: BTreeMap<usize, Vector2<f64>> = neighbors
            .iter()
            .map(|&j| {
                let (r, phi): (f64, f64) = (radius * rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
                (j, center + Vector2::new(r * phi.cos(), r * phi.sin()))
            })
            .collect();
        let spread = truth.values().flat_map(|a| truth.values().map(move |b| (a - b).norm())).fold(0.0, f64::max);
        let abar = spread * rng.random_range(2.0..6.0);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let received: Vec<Received> = neighbors
            .iter()
            .zip(&raw)
            .map(|(&j, &w)| {
                let mut y = truth[&j];
                if adversarial.contains(&j) {
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    y += Vector2::new(abar * phi.cos(), abar * phi.sin());
                }
                Received { sender: j, weight: w / total, signal: OutputDerivatives { y, ..OutputDerivatives::zeros() } }
            })
            .collect();

        let (_, res) = resilience::resilient_reference(i, &received, &trusted, theta).unwrap();
        let kept = res.kept_senders();
        if !kept.is_disjoint(&adversarial) {
            leaked += 1;
        }
        let wsum: f64 = res.kept.iter().map(|&(_, w)| w).sum();
        if res.kept.iter().any(|&(_, w)| w < 0.0) || (wsum - 1.0).abs() > AC4_CONVEX_TOL {
            nonconvex += 1;
        }

        if n <= AC4_ORACLE_MAX_NEIGHBORS {
            oracle_cases += 1;
            let y = |j: usize| received.iter().find(|r| r.sender == j).unwrap().signal.y;
            let score = |k: usize| trusted.iter().map(|&l| (y(l) - y(k)).norm()).sum::<f64>() / theta as f64;
            let mut best: Option<(f64, BTreeSet<usize>)> = None;
            for mask in 0u32..(1 << untrusted.len()) {
                if mask.count_ones() as usize != theta {
                    continue;
                }
                let subset: BTreeSet<usize> = (0..untrusted.len()).filter(|b| mask >> b & 1 == 1).map(|b| untrusted[b]).collect();
                let s: f64 = subset.iter().map(|&k| score(k)).sum();
                if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                    best = Some((s, subset));
                }
            }
            if best.unwrap().1 != res.removed {
                oracle_mismatch += 1;
            }
        }
    }
    (
        leaked == 0 && nonconvex == 0 && oracle_mismatch == 0 && oracle_cases > 0,
        format!(
            "{AC4_CASES} cases: {leaked} kept an adversary, {nonconvex} non-convex, {oracle_mismatch}/{oracle_cases} differ from the exhaustive oracle"
        ),
    )
}

fn ac5(ctx: &mut Ctx) -> (bool, String) {
    let grid = ctx.grid.as_ref().unwrap();
    let clean = steady(&grid.run(TopologyKind::Cyclic, false).result.log, |r| r.e_tilde);
    let trimmed_run = grid.run(TopologyKind::Cyclic, true);
    assert_eq!(trimmed_run.scenario.source.resilience.as_ref().unwrap().theta, 1);
    let trimmed = steady(&trimmed_run.result.log, |r| r.e_tilde);
    let mut f = trimmed_run.scenario.source.clone();
    f.resilience = None;
    let untrimmed_run = run_scenario(&f.resolve().unwrap()).unwrap();
    ctx.max_residual = ctx.max_residual.max(untrimmed_run.outcome.max_residual);
    let untrimmed = steady(&untrimmed_run.log, |r| r.e_tilde);
    (
        trimmed <= AC5_CLEAN_FACTOR * clean && untrimmed >= AC5_TRIM_GAIN * trimmed,
        format!(
            "steady e~: clean {clean:.3e}, trimmed {trimmed:.3e} (ratio {:.2}, ≤ {AC5_CLEAN_FACTOR}), untrimmed {untrimmed:.3e} (gain {:.2e}, ≥ {AC5_TRIM_GAIN})",
            trimmed / clean,
            untrimmed / trimmed
        ),
    )
}

fn ac6(ctx: &mut Ctx) -> (bool, String) {
    let grid = ctx.grid.as_ref().unwrap();
    let e = |k| steady(&grid.run(k, true).result.log, |r| r.e_tilde);
    let (star, cyclic, path) = (e(TopologyKind::Star), e(TopologyKind::Cyclic), e(TopologyKind::Path));
    (cyclic < star && cyclic < path, format!("steady e~ under attack: cyclic {cyclic:.3e}, star {star:.3e}, path {path:.3e}"))
}

fn ac7(ctx: &mut Ctx) -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    let mut per_abar = Vec::new();
    for abar in AC7_ABARS {
        let mut f = ScenarioFile::topology(TopologyKind::Path, 12);
        f.attack = Some(AttackSpec { kind: SignalKind::ConstantOffset, abar, params: SignalParams::default(), ..Default::default() });
        f.resilience = Some(ResilienceSpec { theta: 1, ..Default::default() });
        let sc = f.resolve().unwrap();
        ok &= sc.worst_case();
        let (report, run) = certify::certify(&sc).unwrap();
        ctx.max_residual = ctx.max_residual.max(run.outcome.max_residual);
        let limsup = report.limsup_eta.unwrap();
        ok &= limsup <= report.certificate.eta_bound;
        detail.push(format!("ā={abar}: limsup‖η‖={limsup:.3e} ≤ bound {:.3e}", report.certificate.eta_bound));
        per_abar.push((abar, steady(&run.log, |r| r.e_tilde)));
    }
    let (a0, e0) = per_abar[0];
    let mut worst_dev = 0.0_f64;
    for &(a, e) in &per_abar {
        worst_dev = worst_dev.max(((e / e0) / (a / a0) - 1.0).abs());
    }
    ok &= worst_dev <= AC7_LINEAR_TOL;
    detail.push(format!("linear scaling deviation {worst_dev:.2e} (≤ {AC7_LINEAR_TOL})"));

    let m = 12;
    let zero = analysis::ultimate_bound(
        &oracle_closed_loop(m, POLE),
        &fblin::chain_matrices(m).1,
        &DMatrix::identity(6 * m, 6 * m),
        16.0,
        0.0,
        &analysis::selection_matrix(m),
        1.0,
    )
    .unwrap();
    ok &= zero.delta == 0.0;
    detail.push(format!("δ(ā=0) = {}", zero.delta));
    (ok, detail.join("; "))
}

fn final_states(kind: TopologyKind, dt: f64) -> DVector<f64> {
    let mut f = ScenarioFile::topology(kind, 4);
    f.horizon = 2.0;
    f.dt = dt;
    let run = run_scenario(&f.resolve().unwrap()).unwrap();
    let last = run.log.rows.last().unwrap();
    DVector::from_iterator(24, last.states.iter().flat_map(|s| s.to_vector().iter().copied().collect::<Vec<_>>()))
}

fn ac8(ctx: &mut Ctx) -> (bool, String) {
    let a_c = oracle_closed_loop(12, POLE);
    let q = DMatrix::<f64>::identity(72, 72);
    let p = analysis::lyapunov_solve(&a_c, &q).unwrap();
    let residual = (a_c.transpose() * &p + &p * &a_c + &q).norm() / q.norm();
    let sym = (&p - p.transpose()).amax();
    let min_eig = p.clone().symmetric_eigenvalues().min();
    let mut ok = residual <= AC8_LYAP_TOL && sym <= 1e-10 && min_eig > 0.0;

    let mut ratios = Vec::new();
    for kind in TopologyKind::ALL {
        let (x1, x2, x3) = (final_states(kind, 0.02), final_states(kind, 0.01), final_states(kind, 0.005));
        let ratio = (&x1 - &x2).amax() / (&x2 - &x3).amax();
        ok &= (AC8_RATIO.0..=AC8_RATIO.1).contains(&ratio);
        ratios.push(format!("{}={ratio:.2}", kind.name()));
    }
    ok &= ctx.max_residual <= AC8_RESIDUAL;
    (
        ok,
        format!(
            "72x72 Lyapunov relative residual {residual:.2e}, λ_min(P)={min_eig:.3e}; RK4 halving ratios {}; max solve residual {:.2e}",
            ratios.join(", "),
            ctx.max_residual
        ),
    )
}

fn ac9(ctx: &mut Ctx) -> (bool, String) {
    let first = ctx.grid.as_ref().unwrap();
    let second = run_experiment_grid(&GridOptions::default()).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    first.write(d1.path()).unwrap();
    second.write(d2.path()).unwrap();
    let mut compared = 0;
    let mut differing = Vec::new();
    for entry in std::fs::read_dir(d1.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap();
            compared += 1;
            if std::fs::read(&path).unwrap() != std::fs::read(d2.path().join(name)).unwrap() {
                differing.push(name.to_string_lossy().into_owned());
            }
        }
    }
    (differing.is_empty() && compared == 7, format!("{compared} CSV files compared, {} differ {differing:?}", differing.len()))
}

fn main() {
    let start = Instant::now();
    let mut ctx = Ctx { grid: None, max_residual: 0.0 };
    let grid = run_experiment_grid(&GridOptions::default()).expect("reference grid runs");
    for run in &grid.runs {
        ctx.max_residual = ctx.max_residual.max(run.result.outcome.max_residual);
    }
    ctx.grid = Some(grid);

    type Criterion = fn(&mut Ctx) -> (bool, String);
    let criteria: [(&str, &str, Criterion); 9] = [
        ("AC1", "exact linearization", ac1),
        ("AC2", "nominal tracking", ac2),
        ("AC3", "graph algebra", ac3),
        ("AC4", "trimming correctness", ac4),
        ("AC5", "resilience recovery", ac5),
        ("AC6", "topology ordering under attack", ac6),
        ("AC7", "ultimate bound", ac7),
        ("AC8", "numerical infrastructure", ac8),
        ("AC9", "reproducibility", ac9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(|| f(&mut ctx))) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        if !pass {
            failed += 1;
        }
        println!("[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed ({:.1?})", 9 - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
