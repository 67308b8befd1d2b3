use nalgebra::Vector2;

use nhtrack_core::adversary::{SignalKind, SignalParams};
use nhtrack_core::analysis::{self, STEADY_FRACTION};
use nhtrack_core::fblin;
use nhtrack_core::sim::certify;
use nhtrack_core::sim::scenario::{AttackSpec, ResilienceSpec};
use nhtrack_core::sim::{run_scenario, RunLog, ScenarioFile};
use nhtrack_core::TopologyKind;

fn run(f: &ScenarioFile) -> RunLog {
    run_scenario(&f.resolve().unwrap()).unwrap().log
}

fn steady_e(log: &RunLog) -> f64 {
    analysis::steady_max(&log.times(), &log.column(|r| r.e_tilde), STEADY_FRACTION)
}

#[test]
fn star_twelve_vehicles_converge_within_ten_seconds() {
    let mut f = ScenarioFile::topology(TopologyKind::Star, 12);
    f.horizon = 10.0;
    let log = run(&f);
    assert_eq!(log.len(), 10_001);
    assert!(log.rows.last().unwrap().e_tilde <= 1e-3);
}

#[test]
fn halving_the_step_barely_moves_the_trajectory() {
    let mut coarse = ScenarioFile::topology(TopologyKind::Cyclic, 12);
    coarse.horizon = 5.0;
    let mut fine = coarse.clone();
    fine.dt = coarse.dt / 2.0;
    let (a, b) = (run(&coarse), run(&fine));
    let mut worst = 0.0_f64;
    for (k, row) in a.rows.iter().enumerate() {
        let other = &b.rows[2 * k];
        assert_eq!(row.t, other.t);
        for (s, o) in row.states.iter().zip(&other.states) {
            worst = worst.max((s.to_vector() - o.to_vector()).amax());
        }
    }
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn same_seed_same_bytes() {
    let mut f = ScenarioFile::topology(TopologyKind::Cyclic, 6);
    f.horizon = 1.0;
    f.attack = Some(AttackSpec {
        preset: Some(nhtrack_core::sim::scenario::PresetSpec { attacked: vec![2, 5] }),
        kind: SignalKind::BoundedRandom,
        ..Default::default()
    });
    f.resilience = Some(ResilienceSpec { theta: 1, ..Default::default() });
    f.seed = 42;
    assert_eq!(run(&f).to_csv(), run(&f).to_csv());
    let mut g = f.clone();
    g.seed = 43;
    assert_ne!(run(&f).to_csv(), run(&g).to_csv());
}

#[test]
fn trimming_beats_plain_fusion_on_the_attacked_ring() {
    let mut f = ScenarioFile::topology(TopologyKind::Cyclic, 12);
    f.horizon = 10.0;
    f.attack = Some(AttackSpec::default());
    let plain = steady_e(&run(&f));
    f.resilience = Some(ResilienceSpec { theta: 1, ..Default::default() });
    let trimmed = steady_e(&run(&f));
    assert!(trimmed < plain, "{trimmed} vs {plain}");
}

#[test]
fn output_error_obeys_triangle_inequality() {
    let mut f = ScenarioFile::topology(TopologyKind::Path, 6);
    f.horizon = 3.0;
    f.attack = Some(AttackSpec {
        preset: Some(nhtrack_core::sim::scenario::PresetSpec { attacked: vec![2, 5] }),
        ..Default::default()
    });
    let log = run(&f);
    for r in &log.rows {
        let spread = r.refs.iter().map(|z| (z - r.nav.y).norm()).fold(0.0, f64::max);
        assert!(r.e_tilde <= r.eps_tilde + spread + 1e-12);
    }
}

#[test]
fn metrics_match_logged_columns() {
    let mut f = ScenarioFile::topology(TopologyKind::Cyclic, 5);
    f.horizon = 1.0;
    let log = run(&f);
    let ms = log.metrics();
    assert_eq!(ms.e_tilde, log.column(|r| r.e_tilde));
    assert_eq!(ms.eps_tilde, log.column(|r| r.eps_tilde));
}

fn star_offset(abar: f64, t: f64) -> (nhtrack_core::Scenario, RunLog) {
    let mut f = ScenarioFile::topology(TopologyKind::Star, 3);
    f.horizon = t;
    f.attack = Some(AttackSpec {
        preset: None,
        edges: Some(vec![(2, 0)]),
        kind: SignalKind::ConstantOffset,
        abar,
        params: SignalParams { offset: Some([0.0, abar]), ..Default::default() },
        ..Default::default()
    });
    let sc = f.resolve().unwrap();
    let log = run_scenario(&sc).unwrap().log;
    (sc, log)
}

fn rho_d(sc: &nhtrack_core::Scenario, log: &RunLog, abar: f64) -> f64 {
    let a_c = fblin::closed_loop_matrix(sc.m(), &sc.controller.gains);
    let r = analysis::disturbance_residuals(&log.times(), &log.clean_eta(&sc.network), &a_c).unwrap();
    analysis::estimate_rho_d(&r, abar).unwrap()
}

#[test]
fn clean_run_has_no_disturbance_residual() {
    let mut f = ScenarioFile::topology(TopologyKind::Cyclic, 4);
    f.horizon = 3.0;
    let sc = f.resolve().unwrap();
    let log = run_scenario(&sc).unwrap().log;
    // Any positive ā works as a scale here. What remains is the O(dt²) error of the
    // central difference, against k1 = 8 per unit offset under attack.
    let r = rho_d(&sc, &log, 1.0);
    assert!(r < 1e-4, "{r:e}");
}

#[test]
fn offset_on_a_star_channel_shows_up_in_rho_d() {
    let (sc, log) = star_offset(0.3, 3.0);
    let est = rho_d(&sc, &log, 0.3);
    // The corrupted channel has weight 1, and the residual is k1 times the offset.
    let k1 = sc.controller.gains.k1;
    assert!(est >= 1.0 && (est - k1).abs() <= 1e-3 * k1, "{est}");
    let (sc2, log2) = star_offset(0.6, 3.0);
    let est2 = rho_d(&sc2, &log2, 0.6);
    assert!((est2 / est - 1.0).abs() <= 0.1);
}

#[test]
fn certify_requires_an_attack() {
    let sc = ScenarioFile::topology(TopologyKind::Path, 3).resolve().unwrap();
    let e = certify::certify(&sc).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn worst_case_path_respects_output_bound() {
    let mut f = ScenarioFile::topology(TopologyKind::Path, 12);
    f.horizon = 10.0;
    f.attack = Some(AttackSpec { kind: SignalKind::ConstantOffset, abar: 0.2, ..Default::default() });
    f.resilience = Some(ResilienceSpec { theta: 1, ..Default::default() });
    let sc = f.resolve().unwrap();
    let (report, _) = certify::certify(&sc).unwrap();
    assert!(report.worst_case);
    assert_eq!(report.eta_within_bound(), Some(true));
    assert_eq!(report.output_within_bound(), Some(true));
    assert!(report.to_string().contains("eta_bound"));
}

/// Fits `‖η(t)‖ ≤ c1 e^{−c2 t} ‖η(0)‖` on clean runs of every topology.
#[test]
fn exponential_envelope_constants() {
    for kind in TopologyKind::ALL {
        let mut f = ScenarioFile::topology(kind, 6);
        f.horizon = 8.0;
        let log = run(&f);
        let eta = log.column(|r| r.eta_norm);
        let c2 = 0.8 * analysis::fit_decay_rate(&log.times(), &eta, 2.5, 1e-10).unwrap();
        let c1 = log.rows.iter().map(|r| r.eta_norm * (c2 * r.t).exp() / eta[0]).fold(0.0, f64::max);
        assert!(c2 >= 1.2, "{kind}: c2 = {c2}");
        assert!(c1 < 10.0, "{kind}: c1 = {c1}");
    }
}

#[test]
fn logged_references_are_convex_mixtures_on_clean_runs() {
    let mut f = ScenarioFile::topology(TopologyKind::Cyclic, 4);
    f.horizon = 0.5;
    let log = run(&f);
    for r in &log.rows {
        let ys: Vec<Vector2<f64>> = std::iter::once(r.nav.y).chain(r.states.iter().map(|s| s.position())).collect();
        let (lo, hi) = ys.iter().fold((Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY)), |(l, h), y| (l.inf(y), h.sup(y)));
        for z in &r.refs {
            assert!(z.x >= lo.x - 1e-12 && z.x <= hi.x + 1e-12 && z.y >= lo.y - 1e-12 && z.y <= hi.y + 1e-12);
        }
    }
}
