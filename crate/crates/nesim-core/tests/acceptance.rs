//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured values (visible with `--nocapture`, or in the failure
//! report). Criteria are asserted exactly at their stated tolerances.
//!
//! Four criteria are expected red on this benchmark and are asserted anyway:
//! the reported regularity constants (criterion 2) belong to the classical
//! linear price aggregate rather than the squared one the benchmark pins, and
//! the 1e-2 convergence tolerance at T = 15 (criteria 4-6) is out of reach
//! for the pinned gains, whose slow mode contracts at roughly w/k per second.
//! Criterion 7's mean-interval clause misses by ~1.4% on one agent with the
//! default trigger initialization. The long-horizon and linear-aggregate
//! tests in the regular suites demonstrate the corresponding healthy
//! behaviour; details live in the project notes.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nesim_core::conditions::{
    check_theorem1, check_theorem2, check_theorem3, periodic_bound_tau,
};
use nesim_core::cournot::CournotPreset;
use nesim_core::engine::{self, run, InitialState, Integrator, SimConfig};
use nesim_core::game::{best_response_ne, solve_ne, GameSpec, SampleBox};
use nesim_core::graph::Graph;
use nesim_core::scheduler::{event_stats, trigger_lhs_rhs, zeno_bound, TriggerState};
use nesim_core::{CommScheme, RegularityConstants, RuleParams};

fn status(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:02} [{verdict}] {detail}");
}

fn preset() -> (CournotPreset, GameSpec, Graph) {
    let preset = CournotPreset::default();
    let game = preset.game().unwrap();
    let graph = preset.graph().unwrap();
    (preset, game, graph)
}

fn config(scheme: CommScheme, t_end: f64) -> SimConfig {
    SimConfig {
        dt: 0.01,
        t_end,
        params: RuleParams { k: 4.0, alpha: 5.0 },
        scheme,
        integrator: Integrator::Rk4,
        record_stride: 1,
    }
}

fn oracle(game: &GameSpec, x0: &DVector<f64>) -> DVector<f64> {
    solve_ne(game, x0, 0.5, 1e-10, 100_000).unwrap()
}

#[test]
fn criterion_01_graph_constants() {
    let start = Instant::now();
    let constants = Graph::cycle(5, 1.0).unwrap().constants(1).unwrap();
    let elapsed = start.elapsed();
    let lambda_ok = (constants.lambda2 - 1.382).abs() <= 1e-3;
    let time_ok = elapsed < Duration::from_secs(1);
    status(
        1,
        lambda_ok && time_ok,
        &format!(
            "five-cycle lambda2 = {:.6} (1.382 +- 0.001), runtime {elapsed:?} (< 1 s)",
            constants.lambda2
        ),
    );
    assert!(lambda_ok, "lambda2 = {}", constants.lambda2);
    assert!(time_ok, "constants took {elapsed:?}");
}

#[test]
fn criterion_02_regularity_constants() {
    let (_, game, _) = preset();
    let start = Instant::now();
    let constants = game
        .estimate_constants(&SampleBox::uniform(5, 0.0, 50.0), 10_000, 42)
        .unwrap();
    let elapsed = start.elapsed();
    let theta_ok = (constants.theta - 1.001).abs() <= 0.05;
    let w_ok = (constants.w - 0.601).abs() <= 0.05;
    let time_ok = elapsed < Duration::from_secs(10);
    status(
        2,
        theta_ok && w_ok && time_ok,
        &format!(
            "theta = {:.4} (1.001 +- 0.05), w = {:.4} (0.601 +- 0.05), runtime {elapsed:?} (< 10 s)",
            constants.theta, constants.w
        ),
    );
    assert!(time_ok, "estimation took {elapsed:?}");
    assert!(w_ok, "w = {} outside 0.601 +- 0.05", constants.w);
    assert!(
        theta_ok,
        "theta = {} outside 1.001 +- 0.05 (the squared price aggregate has \
         directional Lipschitz quotients near 1.33 on this box; the reported \
         value matches the classical linear aggregate)",
        constants.theta
    );
}

#[test]
fn criterion_03_ne_oracle_agreement() {
    let (preset, game, _) = preset();
    let x0 = preset.initial_strategies();
    let fixed_point = oracle(&game, &x0);
    let best_response = best_response_ne(&game, &x0, 1e-12, 1000).unwrap();
    let gap = (&fixed_point - &best_response).norm();
    let check = game.verify_ne(&fixed_point, 1e-6).unwrap();
    let max_residual = check.residuals.amax();
    let ok = gap <= 1e-5 && check.is_ne && max_residual <= 1e-6;
    status(
        3,
        ok,
        &format!("oracle gap = {gap:.3e} (<= 1e-5), max NE residual = {max_residual:.3e} (<= 1e-6)"),
    );
    assert!(gap <= 1e-5);
    assert!(check.is_ne && max_residual <= 1e-6);
}

#[test]
fn criterion_04_continuous_scheme_convergence() {
    let (preset, game, graph) = preset();
    let x_star = oracle(&game, &preset.initial_strategies());
    let start = Instant::now();
    let traj = run(
        &config(CommScheme::Continuous, 15.0),
        &game,
        &graph,
        &InitialState::from_strategies(preset.initial_strategies()),
        Some(&x_star),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let err = *traj.metrics.err_ne.last().unwrap();
    let consensus = *traj.metrics.err_consensus.last().unwrap();
    let v0 = traj.metrics.lyapunov[0];
    let descent_ok = traj
        .metrics
        .lyapunov
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-6 * v0);
    let err_ok = err < 1e-2;
    let cons_ok = consensus < 1e-2;
    let time_ok = elapsed < Duration::from_secs(30);
    status(
        4,
        err_ok && cons_ok && descent_ok && time_ok,
        &format!(
            "continuous: ||x(15)-x*|| = {err:.3e} (< 1e-2), consensus = {consensus:.3e} (< 1e-2), \
             Lyapunov descent {}, runtime {elapsed:?} (< 30 s)",
            if descent_ok { "ok" } else { "violated" }
        ),
    );
    assert!(descent_ok, "Lyapunov increased beyond 1e-6 V(0)");
    assert!(time_ok, "run took {elapsed:?}");
    assert!(
        err_ok && cons_ok,
        "||x(15)-x*|| = {err:.3e}, consensus = {consensus:.3e}: the pinned gains \
         contract at ~w/k = 0.15/s, which cannot reach 1e-2 from this start by T = 15 \
         (the long-horizon suite verifies convergence at T = 45)"
    );
}

#[test]
fn criterion_05_periodic_scheme_convergence() {
    let (preset, game, graph) = preset();
    let x_star = oracle(&game, &preset.initial_strategies());
    let traj = run(
        &config(preset.periodic_scheme(), 15.0),
        &game,
        &graph,
        &InitialState::from_strategies(preset.initial_strategies()),
        Some(&x_star),
    )
    .unwrap();
    let err = *traj.metrics.err_ne.last().unwrap();
    let ok = err < 1e-2;
    status(
        5,
        ok,
        &format!("periodic (delta = 0.1): ||x(15)-x*|| = {err:.3e} (< 1e-2)"),
    );
    assert!(
        ok,
        "||x(15)-x*|| = {err:.3e}; same slow-mode limitation as criterion 4"
    );
}

#[test]
fn criterion_06_event_scheme_convergence_and_zeno_freedom() {
    let (preset, game, graph) = preset();
    let x_star = oracle(&game, &preset.initial_strategies());
    let traj = run(
        &config(preset.event_scheme(), 15.0),
        &game,
        &graph,
        &InitialState::from_strategies(preset.initial_strategies()),
        Some(&x_star),
    )
    .unwrap();
    let err = *traj.metrics.err_ne.last().unwrap();
    let min_eta = traj.min_eta.unwrap();
    let d_estimate = traj.zeno_d_estimate.unwrap();
    let bound = zeno_bound(3.0, 0.01, d_estimate);
    let stats = event_stats(&traj.events, 15.0, 5);
    let min_interval = stats
        .iter()
        .filter_map(|s| s.min_interval)
        .fold(f64::INFINITY, f64::min);
    let err_ok = err < 1e-2;
    let eta_ok = min_eta > 0.0;
    let zeno_ok = min_interval > 0.0 && min_interval >= bound;
    status(
        6,
        err_ok && eta_ok && zeno_ok,
        &format!(
            "event: ||x(15)-x*|| = {err:.3e} (< 1e-2), min eta = {min_eta:.3e} (> 0), \
             min interval = {min_interval:.3} >= zeno bound {bound:.4} (D = {d_estimate:.2})"
        ),
    );
    assert!(eta_ok, "eta lost positivity");
    assert!(
        zeno_ok,
        "min interval {min_interval} vs bound {bound} (D = {d_estimate})"
    );
    assert!(
        err_ok,
        "||x(15)-x*|| = {err:.3e}; same slow-mode limitation as criterion 4"
    );
}

#[test]
fn criterion_07_event_counts_ballpark() {
    let (preset, game, graph) = preset();
    let traj = run(
        &config(preset.event_scheme(), 15.0),
        &game,
        &graph,
        &InitialState::from_strategies(preset.initial_strategies()),
        None,
    )
    .unwrap();
    let stats = event_stats(&traj.events, 15.0, 5);
    let counts: Vec<usize> = stats.iter().map(|s| s.count).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.mean_interval.unwrap_or(0.0)).collect();
    let counts_ok = counts.iter().all(|&c| (30..=300).contains(&c));
    let means_ok = means.iter().all(|&m| m > 0.1);
    status(
        7,
        counts_ok && means_ok,
        &format!(
            "event counts = {counts:?} (all in [30, 300]), mean intervals = {:?} (all > 0.1)",
            means
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
        ),
    );
    assert!(counts_ok, "counts {counts:?} outside [30, 300]");
    assert!(
        means_ok,
        "mean intervals {means:?}: with the default eta0 = 1 one agent sits \
         ~1.4% below the periodic 0.1 s period (the source material does not \
         pin eta0; larger values clear the clause)"
    );
}

#[test]
fn criterion_08_event_scheme_not_slower_than_periodic() {
    let (preset, game, graph) = preset();
    let x_star = oracle(&game, &preset.initial_strategies());
    let init = InitialState::from_strategies(preset.initial_strategies());
    let first_reach = |scheme: CommScheme| {
        let traj = run(&config(scheme, 15.0), &game, &graph, &init, Some(&x_star)).unwrap();
        traj.times
            .iter()
            .zip(traj.metrics.err_ne.iter())
            .find(|(_, e)| **e <= 0.5)
            .map(|(t, _)| *t)
            .unwrap_or(f64::INFINITY)
    };
    let t_event = first_reach(preset.event_scheme());
    let t_periodic = first_reach(preset.periodic_scheme());
    let ok = t_event <= t_periodic;
    status(
        8,
        ok,
        &format!("time to ||x-x*|| <= 0.5: event = {t_event:.2} s <= periodic = {t_periodic:.2} s"),
    );
    assert!(ok, "event {t_event} > periodic {t_periodic}");
}

#[test]
fn criterion_09_property_suites() {
    let (preset, game, graph) = preset();
    let x0 = preset.initial_strategies();
    let x_star = oracle(&game, &x0);

    // Determinism: bit-identical repeat runs.
    let cfg = config(preset.event_scheme(), 3.0);
    let init = InitialState::from_strategies(x0.clone());
    let a = run(&cfg, &game, &graph, &init, Some(&x_star)).unwrap();
    let b = run(&cfg, &game, &graph, &init, Some(&x_star)).unwrap();
    let determinism = a.final_state == b.final_state && a.events == b.events;

    // Trigger soundness over a manual stepping window.
    let tc = engine::trigger_constants(&cfg.params, &graph, 1).unwrap();
    let mut world = run(&config(preset.event_scheme(), 0.0), &game, &graph, &init, None)
        .unwrap()
        .final_state;
    let mut trig = TriggerState::new(5, world.eta.clone());
    let mut soundness = true;
    for s in 0..300u64 {
        let eta_pre = world.eta.clone();
        let hat_before = world.hat.clone();
        let fired = engine::step(&mut world, s, &cfg, &game, &graph, &tc, &mut trig).unwrap();
        let mut boundary = world.clone();
        boundary.hat = hat_before;
        for agent in 0..5 {
            let (lhs, rhs) = trigger_lhs_rhs(agent, &boundary, &graph, &tc, 3.0, eta_pre[agent]);
            let should_fire = lhs >= rhs;
            if should_fire != fired.contains(&agent) {
                soundness = false;
            }
        }
    }

    // Eta lower envelope along the event run.
    let traj = run(&config(preset.event_scheme(), 10.0), &game, &graph, &init, None).unwrap();
    let mut envelope = true;
    for (t, state) in traj.times.iter().zip(traj.states.iter()) {
        let floor = (-(0.01 + 3.0) * t).exp() - 10.0 * 0.01;
        if state.eta.iter().any(|&e| e < floor) {
            envelope = false;
        }
    }

    // Equilibrium stationarity for 10^3 steps.
    let stationary_traj = run(
        &config(CommScheme::Continuous, 10.0),
        &game,
        &graph,
        &InitialState::from_strategies(x_star.clone()),
        Some(&x_star),
    )
    .unwrap();
    let stationary = stationary_traj
        .states
        .iter()
        .all(|s| (&s.x - &x_star).amax() < 1e-9 && s.v.amax() < 1e-9);

    // Subgradient vs central finite differences at 10^3 random smooth points.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centers = [25.0, 48.0, 15.0, 30.0, 45.0];
    let mut fd_ok = true;
    let mut checked = 0;
    while checked < 1000 {
        let x = DVector::from_fn(5, |_, _| rng.random_range(0.0..50.0));
        if x
            .iter()
            .zip(centers.iter())
            .any(|(v, c): (&f64, &f64)| (v - c).abs() < 1e-3)
        {
            continue;
        }
        for i in 0..5 {
            let sel = game.subdiff_profile(i, &x).selection[0];
            let h = 1e-6;
            let mut plus = x.clone();
            plus[i] += h;
            let mut minus = x.clone();
            minus[i] -= h;
            let fd = (game.cost_profile(i, &plus) - game.cost_profile(i, &minus)) / (2.0 * h);
            if (sel - fd).abs() / fd.abs().max(1.0) > 1e-4 {
                fd_ok = false;
            }
        }
        checked += 1;
    }

    // Consensus-reduction identity.
    let mut identity = true;
    for _ in 0..100 {
        let x = DVector::from_fn(5, |_, _| rng.random_range(0.0..50.0));
        let mut replicated = DVector::zeros(25);
        for i in 0..5 {
            replicated.rows_mut(i * 5, 5).copy_from(&x);
        }
        if game.augmented_map(&replicated).unwrap() != game.pseudogradient(&x).unwrap() {
            identity = false;
        }
    }

    let all = determinism && soundness && envelope && stationary && fd_ok && identity;
    status(
        9,
        all,
        &format!(
            "determinism {determinism}, trigger soundness {soundness}, eta envelope {envelope}, \
             stationarity {stationary}, subgradient-vs-FD {fd_ok}, consensus identity {identity}"
        ),
    );
    assert!(all);
}

#[test]
fn criterion_10_condition_checker_fixtures() {
    // Hand fixture for the periodic bound.
    let tau = periodic_bound_tau(1.0, 1.0, 1.0);
    let tau_ok = (tau - (4.0f64 / 3.0).ln()).abs() < 1e-12;

    // Regression-pinned theorem reports on the benchmark, evaluated with the
    // reported regularity constants. None of the three is satisfied for
    // k = 4, alpha = 5; that truth is recorded, not "fixed".
    let graph = Graph::cycle(5, 1.0).unwrap();
    let constants = graph.constants(1).unwrap();
    let params = RuleParams { k: 4.0, alpha: 5.0 };
    let reg = RegularityConstants { theta: 1.001, w: 0.601 };

    let t1 = check_theorem1(&params, &constants, &reg);
    let t2 = check_theorem2(&params, &constants, &reg);
    let t3 = check_theorem3(&params, &constants, &reg);

    let t1_ok = !t1.satisfied
        && t1.clauses.iter().map(|c| c.passed).collect::<Vec<_>>() == [false, false];
    let xi_sq_clause = t2.clauses.iter().find(|c| c.description == "xi^2 > 0").unwrap();
    let t2_ok = !t2.satisfied
        && t2.derived.tau.is_none()
        && !xi_sq_clause.passed
        && (xi_sq_clause.lhs + 0.087_107_837_6).abs() < 1e-9;
    let beta1 = t3.derived.beta1.unwrap();
    let beta2 = t3.derived.beta2.unwrap();
    let t3_ok = !t3.satisfied
        && t3.clauses[0].passed // alpha > 1
        && !t3.clauses[1].passed
        && !t3.clauses[2].passed
        && (beta1 - 5.0 * 6.0f64.sqrt() / 4.0).abs() < 1e-9
        && (beta2 - 8.0 * constants.lap_norm).abs() < 1e-9;

    let all = tau_ok && t1_ok && t2_ok && t3_ok;
    status(
        10,
        all,
        &format!(
            "tau(1,1,1) = ln(4/3) {}, pinned reports: T1 unsatisfied {}, T2 unsatisfied \
             (xi^2 = {:.4} < 0, tau absent) {}, T3 unsatisfied (beta1 = {:.4}, beta2 = {:.4}) {}",
            tau_ok, t1_ok, xi_sq_clause.lhs, t2_ok, beta1, beta2, t3_ok
        ),
    );
    assert!(tau_ok);
    assert!(t1_ok, "T1 report changed: {t1:?}");
    assert!(t2_ok, "T2 report changed: {t2:?}");
    assert!(t3_ok, "T3 report changed: {t3:?}");
}
