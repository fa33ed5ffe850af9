//! Communication scheduling: when each agent refreshes its broadcast copy.
//!
//! Three schemes: continuous (refresh every integrator step, i.e. the rule
//! sees live estimates), synchronous periodic with period `delta`, and the
//! asynchronous dynamic event trigger driven by the internal `eta` variables.
//! Event detection runs at step granularity: the trigger condition is checked
//! at every step boundary, never by root-finding inside a step.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::engine::WorldState;
use crate::graph::Graph;

/// Number of consecutive per-step events after which an agent is flagged as
/// a Zeno suspect.
const ZENO_WARN_RUN: u32 = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("periodic delta {delta} is not a positive multiple of the step dt {dt}")]
    DeltaNotMultipleOfStep { delta: f64, dt: f64 },
    #[error("periodic delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("event trigger requires b > 0 and rho > 0, got b = {b}, rho = {rho}")]
    NonPositiveTriggerGains { b: f64, rho: f64 },
    #[error("eta0 must be positive for every agent (agent {agent} has {value})")]
    NonPositiveEta0 { agent: usize, value: f64 },
    #[error("eta0 has {got} entries, expected {expected}")]
    Eta0Size { expected: usize, got: usize },
}

/// When and how broadcast copies refresh.
#[derive(Debug, Clone, PartialEq)]
pub enum CommScheme {
    /// Neighbors see live estimates every step.
    Continuous,
    /// All agents broadcast synchronously every `delta` seconds, starting at
    /// zero. `delta` must be an integer multiple of the integrator step.
    Periodic { delta: f64 },
    /// Dynamic event trigger with decay `b`, threshold gain `rho`, and the
    /// initial internal variables `eta0` (one positive entry per agent).
    EventTriggered { b: f64, rho: f64, eta0: DVector<f64> },
}

impl CommScheme {
    pub fn validate(&self, n_agents: usize, dt: f64) -> Result<(), SchedulerError> {
        match self {
            CommScheme::Continuous => Ok(()),
            CommScheme::Periodic { delta } => {
                if *delta <= 0.0 {
                    return Err(SchedulerError::NonPositiveDelta(*delta));
                }
                let ratio = delta / dt;
                if libm::fabs(ratio - libm::round(ratio)) > 1e-9 || libm::round(ratio) < 1.0 {
                    return Err(SchedulerError::DeltaNotMultipleOfStep {
                        delta: *delta,
                        dt,
                    });
                }
                Ok(())
            }
            CommScheme::EventTriggered { b, rho, eta0 } => {
                if *b <= 0.0 || *rho <= 0.0 {
                    return Err(SchedulerError::NonPositiveTriggerGains { b: *b, rho: *rho });
                }
                if eta0.len() != n_agents {
                    return Err(SchedulerError::Eta0Size {
                        expected: n_agents,
                        got: eta0.len(),
                    });
                }
                for (agent, &value) in eta0.iter().enumerate() {
                    if value <= 0.0 {
                        return Err(SchedulerError::NonPositiveEta0 { agent, value });
                    }
                }
                Ok(())
            }
        }
    }

    /// Steps between periodic broadcasts; `None` for the other schemes.
    pub fn steps_per_period(&self, dt: f64) -> Option<u64> {
        match self {
            CommScheme::Periodic { delta } => Some(libm::round(delta / dt) as u64),
            _ => None,
        }
    }
}

/// Trigger constants from the gain conditions: `beta1 = alpha ||RL|| / k`,
/// `beta2 = (alpha - 1) k ||L|| / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerConstants {
    pub beta1: f64,
    pub beta2: f64,
}

/// One broadcast event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub agent: usize,
    pub time: f64,
}

/// Per-run trigger bookkeeping.
///
/// `eta` holds the values the trigger rule compares against: the engine
/// copies the pre-step `eta` here before integrating each step, pinning the
/// choice that the trigger sees `eta(t)` rather than the value updated within
/// the step.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    pub eta: DVector<f64>,
    pub last_event_time: DVector<f64>,
    pub event_log: Vec<Event>,
    consecutive_steps: Vec<u32>,
    last_event_step: Vec<Option<u64>>,
    pub zeno_warnings: usize,
}

impl TriggerState {
    pub fn new(n_agents: usize, eta0: DVector<f64>) -> Self {
        Self {
            eta: eta0,
            last_event_time: DVector::zeros(n_agents),
            event_log: Vec::new(),
            consecutive_steps: alloc::vec![0; n_agents],
            last_event_step: alloc::vec![None; n_agents],
            zeno_warnings: 0,
        }
    }
}

/// Squared broadcast error weighted by the trigger gain (left side) and the
/// neighbor-disagreement-plus-`rho eta_i` threshold (right side) of the
/// trigger rule. Agent `i` broadcasts when `lhs >= rhs`.
pub fn trigger_lhs_rhs(
    agent: usize,
    world: &WorldState,
    graph: &Graph,
    tc: &TriggerConstants,
    rho: f64,
    eta_i: f64,
) -> (f64, f64) {
    let d_i: f64 = graph.weights().row(agent).sum();
    let err = (world.broadcast_of(agent) - world.estimate_of(agent)).norm_squared();
    let lhs = (tc.beta1 + tc.beta2 + 2.0 * d_i) * err;
    let mut mismatch = 0.0;
    for j in 0..graph.n_agents() {
        let a_ij = graph.weight(agent, j);
        if a_ij > 0.0 {
            mismatch += a_ij * (world.broadcast_of(agent) - world.broadcast_of(j)).norm_squared();
        }
    }
    let rhs = 0.5 * mismatch + rho * eta_i;
    (lhs, rhs)
}

/// Right-hand side of the internal variable:
/// `eta_i' = -b eta_i + 1/2 sum_j a_ij ||xhat^i - xhat^j||^2
///  - (2 d_i + beta1 + beta2) ||xhat^i - x^i||^2`.
///
/// `estimate_i` is the agent's current (stage) estimate vector; the broadcast
/// copies come from `world` and are constant within a step.
pub fn eta_derivative(
    agent: usize,
    world: &WorldState,
    estimate_i: &DVector<f64>,
    eta_i: f64,
    b: f64,
    graph: &Graph,
    tc: &TriggerConstants,
) -> f64 {
    let d_i: f64 = graph.weights().row(agent).sum();
    let mut mismatch = 0.0;
    for j in 0..graph.n_agents() {
        let a_ij = graph.weight(agent, j);
        if a_ij > 0.0 {
            mismatch += a_ij * (world.broadcast_of(agent) - world.broadcast_of(j)).norm_squared();
        }
    }
    let err = (world.broadcast_of(agent) - estimate_i).norm_squared();
    -b * eta_i + 0.5 * mismatch - (2.0 * d_i + tc.beta1 + tc.beta2) * err
}

/// Decide which agents broadcast at the step boundary `step_index` (time
/// `step_index * dt`), refresh their broadcast copies in `world`, and log the
/// events. Returns the set of agents that fired.
///
/// Continuous: every agent refreshes every step, without logging (there is no
/// discrete event to count). Periodic: all agents on the period grid.
/// Event-triggered: agents whose trigger condition holds, evaluated with the
/// pre-step `eta` held in `trig`.
pub fn poll(
    scheme: &CommScheme,
    step_index: u64,
    dt: f64,
    world: &mut WorldState,
    graph: &Graph,
    tc: &TriggerConstants,
    trig: &mut TriggerState,
) -> Vec<usize> {
    let n = graph.n_agents();
    let t = step_index as f64 * dt;
    let mut fired = Vec::new();
    match scheme {
        CommScheme::Continuous => {
            for agent in 0..n {
                world.refresh_broadcast(agent);
                fired.push(agent);
            }
        }
        CommScheme::Periodic { .. } => {
            let m = scheme
                .steps_per_period(dt)
                .expect("periodic scheme has a period");
            if step_index % m == 0 {
                for agent in 0..n {
                    world.refresh_broadcast(agent);
                    trig.event_log.push(Event { agent, time: t });
                    trig.last_event_time[agent] = t;
                    fired.push(agent);
                }
            }
        }
        CommScheme::EventTriggered { rho, .. } => {
            for agent in 0..n {
                let (lhs, rhs) = trigger_lhs_rhs(agent, world, graph, tc, *rho, trig.eta[agent]);
                if lhs >= rhs {
                    fired.push(agent);
                }
            }
            for &agent in &fired {
                world.refresh_broadcast(agent);
                trig.event_log.push(Event { agent, time: t });
                trig.last_event_time[agent] = t;
                // Zeno diagnostic: flag agents that fire on every step for a
                // long run of steps.
                let run = match trig.last_event_step[agent] {
                    Some(prev) if prev + 1 == step_index => trig.consecutive_steps[agent] + 1,
                    _ => 1,
                };
                if run == ZENO_WARN_RUN {
                    trig.zeno_warnings += 1;
                }
                trig.consecutive_steps[agent] = run;
                trig.last_event_step[agent] = Some(step_index);
            }
        }
    }
    fired
}

/// Analytic lower bound on inter-event times from the trigger analysis:
/// `tau_i = (2 rho / (b + rho)) ln((b + rho) / (2 rho D) + 1)` for a
/// trajectory-wide bound `D` on `m ||d/dt estimate|| / sqrt(rho eta)`.
pub fn zeno_bound(rho: f64, b: f64, d: f64) -> f64 {
    2.0 * rho / (b + rho) * libm::log((b + rho) / (2.0 * rho * d) + 1.0)
}

/// Per-agent inter-event interval statistics over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStats {
    pub agent: usize,
    pub count: usize,
    /// `None` when fewer than two events fell inside the horizon.
    pub min_interval: Option<f64>,
    pub mean_interval: Option<f64>,
    pub max_interval: Option<f64>,
}

/// Summarize an event log. Intervals are measured between consecutive events
/// of the same agent; agents with fewer than two events report no intervals
/// rather than zeros.
pub fn event_stats(log: &[Event], horizon: f64, n_agents: usize) -> Vec<EventStats> {
    let mut per_agent: Vec<Vec<f64>> = alloc::vec![Vec::new(); n_agents];
    for e in log {
        if e.time <= horizon && e.agent < n_agents {
            per_agent[e.agent].push(e.time);
        }
    }
    per_agent
        .into_iter()
        .enumerate()
        .map(|(agent, times)| {
            let count = times.len();
            if count < 2 {
                return EventStats {
                    agent,
                    count,
                    min_interval: None,
                    mean_interval: None,
                    max_interval: None,
                };
            }
            let mut min = f64::INFINITY;
            let mut max = 0.0f64;
            let mut sum = 0.0;
            for pair in times.windows(2) {
                let gap = pair[1] - pair[0];
                min = min.min(gap);
                max = max.max(gap);
                sum += gap;
            }
            EventStats {
                agent,
                count,
                min_interval: Some(min),
                mean_interval: Some(sum / (count - 1) as f64),
                max_interval: Some(max),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::WorldState;

    fn world_two_agents(x: [f64; 2], est: [f64; 2], hat: [f64; 4]) -> WorldState {
        // N = 2, n = 1: est_others has one entry per agent.
        let mut w = WorldState::new(
            2,
            1,
            DVector::from_row_slice(&x),
            DVector::zeros(2),
            DVector::from_row_slice(&est),
            DVector::from_element(2, 1.0),
        );
        w.hat.copy_from(&DVector::from_row_slice(&hat));
        w
    }

    #[test]
    fn scheme_validation() {
        assert!(CommScheme::Continuous.validate(3, 0.01).is_ok());
        assert!(CommScheme::Periodic { delta: 0.1 }.validate(3, 0.01).is_ok());
        // 0.15 / 0.01 = 15 exactly.
        assert!(CommScheme::Periodic { delta: 0.15 }.validate(3, 0.01).is_ok());
        assert!(matches!(
            CommScheme::Periodic { delta: 0.1 }.validate(3, 0.03),
            Err(SchedulerError::DeltaNotMultipleOfStep { .. })
        ));
        assert!(matches!(
            CommScheme::Periodic { delta: -0.1 }.validate(3, 0.01),
            Err(SchedulerError::NonPositiveDelta(_))
        ));
        let ok = CommScheme::EventTriggered {
            b: 0.01,
            rho: 3.0,
            eta0: DVector::from_element(3, 1.0),
        };
        assert!(ok.validate(3, 0.01).is_ok());
        let bad_eta = CommScheme::EventTriggered {
            b: 0.01,
            rho: 3.0,
            eta0: DVector::from_row_slice(&[1.0, 0.0, 1.0]),
        };
        assert!(matches!(
            bad_eta.validate(3, 0.01),
            Err(SchedulerError::NonPositiveEta0 { agent: 1, .. })
        ));
        let bad_len = CommScheme::EventTriggered {
            b: 0.01,
            rho: 3.0,
            eta0: DVector::from_element(2, 1.0),
        };
        assert!(matches!(
            bad_len.validate(3, 0.01),
            Err(SchedulerError::Eta0Size { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn trigger_silent_right_after_broadcast() {
        let graph = Graph::path(2, 1.0).unwrap();
        let tc = TriggerConstants { beta1: 1.0, beta2: 2.0 };
        // hat == estimates for agent 0; neighbors disagree.
        let w = world_two_agents([0.0, 2.0], [2.0, 0.0], [0.0, 2.0, 1.0, 2.0]);
        let (lhs, rhs) = trigger_lhs_rhs(0, &w, &graph, &tc, 3.0, 1.0);
        assert_eq!(lhs, 0.0);
        assert!(rhs > 0.0);
    }

    #[test]
    fn trigger_never_fires_at_consensus() {
        let graph = Graph::path(2, 1.0).unwrap();
        let tc = TriggerConstants { beta1: 1.0, beta2: 2.0 };
        // Identical broadcasts, zero error: rhs = rho * eta only.
        let w = world_two_agents([1.0, 1.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0]);
        let (lhs, rhs) = trigger_lhs_rhs(0, &w, &graph, &tc, 3.0, 0.5);
        assert_eq!(lhs, 0.0);
        assert!((rhs - 1.5).abs() < 1e-15);
    }

    #[test]
    fn eta_derivative_pure_decay_and_hand_value() {
        let graph = Graph::path(2, 1.0).unwrap();
        let tc = TriggerConstants { beta1: 0.0, beta2: 0.0 };
        // No disagreement, no error: pure decay -b * eta.
        let w = world_two_agents([1.0, 1.0], [1.0, 1.0], [1.0, 1.0, 1.0, 1.0]);
        let est0 = w.estimate_of(0).into_owned();
        let d = eta_derivative(0, &w, &est0, 2.0, 0.5, &graph, &tc);
        assert!((d + 1.0).abs() < 1e-15);

        // ||xhat0 - xhat1||^2 = 4, zero broadcast error, b = 0.01, eta = 1:
        // eta' = -0.01 + 0.5 * 4 - 0 = 1.99.
        let w2 = world_two_agents([0.0, 0.0], [0.0, 2.0], [0.0, 0.0, 2.0, 0.0]);
        let est = w2.estimate_of(0).into_owned();
        let d2 = eta_derivative(0, &w2, &est, 1.0, 0.01, &graph, &tc);
        assert!((d2 - 1.99).abs() < 1e-12);
    }

    #[test]
    fn periodic_poll_fires_on_grid() {
        let graph = Graph::path(2, 1.0).unwrap();
        let tc = TriggerConstants { beta1: 0.0, beta2: 0.0 };
        let scheme = CommScheme::Periodic { delta: 0.1 };
        let mut w = world_two_agents([0.0, 1.0], [1.0, 0.0], [9.0, 9.0, 9.0, 9.0]);
        let mut trig = TriggerState::new(2, DVector::from_element(2, 1.0));
        let mut fired_steps = Vec::new();
        for step in 0..=25u64 {
            if !poll(&scheme, step, 0.01, &mut w, &graph, &tc, &mut trig).is_empty() {
                fired_steps.push(step);
            }
        }
        assert_eq!(fired_steps, alloc::vec![0, 10, 20]);
        // Broadcast refresh copied the live estimate.
        assert_eq!(w.broadcast_of(0), w.estimate_of(0));
    }

    #[test]
    fn event_poll_silent_at_initialization() {
        let graph = Graph::path(2, 1.0).unwrap();
        let tc = TriggerConstants { beta1: 1.0, beta2: 1.0 };
        let scheme = CommScheme::EventTriggered {
            b: 0.01,
            rho: 3.0,
            eta0: DVector::from_element(2, 1.0),
        };
        // hat == estimates everywhere: zero error, positive rho * eta.
        let mut w = world_two_agents([0.0, 1.0], [1.0, 0.0], [0.0, 1.0, 0.0, 1.0]);
        let mut trig = TriggerState::new(2, DVector::from_element(2, 1.0));
        let fired = poll(&scheme, 0, 0.01, &mut w, &graph, &tc, &mut trig);
        assert!(fired.is_empty());
        assert!(trig.event_log.is_empty());
    }

    #[test]
    fn zeno_bound_special_case_and_monotonicity() {
        // rho = b: tau = ln(1/D + 1).
        for d in [0.5, 1.0, 4.0] {
            let tau = zeno_bound(2.0, 2.0, d);
            assert!((tau - (1.0 / d + 1.0f64).ln()).abs() < 1e-14);
        }
        let mut last = f64::INFINITY;
        for i in 1..50 {
            let d = i as f64;
            let tau = zeno_bound(3.0, 0.01, d);
            assert!(tau > 0.0);
            assert!(tau < last);
            last = tau;
        }
    }

    #[test]
    fn event_stats_periodic_log() {
        // Delta = 0.1 over one second: 11 events including t = 0.
        let mut log = Vec::new();
        for k in 0..=10 {
            log.push(Event {
                agent: 0,
                time: k as f64 * 0.1,
            });
        }
        let stats = event_stats(&log, 1.0, 1);
        assert_eq!(stats[0].count, 11);
        assert!((stats[0].min_interval.unwrap() - 0.1).abs() < 1e-12);
        assert!((stats[0].mean_interval.unwrap() - 0.1).abs() < 1e-12);
        assert!((stats[0].max_interval.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn event_stats_single_event_has_no_intervals() {
        let log = [Event { agent: 0, time: 0.3 }];
        let stats = event_stats(&log, 1.0, 2);
        assert_eq!(stats[0].count, 1);
        assert!(stats[0].min_interval.is_none());
        assert!(stats[0].mean_interval.is_none());
        assert!(stats[0].max_interval.is_none());
        assert_eq!(stats[1].count, 0);
    }

    #[test]
    fn event_stats_respects_horizon() {
        let log = [
            Event { agent: 0, time: 0.0 },
            Event { agent: 0, time: 0.4 },
            Event { agent: 0, time: 2.0 },
        ];
        let stats = event_stats(&log, 1.0, 1);
        assert_eq!(stats[0].count, 2);
        assert!((stats[0].mean_interval.unwrap() - 0.4).abs() < 1e-12);
    }
}
