//! Closed-loop integration of the strategy-updating rule with a fixed-step
//! deterministic integrator.
//!
//! The state is `(x, v, estimates, eta)` plus the piecewise-constant
//! broadcast copies. Each agent's own slot inside its estimate vector is
//! never integrated separately: estimate vectors are assembled on demand with
//! the self block taken from `x`, so the self-consistency invariant holds
//! structurally.
//!
//! One step freezes the broadcast copies and the subgradient kink signs at
//! the step's start, advances all integrated states through the selected
//! integrator, then polls the communication scheme and applies broadcast
//! refreshes at the step boundary.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::conditions::RuleParams;
use crate::game::{GameError, GameSpec};
use crate::graph::{Graph, GraphError};
use crate::scheduler::{
    self, CommScheme, Event, SchedulerError, TriggerConstants, TriggerState,
};

/// Magnitude beyond which a state is considered diverged.
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Internal trigger variable default when a configuration leaves it out.
pub const DEFAULT_ETA0: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("config invalid: {0}")]
    Config(&'static str),
    #[error("game has {game} agents but graph has {graph}")]
    AgentCountMismatch { game: usize, graph: usize },
    #[error("initial state has wrong dimensions: {0}")]
    BadInitialState(&'static str),
    #[error("state magnitude exceeded {BLOWUP_LIMIT:.0e} at t = {time}")]
    NumericalBlowup {
        time: f64,
        /// Trajectory recorded up to the failing step.
        partial: alloc::boxed::Box<Trajectory>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Classical 4-stage explicit Runge-Kutta.
    Rk4,
    /// Forward Euler.
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub params: RuleParams,
    pub scheme: CommScheme,
    pub integrator: Integrator,
    /// Store every `record_stride`-th step (the initial state is always kept).
    pub record_stride: usize,
}

impl SimConfig {
    pub fn validate(&self, n_agents: usize) -> Result<(), EngineError> {
        if !(self.dt > 0.0) {
            return Err(EngineError::Config("dt must be positive"));
        }
        if !(self.t_end >= 0.0) {
            return Err(EngineError::Config("t_end must be nonnegative"));
        }
        if self.record_stride == 0 {
            return Err(EngineError::Config("record_stride must be >= 1"));
        }
        if !(self.params.k > 0.0 && self.params.alpha > 0.0) {
            return Err(EngineError::Config("gains k and alpha must be positive"));
        }
        self.scheme.validate(n_agents, self.dt)?;
        Ok(())
    }

    fn n_steps(&self) -> u64 {
        libm::round(self.t_end / self.dt) as u64
    }
}

/// How the estimate vectors start.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateInit {
    /// Every agent's estimate of agent `j` starts at `j`'s true initial
    /// strategy (the "public initial bid" convention).
    BroadcastOwn,
    /// Explicit estimate vectors, one row of length `N n` per agent. The
    /// self slots are overwritten by the structural invariant and must agree
    /// with `x0` up to 1e-9.
    Explicit(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub estimates: EstimateInit,
}

impl InitialState {
    /// Zero velocities and public-bid estimates.
    pub fn from_strategies(x0: DVector<f64>) -> Self {
        let v0 = DVector::zeros(x0.len());
        Self {
            x0,
            v0,
            estimates: EstimateInit::BroadcastOwn,
        }
    }
}

/// All per-run state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: f64,
    /// Strategies, dimension `N n`.
    pub x: DVector<f64>,
    /// Auxiliary (velocity) states, dimension `N n`.
    pub v: DVector<f64>,
    /// Non-self estimate blocks, agent-major, ascending opponent index,
    /// dimension `N (N-1) n`.
    pub est_others: DVector<f64>,
    /// Broadcast copies of the full estimate vectors, dimension `N^2 n`.
    pub hat: DVector<f64>,
    /// Internal trigger variables (meaningful for the event scheme only).
    pub eta: DVector<f64>,
    n_agents: usize,
    dim: usize,
}

impl WorldState {
    pub fn new(
        n_agents: usize,
        dim: usize,
        x: DVector<f64>,
        v: DVector<f64>,
        est_others: DVector<f64>,
        eta: DVector<f64>,
    ) -> Self {
        let mut world = Self {
            t: 0.0,
            x,
            v,
            est_others,
            hat: DVector::zeros(n_agents * n_agents * dim),
            eta,
            n_agents,
            dim,
        };
        for i in 0..n_agents {
            world.refresh_broadcast(i);
        }
        world
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Offset of agent `i`'s estimate of agent `j` inside `est_others`.
    fn est_offset(&self, i: usize, j: usize) -> usize {
        debug_assert_ne!(i, j);
        let slot = if j < i { j } else { j - 1 };
        (i * (self.n_agents - 1) + slot) * self.dim
    }

    /// Agent `i`'s full estimate vector, self block taken from `x`.
    pub fn estimate_of(&self, i: usize) -> DVector<f64> {
        let nn = self.n_agents * self.dim;
        let mut out = DVector::zeros(nn);
        for j in 0..self.n_agents {
            if j == i {
                out.rows_mut(j * self.dim, self.dim)
                    .copy_from(&self.x.rows(i * self.dim, self.dim));
            } else {
                out.rows_mut(j * self.dim, self.dim)
                    .copy_from(&self.est_others.rows(self.est_offset(i, j), self.dim));
            }
        }
        out
    }

    /// All estimate vectors stacked, dimension `N^2 n`.
    pub fn estimates_stacked(&self) -> DVector<f64> {
        let nn = self.n_agents * self.dim;
        let mut out = DVector::zeros(self.n_agents * nn);
        for i in 0..self.n_agents {
            out.rows_mut(i * nn, nn).copy_from(&self.estimate_of(i));
        }
        out
    }

    /// Agent `i`'s broadcast copy of its estimate vector.
    pub fn broadcast_of(&self, i: usize) -> DVector<f64> {
        let nn = self.n_agents * self.dim;
        self.hat.rows(i * nn, nn).into_owned()
    }

    /// Set agent `i`'s broadcast copy to its current estimate vector.
    pub fn refresh_broadcast(&mut self, i: usize) {
        let nn = self.n_agents * self.dim;
        let est = self.estimate_of(i);
        self.hat.rows_mut(i * nn, nn).copy_from(&est);
    }

    fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for v in self
            .x
            .iter()
            .chain(self.v.iter())
            .chain(self.est_others.iter())
            .chain(self.eta.iter())
        {
            m = m.max(libm::fabs(*v));
        }
        m
    }
}

/// Time derivatives of the integrated state blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub dx: DVector<f64>,
    pub dv: DVector<f64>,
    pub d_est: DVector<f64>,
    pub d_eta: DVector<f64>,
}

/// Right-hand side of the rule at `world`, with the kink selection taken at
/// the current strategies. Continuous communication substitutes the live
/// estimate vectors for the broadcast copies; the discrete schemes use the
/// broadcast copies held in `world.hat`.
pub fn rhs(
    world: &WorldState,
    game: &GameSpec,
    graph: &Graph,
    params: &RuleParams,
    scheme: &CommScheme,
    tc: &TriggerConstants,
) -> Result<Rhs, EngineError> {
    check_shapes(world, game, graph)?;
    Ok(rhs_inner(world, game, graph, params, scheme, tc, &world.x))
}

fn check_shapes(world: &WorldState, game: &GameSpec, graph: &Graph) -> Result<(), EngineError> {
    if game.n_agents() != graph.n_agents() {
        return Err(EngineError::AgentCountMismatch {
            game: game.n_agents(),
            graph: graph.n_agents(),
        });
    }
    if world.n_agents != game.n_agents() || world.dim != game.dim() {
        return Err(EngineError::BadInitialState("world shape mismatch"));
    }
    Ok(())
}

/// The hot path: evaluate the rule with the kink signs frozen at `freeze_x`.
fn rhs_inner(
    world: &WorldState,
    game: &GameSpec,
    graph: &Graph,
    params: &RuleParams,
    scheme: &CommScheme,
    tc: &TriggerConstants,
    freeze_x: &DVector<f64>,
) -> Rhs {
    let n = world.n_agents;
    let dim = world.dim;
    let nn = n * dim;
    let live = matches!(scheme, CommScheme::Continuous);

    // Neighbor views: live estimates for the continuous scheme, broadcast
    // copies otherwise.
    let estimates: Vec<DVector<f64>> = (0..n).map(|i| world.estimate_of(i)).collect();
    let seen: Vec<&DVector<f64>> = if live {
        estimates.iter().collect()
    } else {
        Vec::new()
    };

    let neighbor_view = |i: usize| -> DVector<f64> {
        if live {
            seen[i].clone()
        } else {
            world.broadcast_of(i)
        }
    };

    let mut dx = DVector::zeros(nn);
    let mut dv = DVector::zeros(nn);
    let mut d_est = DVector::zeros(n * (n - 1) * dim);
    let mut d_eta = DVector::zeros(n);
    let event = matches!(scheme, CommScheme::EventTriggered { .. });
    let b = match scheme {
        CommScheme::EventTriggered { b, .. } => *b,
        _ => 0.0,
    };

    dx.copy_from(&world.v);
    for i in 0..n {
        let own = neighbor_view(i);
        let mut disagreement = DVector::zeros(nn);
        for j in 0..n {
            let a_ij = graph.weight(i, j);
            if a_ij > 0.0 {
                disagreement += (&own - neighbor_view(j)) * a_ij;
            }
        }
        let freeze_i = freeze_x.rows(i * dim, dim).into_owned();
        let selection = game.selection_frozen_profile(i, &estimates[i], &freeze_i);
        let v_i = world.v.rows(i * dim, dim);
        let correction = disagreement.rows(i * dim, dim) * (params.alpha / params.k);
        dv.rows_mut(i * dim, dim)
            .copy_from(&(-v_i * params.k - selection - correction));
        for j in 0..n {
            if j != i {
                let block = disagreement.rows(j * dim, dim) * (-params.alpha);
                d_est
                    .rows_mut(world.est_offset(i, j), dim)
                    .copy_from(&block);
            }
        }
        if event {
            d_eta[i] =
                scheduler::eta_derivative(i, world, &estimates[i], world.eta[i], b, graph, tc);
        }
    }
    Rhs {
        dx,
        dv,
        d_est,
        d_eta,
    }
}

fn advanced(world: &WorldState, k: &Rhs, h: f64, integrate_eta: bool) -> WorldState {
    let mut next = world.clone();
    next.x.axpy(h, &k.dx, 1.0);
    next.v.axpy(h, &k.dv, 1.0);
    next.est_others.axpy(h, &k.d_est, 1.0);
    if integrate_eta {
        next.eta.axpy(h, &k.d_eta, 1.0);
    }
    next
}

/// Advance one step: integrate over `dt` with the broadcast copies and the
/// kink selection frozen at the step start, then poll the scheduler and apply
/// broadcast refreshes at the boundary.
pub fn step(
    world: &mut WorldState,
    step_index: u64,
    config: &SimConfig,
    game: &GameSpec,
    graph: &Graph,
    tc: &TriggerConstants,
    trig: &mut TriggerState,
) -> Result<Vec<usize>, EngineError> {
    check_shapes(world, game, graph)?;
    let dt = config.dt;
    let event = matches!(config.scheme, CommScheme::EventTriggered { .. });
    if event {
        // The trigger rule compares against the pre-step eta.
        trig.eta.copy_from(&world.eta);
    }
    let freeze_x = world.x.clone();
    let eval = |w: &WorldState| {
        rhs_inner(w, game, graph, &config.params, &config.scheme, tc, &freeze_x)
    };
    match config.integrator {
        Integrator::Euler => {
            let k1 = eval(world);
            *world = advanced(world, &k1, dt, event);
        }
        Integrator::Rk4 => {
            let k1 = eval(world);
            let k2 = eval(&advanced(world, &k1, dt / 2.0, event));
            let k3 = eval(&advanced(world, &k2, dt / 2.0, event));
            let k4 = eval(&advanced(world, &k3, dt, event));
            let mut total = k1;
            total.dx = (total.dx + &k2.dx * 2.0 + &k3.dx * 2.0 + &k4.dx) / 6.0;
            total.dv = (total.dv + &k2.dv * 2.0 + &k3.dv * 2.0 + &k4.dv) / 6.0;
            total.d_est = (total.d_est + &k2.d_est * 2.0 + &k3.d_est * 2.0 + &k4.d_est) / 6.0;
            total.d_eta = (total.d_eta + &k2.d_eta * 2.0 + &k3.d_eta * 2.0 + &k4.d_eta) / 6.0;
            *world = advanced(world, &total, dt, event);
        }
    }
    let boundary = step_index + 1;
    world.t = boundary as f64 * dt;
    if event {
        for (i, &e) in world.eta.iter().enumerate() {
            assert!(
                e > 0.0,
                "trigger variable eta[{i}] = {e} lost positivity at t = {}",
                world.t
            );
        }
    }
    Ok(scheduler::poll(
        &config.scheme,
        boundary,
        dt,
        world,
        graph,
        tc,
        trig,
    ))
}

/// Convergence metric series sampled at the recorded steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// `||x(t) - x*||`; empty when no reference equilibrium was supplied.
    pub err_ne: Vec<f64>,
    /// `max_{i,j} ||estimate_i - estimate_j||`.
    pub err_consensus: Vec<f64>,
    /// Lyapunov value; empty when no reference equilibrium was supplied.
    pub lyapunov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<WorldState>,
    pub events: Vec<Event>,
    pub metrics: Metrics,
    pub final_state: WorldState,
    /// Max of `m ||d/dt estimate_i|| / sqrt(rho eta_i)` along the run
    /// (event scheme only); feeds the Zeno bound.
    pub zeno_d_estimate: Option<f64>,
    /// Smallest trigger variable observed along the run (event scheme only).
    pub min_eta: Option<f64>,
    /// Number of agents that fired on 100 consecutive steps at least once.
    pub zeno_warnings: usize,
}

/// Largest pairwise disagreement between estimate vectors.
pub fn consensus_error(world: &WorldState) -> f64 {
    let n = world.n_agents();
    let estimates: Vec<DVector<f64>> = (0..n).map(|i| world.estimate_of(i)).collect();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((&estimates[i] - &estimates[j]).norm());
        }
    }
    worst
}

/// Lyapunov function from the convergence analysis:
/// `V = 1/2 (||v||^2 + ||k (x - x*) + v||^2 + sum_i ||est_i - x*||^2)`, the
/// last sum running over the non-self estimate blocks only.
pub fn lyapunov(world: &WorldState, params: &RuleParams, x_star: &DVector<f64>) -> f64 {
    let x_tilde = &world.x - x_star;
    let combo = &x_tilde * params.k + &world.v;
    let mut third = 0.0;
    let dim = world.dim();
    for i in 0..world.n_agents() {
        for j in 0..world.n_agents() {
            if j != i {
                let block = world.est_others.rows(world.est_offset(i, j), dim);
                let target = x_star.rows(j * dim, dim);
                third += (block - target).norm_squared();
            }
        }
    }
    0.5 * (world.v.norm_squared() + combo.norm_squared() + third)
}

/// Trigger constants for a parameter/graph pairing.
pub fn trigger_constants(params: &RuleParams, graph: &Graph, dim: usize) -> Result<TriggerConstants, EngineError> {
    let gc = graph.constants(dim)?;
    Ok(TriggerConstants {
        beta1: params.alpha * gc.rl_norm / params.k,
        beta2: (params.alpha - 1.0) * params.k * gc.lap_norm / 2.0,
    })
}

/// Integrate the closed loop from `init` to `t_end`.
///
/// Deterministic: identical inputs give bit-identical trajectories. The run
/// proceeds whether or not the theorem gain conditions hold; checking them is
/// the caller's concern. On divergence the error carries the trajectory
/// recorded so far.
pub fn run(
    config: &SimConfig,
    game: &GameSpec,
    graph: &Graph,
    init: &InitialState,
    x_star: Option<&DVector<f64>>,
) -> Result<Trajectory, EngineError> {
    let n = game.n_agents();
    let dim = game.dim();
    let nn = n * dim;
    config.validate(n)?;
    if graph.n_agents() != n {
        return Err(EngineError::AgentCountMismatch {
            game: n,
            graph: graph.n_agents(),
        });
    }
    if init.x0.len() != nn || init.v0.len() != nn {
        return Err(EngineError::BadInitialState("x0/v0 must have dimension N*n"));
    }
    if let Some(xs) = x_star {
        if xs.len() != nn {
            return Err(EngineError::BadInitialState("x_star must have dimension N*n"));
        }
    }

    let est_others = match &init.estimates {
        EstimateInit::BroadcastOwn => {
            let mut est = DVector::zeros(n * (n - 1) * dim);
            let mut idx = 0;
            for i in 0..n {
                for j in 0..n {
                    if j != i {
                        est.rows_mut(idx, dim).copy_from(&init.x0.rows(j * dim, dim));
                        idx += dim;
                    }
                }
            }
            est
        }
        EstimateInit::Explicit(rows) => {
            if rows.nrows() != n || rows.ncols() != nn {
                return Err(EngineError::BadInitialState(
                    "explicit estimates must be an N x (N*n) matrix",
                ));
            }
            let mut est = DVector::zeros(n * (n - 1) * dim);
            let mut idx = 0;
            for i in 0..n {
                for j in 0..n {
                    let entry_start = j * dim;
                    if j == i {
                        for c in 0..dim {
                            let given = rows[(i, entry_start + c)];
                            if libm::fabs(given - init.x0[entry_start + c]) > 1e-9 {
                                return Err(EngineError::BadInitialState(
                                    "explicit estimate self block disagrees with x0",
                                ));
                            }
                        }
                    } else {
                        for c in 0..dim {
                            est[idx + c] = rows[(i, entry_start + c)];
                        }
                        idx += dim;
                    }
                }
            }
            est
        }
    };

    let (eta0, rho) = match &config.scheme {
        CommScheme::EventTriggered { rho, eta0, .. } => (eta0.clone(), *rho),
        _ => (DVector::zeros(n), 0.0),
    };
    let event = matches!(config.scheme, CommScheme::EventTriggered { .. });
    // Only the event trigger consumes the constants; the other schemes never
    // read them, and computing them would reject graphs (e.g. disconnected
    // ones) the rule itself can still be integrated on.
    let tc = if event {
        trigger_constants(&config.params, graph, dim)?
    } else {
        TriggerConstants {
            beta1: 0.0,
            beta2: 0.0,
        }
    };

    let mut world = WorldState::new(n, dim, init.x0.clone(), init.v0.clone(), est_others, eta0);
    let mut trig = TriggerState::new(n, world.eta.clone());

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        events: Vec::new(),
        metrics: Metrics::default(),
        final_state: world.clone(),
        zeno_d_estimate: if event { Some(0.0) } else { None },
        min_eta: if event { Some(world.eta.min()) } else { None },
        zeno_warnings: 0,
    };

    let record = |traj: &mut Trajectory, world: &WorldState| {
        traj.times.push(world.t);
        traj.states.push(world.clone());
        traj.metrics.err_consensus.push(consensus_error(world));
        if let Some(xs) = x_star {
            traj.metrics.err_ne.push((&world.x - xs).norm());
            traj.metrics.lyapunov.push(lyapunov(world, &config.params, xs));
        }
    };

    // Initial boundary: the periodic grid includes t = 0; the event trigger
    // cannot fire with zero broadcast error.
    scheduler::poll(&config.scheme, 0, config.dt, &mut world, graph, &tc, &mut trig);
    record(&mut traj, &world);

    let m_trigger = match &config.scheme {
        CommScheme::EventTriggered { .. } => {
            let degrees = graph.degrees();
            let d_max = degrees.max();
            libm::sqrt(tc.beta1 + tc.beta2 + 2.0 * d_max)
        }
        _ => 0.0,
    };

    let n_steps = config.n_steps();
    for s in 0..n_steps {
        step(&mut world, s, config, game, graph, &tc, &mut trig)?;
        if world.max_abs() > BLOWUP_LIMIT {
            traj.events = trig.event_log.clone();
            traj.final_state = world.clone();
            return Err(EngineError::NumericalBlowup {
                time: world.t,
                partial: alloc::boxed::Box::new(traj),
            });
        }
        if event {
            // Track the trajectory bound that feeds the Zeno estimate.
            let derivs = rhs_inner(
                &world,
                game,
                graph,
                &config.params,
                &config.scheme,
                &tc,
                &world.x,
            );
            let mut d_est_max = traj.zeno_d_estimate.unwrap_or(0.0);
            for i in 0..n {
                let mut est_dot = DVector::zeros(nn);
                for j in 0..n {
                    if j == i {
                        est_dot
                            .rows_mut(j * dim, dim)
                            .copy_from(&derivs.dx.rows(i * dim, dim));
                    } else {
                        est_dot
                            .rows_mut(j * dim, dim)
                            .copy_from(&derivs.d_est.rows(world.est_offset(i, j), dim));
                    }
                }
                let denom = libm::sqrt(rho * world.eta[i]);
                if denom > 0.0 {
                    d_est_max = d_est_max.max(m_trigger * est_dot.norm() / denom);
                }
            }
            traj.zeno_d_estimate = Some(d_est_max);
            traj.min_eta = traj.min_eta.map(|m| m.min(world.eta.min()));
        }
        if (s + 1) % config.record_stride as u64 == 0 {
            record(&mut traj, &world);
        }
    }

    traj.events = trig.event_log.clone();
    traj.zeno_warnings = trig.zeno_warnings;
    traj.final_state = world;
    Ok(traj)
}
