//! Distributed Nash-equilibrium seeking for networks of double-integrator
//! agents with nonsmooth convex costs.
//!
//! Agents update their strategies along a continuous-time rule that couples
//! subgradient descent in each agent's own cost with consensus on locally
//! maintained estimates of everyone's strategies. Neighbors exchange those
//! estimates either continuously, on a synchronous periodic grid, or through
//! an asynchronous dynamic event trigger; the [`conditions`] module checks
//! the sufficient gain conditions of the corresponding convergence theorems
//! and computes the periodic bound and trigger constants.
//!
//! The crate is `no_std` (with `alloc`): all simulation, game evaluation and
//! spectral computation live here, while file formats and the command line
//! sit in the companion `nesim-cli` crate.
//!
//! Quick tour:
//! - [`graph`]: weighted topologies and their Laplacian-derived constants.
//! - [`game`]: cost term algebra, minimum-norm subdifferentials, the
//!   pseudogradient maps, sampled regularity constants, NE oracles.
//! - [`conditions`]: theorem gain checks, the periodic bound `tau`, trigger
//!   constants `beta1`/`beta2`.
//! - [`scheduler`]: communication schemes, the dynamic trigger, event
//!   statistics and the Zeno bound.
//! - [`engine`]: deterministic fixed-step integration of the closed loop.
//! - [`cournot`]: the built-in five-firm benchmark preset.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub use nalgebra;

pub mod conditions;
pub mod cournot;
pub mod engine;
pub mod game;
pub mod graph;
pub mod scheduler;

pub use conditions::{ConditionReport, RuleParams};
pub use engine::{InitialState, SimConfig, Trajectory, WorldState};
pub use game::{GameSpec, RegularityConstants};
pub use graph::{Graph, GraphConstants};
pub use scheduler::CommScheme;
