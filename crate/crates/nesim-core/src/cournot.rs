//! Built-in five-firm Cournot benchmark: exact cost parameters, the cycle
//! topology, rule gains, and the communication-scheme presets.
//!
//! Each firm's cost is
//! `J_i = delta_i + beta_i |x_i - c_i| + gamma_i x_i^2 - (p - a * sum_j x_j^2) x_i`.
//! The price aggregate is the sum of *squared* strategies, kept exactly as
//! printed in the source material; `classic_linear_aggregate` switches to the
//! textbook Cournot aggregate `sum_j x_j` for comparison and is off by
//! default.

use alloc::vec::Vec;
use nalgebra::DVector;

use crate::conditions::RuleParams;
use crate::game::{CostFunction, CostTerm, GameError, GameSpec};
use crate::graph::{Graph, GraphError};
use crate::scheduler::CommScheme;

/// Name under which the preset is exposed to configuration files.
pub const PRESET_NAME: &str = "cournot5";

#[derive(Debug, Clone, PartialEq)]
pub struct CournotPreset {
    pub delta: [f64; 5],
    pub beta: [f64; 5],
    pub gamma: [f64; 5],
    pub c: [f64; 5],
    pub p: f64,
    pub a: f64,
    pub x0: [f64; 5],
    pub k: f64,
    pub alpha: f64,
    pub b: f64,
    pub rho: f64,
    pub delta_period: f64,
    /// Replace the squared-sum price aggregate with the classical linear one.
    pub classic_linear_aggregate: bool,
}

impl Default for CournotPreset {
    fn default() -> Self {
        Self {
            delta: [5.0, 8.0, 6.0, 9.0, 7.0],
            beta: [12.0, 15.0, 8.0, 11.0, 13.0],
            gamma: [0.4, 0.5, 0.5, 0.3, 0.3],
            c: [25.0, 48.0, 15.0, 30.0, 45.0],
            p: 10.0,
            a: 0.001,
            x0: [25.0, 30.0, 20.0, 30.0, 35.0],
            k: 4.0,
            alpha: 5.0,
            b: 0.01,
            rho: 3.0,
            delta_period: 0.1,
            classic_linear_aggregate: false,
        }
    }
}

impl CournotPreset {
    /// The five-agent game with the preset cost parameters.
    pub fn game(&self) -> Result<GameSpec, GameError> {
        let costs: Vec<CostFunction> = (0..5)
            .map(|i| {
                CostFunction::Terms(alloc::vec![
                    CostTerm::Constant(self.delta[i]),
                    CostTerm::AbsKink {
                        weight: self.beta[i],
                        center: DVector::from_element(1, self.c[i]),
                    },
                    CostTerm::Quadratic(self.gamma[i]),
                    CostTerm::PriceCoupling {
                        p: self.p,
                        a: self.a,
                        linear_aggregate: self.classic_linear_aggregate,
                    },
                ])
            })
            .collect();
        GameSpec::new(5, 1, costs)
    }

    /// Unit-weight cycle over the five agents.
    pub fn graph(&self) -> Result<Graph, GraphError> {
        Graph::cycle(5, 1.0)
    }

    pub fn params(&self) -> RuleParams {
        RuleParams {
            k: self.k,
            alpha: self.alpha,
        }
    }

    pub fn initial_strategies(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.x0)
    }

    pub fn continuous_scheme(&self) -> CommScheme {
        CommScheme::Continuous
    }

    pub fn periodic_scheme(&self) -> CommScheme {
        CommScheme::Periodic {
            delta: self.delta_period,
        }
    }

    pub fn event_scheme(&self) -> CommScheme {
        CommScheme::EventTriggered {
            b: self.b,
            rho: self.rho,
            eta0: DVector::from_element(5, crate::engine::DEFAULT_ETA0),
        }
    }
}
