//! Sufficient gain conditions of the convergence theorems, the periodic
//! communication bound `tau`, and the event-trigger constants `beta1`,
//! `beta2`.
//!
//! Every check evaluates the stated inequalities with zero slack and reports
//! each clause's left- and right-hand side, so callers can see margins. The
//! checks are pure: identical inputs produce bit-identical reports.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::game::RegularityConstants;
use crate::graph::GraphConstants;

/// Rule gains: damping `k` and consensus gain `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleParams {
    pub k: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Continuous communication, undirected connected graph.
    T1,
    /// Continuous communication, weight-balanced strongly connected digraph.
    Corollary1,
    /// Synchronous periodic communication with period below `tau`.
    T2,
    /// Dynamic event-triggered communication.
    T3,
}

impl core::fmt::Display for Theorem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Theorem::T1 => write!(f, "Theorem 1"),
            Theorem::Corollary1 => write!(f, "Corollary 1"),
            Theorem::T2 => write!(f, "Theorem 2"),
            Theorem::T3 => write!(f, "Theorem 3"),
        }
    }
}

/// One inequality of a theorem, with both sides evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

impl Clause {
    /// Strict `lhs > rhs`; theorems state open conditions.
    fn strict(description: String, lhs: f64, rhs: f64) -> Self {
        Self {
            description,
            lhs,
            rhs,
            passed: lhs > rhs,
        }
    }
}

/// Quantities derived by a check beyond the pass/fail clauses.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derived {
    /// Upper bound on the periodic communication interval (T2, requires `xi^2 > 0`).
    pub tau: Option<f64>,
    pub xi: Option<f64>,
    /// `a = (theta + 1) / alpha` in the bound formula.
    pub a: Option<f64>,
    /// `alpha * ||S^T S L||`; named `b_tau` to keep it apart from the
    /// event-trigger design parameter `b`.
    pub b_tau: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub theorem: Theorem,
    pub satisfied: bool,
    pub clauses: Vec<Clause>,
    pub derived: Derived,
}

/// Theorem 1: continuous communication over a connected undirected graph.
pub fn check_theorem1(
    p: &RuleParams,
    c: &GraphConstants,
    r: &RegularityConstants,
) -> ConditionReport {
    continuous_check(Theorem::T1, p, c, r)
}

/// Corollary 1: the digraph variant. `c.lambda2` already carries the second
/// smallest eigenvalue of the symmetrized Laplacian when the constants come
/// from a digraph, so for undirected-graph constants the report coincides
/// with Theorem 1's.
pub fn check_corollary1(
    p: &RuleParams,
    c: &GraphConstants,
    r: &RegularityConstants,
) -> ConditionReport {
    continuous_check(Theorem::Corollary1, p, c, r)
}

fn continuous_check(
    theorem: Theorem,
    p: &RuleParams,
    c: &GraphConstants,
    r: &RegularityConstants,
) -> ConditionReport {
    let lambda_name = if theorem == Theorem::Corollary1 {
        "lambda2_hat"
    } else {
        "lambda2"
    };
    let k_threshold = (2.0 * r.theta / r.w)
        .max(r.theta + libm::sqrt(r.theta * r.theta + p.alpha * c.rl_norm))
        .max(c.rl_norm / c.lambda2);
    let clause1 = Clause::strict(
        format!(
            "k > max(2 theta / w, theta + sqrt(theta^2 + alpha ||RL||), ||RL|| / {lambda_name})"
        ),
        p.k,
        k_threshold,
    );
    let clause2 = Clause::strict(
        format!("alpha ({lambda_name} - ||RL|| / k) > theta + k^2 theta / 4"),
        p.alpha * (c.lambda2 - c.rl_norm / p.k),
        r.theta + p.k * p.k * r.theta / 4.0,
    );
    let satisfied = clause1.passed && clause2.passed;
    ConditionReport {
        theorem,
        satisfied,
        clauses: alloc::vec![clause1, clause2],
        derived: Derived::default(),
    }
}

/// The `k` threshold shared by Theorems 2 and 3.
fn discrete_k_threshold(p: &RuleParams, c: &GraphConstants, r: &RegularityConstants) -> f64 {
    (2.0 * r.theta / r.w)
        .max(r.theta + libm::sqrt(r.theta * r.theta + 2.0 * p.alpha * c.rl_norm))
        .max(c.rl_norm / c.lambda2 + c.lap_norm / (2.0 * c.lambda2))
}

/// Upper bound on the periodic communication interval:
/// `tau = (1/a) ln(1 + a xi / (a + b + b xi))`.
pub fn periodic_bound_tau(a: f64, b_tau: f64, xi: f64) -> f64 {
    libm::log(1.0 + a * xi / (a + b_tau + b_tau * xi)) / a
}

/// Theorem 2: synchronous periodic communication. When the bound's `xi^2` is
/// positive the derived block carries `xi`, `a`, `b_tau` and `tau`; otherwise
/// the report is unsatisfied and `tau` is absent.
pub fn check_theorem2(
    p: &RuleParams,
    c: &GraphConstants,
    r: &RegularityConstants,
) -> ConditionReport {
    let clause1 = Clause::strict(
        String::from(
            "k > max(2 theta / w, theta + sqrt(theta^2 + 2 alpha ||RL||), ||RL||/lambda2 + ||L||/(2 lambda2))",
        ),
        p.k,
        discrete_k_threshold(p, c, r),
    );
    let clause2 = Clause::strict(
        String::from("alpha (lambda2 - ||RL||/k - ||L||/(2k)) > theta + k^2 theta / 4"),
        p.alpha * (c.lambda2 - c.rl_norm / p.k - c.lap_norm / (2.0 * p.k)),
        r.theta + p.k * p.k * r.theta / 4.0,
    );
    let xi_sq = ((p.alpha * c.lambda2 - r.theta) * p.k
        - p.alpha * c.rl_norm
        - p.k * p.k * p.k * r.theta / 4.0
        - p.alpha * c.lap_norm / 2.0)
        / (p.alpha * c.rl_norm + p.alpha * c.lap_norm * p.k * p.k / 2.0);
    let clause3 = Clause::strict(String::from("xi^2 > 0"), xi_sq, 0.0);
    let mut derived = Derived::default();
    if xi_sq > 0.0 {
        let xi = libm::sqrt(xi_sq);
        let a = (r.theta + 1.0) / p.alpha;
        let b_tau = p.alpha * c.stsl_norm;
        derived.xi = Some(xi);
        derived.a = Some(a);
        derived.b_tau = Some(b_tau);
        derived.tau = Some(periodic_bound_tau(a, b_tau, xi));
    }
    let satisfied = clause1.passed && clause2.passed && clause3.passed;
    ConditionReport {
        theorem: Theorem::T2,
        satisfied,
        clauses: alloc::vec![clause1, clause2, clause3],
        derived,
    }
}

/// Theorem 3: dynamic event-triggered communication. Always computes the
/// trigger constants `beta1 = alpha ||RL|| / k` and
/// `beta2 = (alpha - 1) k ||L|| / 2` into the derived block; `beta2 > 0`
/// needs `alpha > 1`, which is one of the clauses.
pub fn check_theorem3(
    p: &RuleParams,
    c: &GraphConstants,
    r: &RegularityConstants,
) -> ConditionReport {
    let clause_alpha = Clause::strict(String::from("alpha > 1"), p.alpha, 1.0);
    let clause1 = Clause::strict(
        String::from(
            "k > max(2 theta / w, theta + sqrt(theta^2 + 2 alpha ||RL||), ||RL||/lambda2 + ||L||/(2 lambda2))",
        ),
        p.k,
        discrete_k_threshold(p, c, r),
    );
    let clause2 = Clause::strict(
        String::from(
            "(alpha - 1)(lambda2 - ||RL||/k - ||L||/(2k)) > theta + k^2 theta / 4 - ||RL||/k",
        ),
        (p.alpha - 1.0) * (c.lambda2 - c.rl_norm / p.k - c.lap_norm / (2.0 * p.k)),
        r.theta + p.k * p.k * r.theta / 4.0 - c.rl_norm / p.k,
    );
    let satisfied = clause_alpha.passed && clause1.passed && clause2.passed;
    ConditionReport {
        theorem: Theorem::T3,
        satisfied,
        clauses: alloc::vec![clause_alpha, clause1, clause2],
        derived: Derived {
            beta1: Some(p.alpha * c.rl_norm / p.k),
            beta2: Some((p.alpha - 1.0) * p.k * c.lap_norm / 2.0),
            ..Derived::default()
        },
    }
}
