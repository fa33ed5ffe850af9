//! The N-person game: cost evaluation, subdifferentials with a deterministic
//! minimum-norm selection, the pseudogradient maps, sampled regularity
//! constants, and an independent Nash-equilibrium oracle.
//!
//! Costs are composed from a small term algebra (affine, quadratic, weighted
//! absolute-value kinks, and a Cournot-style price coupling), which keeps kink
//! locations structural: the selection at a kink is exact, not approximated.
//! Arbitrary closures are also accepted for smooth costs, differentiated by
//! central finite differences.

mod oracle;

pub use oracle::{best_response_ne, solve_ne};

use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::DVector;
use rand::Rng;

/// Finite-difference step used for `CostFunction::Custom` gradients.
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("agent index {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },
    #[error("game must have at least one agent and dimension >= 1")]
    EmptyGame,
    #[error("cost list has {got} entries, expected one per agent ({expected})")]
    CostCountMismatch { expected: usize, got: usize },
    #[error("price coupling term requires scalar strategies (dim = 1), got dim {dim}")]
    CouplingNeedsScalar { dim: usize },
    #[error("sampled pair yields negative monotonicity quotient {quotient:.3e}")]
    MonotonicityViolated { quotient: f64 },
    #[error("midpoint convexity violated for agent {agent} by {violation:.3e}")]
    NonConvexDetected { agent: usize, violation: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("estimation box is empty or mis-dimensioned")]
    BadBox,
}

/// One additive piece of an agent's cost, as a function of the agent's own
/// strategy `x_i` (and, for the coupling term, of the full profile).
#[derive(Debug, Clone, PartialEq)]
pub enum CostTerm {
    /// Constant offset.
    Constant(f64),
    /// `b^T x_i`.
    Linear(DVector<f64>),
    /// `q * ||x_i||^2`.
    Quadratic(f64),
    /// `weight * sum_c |x_i[c] - center[c]|`; nonsmooth at the center.
    AbsKink { weight: f64, center: DVector<f64> },
    /// `-(p - a * agg) * x_i` with `agg = sum_j x_j^2` (or `sum_j x_j` when
    /// `linear_aggregate`). Scalar strategies only.
    PriceCoupling {
        p: f64,
        a: f64,
        linear_aggregate: bool,
    },
}

/// A whole cost function for one agent.
#[derive(Clone)]
pub enum CostFunction {
    /// Sum of structural terms; kinks handled exactly.
    Terms(Vec<CostTerm>),
    /// Arbitrary smooth cost `f(profile)` of the full strategy profile, where
    /// the caller's own slot carries `x_i`. Subgradients come from central
    /// finite differences, so kinks are not supported here.
    Custom(Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>),
}

impl core::fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CostFunction::Terms(t) => f.debug_tuple("Terms").field(t).finish(),
            CostFunction::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Result of evaluating an agent's subdifferential at a point.
///
/// `selection` is the deterministic minimum-norm choice: each kink term
/// contributes `weight * sign(x - center)` away from its center and `0`
/// exactly on it. `interval_radius` is the per-component half-width of the
/// subdifferential box around the selection (zero where smooth).
#[derive(Debug, Clone, PartialEq)]
pub struct SubdiffResult {
    pub selection: DVector<f64>,
    pub is_smooth_point: bool,
    pub interval_radius: DVector<f64>,
}

impl SubdiffResult {
    /// Euclidean distance from the origin to the subdifferential box
    /// `[selection - radius, selection + radius]`. Zero iff `0` is a valid
    /// subgradient, i.e. the point is a per-agent optimum.
    pub fn distance_to_zero(&self) -> f64 {
        let mut acc = 0.0;
        for (s, r) in self.selection.iter().zip(self.interval_radius.iter()) {
            let d = (libm::fabs(*s) - r).max(0.0);
            acc += d * d;
        }
        libm::sqrt(acc)
    }
}

/// Lipschitz constant and strong-monotonicity modulus of the pseudogradient.
///
/// Values produced by [`GameSpec::estimate_constants`] are empirical: the
/// sampled maximum is a lower bound on the true Lipschitz constant and the
/// sampled minimum an upper bound on the true modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants {
    pub theta: f64,
    pub w: f64,
}

impl RegularityConstants {
    pub fn new(theta: f64, w: f64) -> Option<Self> {
        (theta > 0.0 && w > 0.0 && w <= theta).then_some(Self { theta, w })
    }
}

/// Axis-aligned sampling region for constant estimation and convexity checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl SampleBox {
    /// Uniform box `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: DVector::from_element(dim, lo),
            hi: DVector::from_element(dim, hi),
        }
    }

    fn validate(&self, dim: usize) -> Result<(), GameError> {
        if self.lo.len() != dim || self.hi.len() != dim {
            return Err(GameError::BadBox);
        }
        if self.lo.iter().zip(self.hi.iter()).any(|(l, h)| l > h) {
            return Err(GameError::BadBox);
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.lo.len(),
            self.lo.iter().zip(self.hi.iter()).map(|(&l, &h)| {
                if h > l {
                    rng.random_range(l..h)
                } else {
                    l
                }
            }),
        )
    }
}

/// The N-person game: `n_agents` players with `dim`-dimensional strategies.
#[derive(Debug, Clone)]
pub struct GameSpec {
    n_agents: usize,
    dim: usize,
    costs: Vec<CostFunction>,
}

impl GameSpec {
    pub fn new(n_agents: usize, dim: usize, costs: Vec<CostFunction>) -> Result<Self, GameError> {
        if n_agents == 0 || dim == 0 {
            return Err(GameError::EmptyGame);
        }
        if costs.len() != n_agents {
            return Err(GameError::CostCountMismatch {
                expected: n_agents,
                got: costs.len(),
            });
        }
        for cost in &costs {
            if let CostFunction::Terms(terms) = cost {
                for t in terms {
                    if matches!(t, CostTerm::PriceCoupling { .. }) && dim != 1 {
                        return Err(GameError::CouplingNeedsScalar { dim });
                    }
                }
            }
        }
        Ok(Self {
            n_agents,
            dim,
            costs,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total profile dimension `N * n`.
    pub fn profile_dim(&self) -> usize {
        self.n_agents * self.dim
    }

    /// Cost `J_i(x_i, x_{-i})`. `others` stacks the remaining agents'
    /// strategies in index order, dimension `(N-1) * n`.
    pub fn cost(&self, agent: usize, x_i: &DVector<f64>, others: &DVector<f64>) -> f64 {
        let profile = self.assemble_profile(agent, x_i, others);
        self.cost_profile(agent, &profile)
    }

    /// Cost of agent `i` evaluated on a full profile (slot `i` holds `x_i`).
    pub fn cost_profile(&self, agent: usize, profile: &DVector<f64>) -> f64 {
        let x_i = profile.rows(agent * self.dim, self.dim);
        match &self.costs[agent] {
            CostFunction::Custom(f) => f(profile),
            CostFunction::Terms(terms) => {
                let mut total = 0.0;
                for term in terms {
                    total += match term {
                        CostTerm::Constant(c) => *c,
                        CostTerm::Linear(b) => b.dot(&x_i),
                        CostTerm::Quadratic(q) => q * x_i.norm_squared(),
                        CostTerm::AbsKink { weight, center } => {
                            weight
                                * x_i
                                    .iter()
                                    .zip(center.iter())
                                    .map(|(x, c)| libm::fabs(x - c))
                                    .sum::<f64>()
                        }
                        CostTerm::PriceCoupling {
                            p,
                            a,
                            linear_aggregate,
                        } => {
                            let agg: f64 = if *linear_aggregate {
                                profile.iter().sum()
                            } else {
                                profile.iter().map(|v| v * v).sum()
                            };
                            -(p - a * agg) * x_i[0]
                        }
                    };
                }
                total
            }
        }
    }

    /// Minimum-norm subgradient of `J_i` in `x_i` against the given opponents.
    pub fn subdiff(
        &self,
        agent: usize,
        x_i: &DVector<f64>,
        others: &DVector<f64>,
    ) -> SubdiffResult {
        let profile = self.assemble_profile(agent, x_i, others);
        self.subdiff_profile(agent, &profile)
    }

    /// As [`Self::subdiff`], evaluated on a full profile.
    pub fn subdiff_profile(&self, agent: usize, profile: &DVector<f64>) -> SubdiffResult {
        let x_i = profile.rows(agent * self.dim, self.dim).into_owned();
        let selection = self.selection_frozen_profile(agent, profile, &x_i);
        let mut radius = DVector::zeros(self.dim);
        if let CostFunction::Terms(terms) = &self.costs[agent] {
            for term in terms {
                if let CostTerm::AbsKink { weight, center } = term {
                    for c in 0..self.dim {
                        if x_i[c] == center[c] {
                            radius[c] += weight;
                        }
                    }
                }
            }
        }
        let is_smooth_point = radius.iter().all(|&r| r == 0.0);
        SubdiffResult {
            selection,
            is_smooth_point,
            interval_radius: radius,
        }
    }

    /// Subgradient selection with the kink signs frozen at `freeze_x_i`
    /// instead of the evaluation point. The smooth part is evaluated at the
    /// profile; only the sign of each kink term is taken from the freeze
    /// point. With `freeze_x_i` equal to the profile's own slot this is the
    /// plain minimum-norm selection.
    pub fn selection_frozen_profile(
        &self,
        agent: usize,
        profile: &DVector<f64>,
        freeze_x_i: &DVector<f64>,
    ) -> DVector<f64> {
        let mut g = self.smooth_gradient_profile(agent, profile);
        if let CostFunction::Terms(terms) = &self.costs[agent] {
            for term in terms {
                if let CostTerm::AbsKink { weight, center } = term {
                    for c in 0..self.dim {
                        g[c] += weight * sign(freeze_x_i[c] - center[c]);
                    }
                }
            }
        }
        g
    }

    /// Smooth part of the subgradient (all terms except the kinks).
    pub(crate) fn smooth_gradient_profile(
        &self,
        agent: usize,
        profile: &DVector<f64>,
    ) -> DVector<f64> {
        let x_i = profile.rows(agent * self.dim, self.dim);
        match &self.costs[agent] {
            CostFunction::Custom(_) => self.fd_gradient(agent, profile),
            CostFunction::Terms(terms) => {
                let mut g = DVector::zeros(self.dim);
                for term in terms {
                    match term {
                        CostTerm::Constant(_) | CostTerm::AbsKink { .. } => {}
                        CostTerm::Linear(b) => g += b,
                        CostTerm::Quadratic(q) => g += x_i * (2.0 * q),
                        CostTerm::PriceCoupling {
                            p,
                            a,
                            linear_aggregate,
                        } => {
                            // The aggregate includes the agent's own entry, so
                            // the product rule adds the own-derivative term on
                            // top of -(p - a * agg).
                            if *linear_aggregate {
                                let agg: f64 = profile.iter().sum();
                                g[0] += -(p - a * agg) + a * x_i[0];
                            } else {
                                let agg: f64 = profile.iter().map(|v| v * v).sum();
                                g[0] += -(p - a * agg) + 2.0 * a * x_i[0] * x_i[0];
                            }
                        }
                    }
                }
                g
            }
        }
    }

    /// Absolute-value kink terms of one agent, as `(component, center, weight)`.
    pub(crate) fn kinks(&self, agent: usize) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        if let CostFunction::Terms(terms) = &self.costs[agent] {
            for term in terms {
                if let CostTerm::AbsKink { weight, center } = term {
                    for c in 0..self.dim {
                        out.push((c, center[c], *weight));
                    }
                }
            }
        }
        out
    }

    fn fd_gradient(&self, agent: usize, profile: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        let mut work = profile.clone();
        for c in 0..self.dim {
            let idx = agent * self.dim + c;
            let orig = work[idx];
            work[idx] = orig + FD_STEP;
            let plus = self.cost_profile(agent, &work);
            work[idx] = orig - FD_STEP;
            let minus = self.cost_profile(agent, &work);
            work[idx] = orig;
            g[c] = (plus - minus) / (2.0 * FD_STEP);
        }
        g
    }

    /// Pseudogradient `F(x)`: the stacked minimum-norm selections of every
    /// agent evaluated against the true profile. Implemented as the augmented
    /// map on the replicated profile, so the consensus-reduction identity
    /// holds by construction.
    pub fn pseudogradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        let nn = self.profile_dim();
        if x.len() != nn {
            return Err(GameError::DimensionMismatch {
                expected: nn,
                got: x.len(),
            });
        }
        let mut replicated = DVector::zeros(self.n_agents * nn);
        for i in 0..self.n_agents {
            replicated.rows_mut(i * nn, nn).copy_from(x);
        }
        self.augmented_map(&replicated)
    }

    /// Augmented map: component `i` is agent `i`'s minimum-norm selection
    /// evaluated against its own estimate vector. `stacked` holds the `N`
    /// estimate vectors in order, dimension `N^2 * n`; the caller keeps each
    /// self-block consistent with the agent's true strategy.
    pub fn augmented_map(&self, stacked: &DVector<f64>) -> Result<DVector<f64>, GameError> {
        let nn = self.profile_dim();
        if stacked.len() != self.n_agents * nn {
            return Err(GameError::DimensionMismatch {
                expected: self.n_agents * nn,
                got: stacked.len(),
            });
        }
        let mut out = DVector::zeros(nn);
        for i in 0..self.n_agents {
            let estimate = stacked.rows(i * nn, nn).into_owned();
            let sel = self.subdiff_profile(i, &estimate).selection;
            out.rows_mut(i * self.dim, self.dim).copy_from(&sel);
        }
        Ok(out)
    }

    /// Check whether `x` is a Nash equilibrium to tolerance `tol`: for every
    /// agent the distance from `0` to its subdifferential must not exceed
    /// `tol`. Returns the per-agent residuals alongside the verdict.
    pub fn verify_ne(&self, x: &DVector<f64>, tol: f64) -> Result<NeCheck, GameError> {
        let nn = self.profile_dim();
        if x.len() != nn {
            return Err(GameError::DimensionMismatch {
                expected: nn,
                got: x.len(),
            });
        }
        let mut residuals = DVector::zeros(self.n_agents);
        for i in 0..self.n_agents {
            residuals[i] = self.subdiff_profile(i, x).distance_to_zero();
        }
        let is_ne = residuals.iter().all(|&r| r <= tol);
        Ok(NeCheck { is_ne, residuals })
    }

    /// Sampled Lipschitz constant and monotonicity modulus of `F` on a box.
    ///
    /// Draws `samples` point pairs from a seeded stream, alternating between
    /// independent uniform pairs and pairs differing in a single coordinate
    /// (so axis-aligned curvature extremes are probed as well). Pairs whose
    /// segment crosses a kink hyperplane are skipped: across a kink the
    /// selection jumps by twice the kink weight, which says nothing about the
    /// Lipschitz behaviour of the underlying set-valued map, and would
    /// otherwise dominate the ratio. Estimates are monotone in `samples` for
    /// a fixed seed because the pair stream is a prefix.
    pub fn estimate_constants(
        &self,
        sample_box: &SampleBox,
        samples: usize,
        seed: u64,
    ) -> Result<RegularityConstants, GameError> {
        use rand::SeedableRng;
        sample_box.validate(self.profile_dim())?;
        let nn = self.profile_dim();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut theta = 0.0f64;
        let mut w = f64::INFINITY;
        for pair_idx in 0..samples {
            let x = sample_box.sample(&mut rng);
            let y = if pair_idx % 2 == 0 {
                sample_box.sample(&mut rng)
            } else {
                let mut y = x.clone();
                let coord = rng.random_range(0..nn);
                let (l, h) = (sample_box.lo[coord], sample_box.hi[coord]);
                y[coord] = if h > l { rng.random_range(l..h) } else { l };
                y
            };
            if self.segment_crosses_kink(&x, &y) {
                continue;
            }
            let diff = &x - &y;
            let dist = diff.norm();
            if dist < 1e-12 {
                continue;
            }
            let df = self.pseudogradient(&x)? - self.pseudogradient(&y)?;
            theta = theta.max(df.norm() / dist);
            let quotient = diff.dot(&df) / (dist * dist);
            if quotient < 0.0 {
                return Err(GameError::MonotonicityViolated { quotient });
            }
            w = w.min(quotient);
        }
        if !w.is_finite() {
            return Err(GameError::BadBox);
        }
        Ok(RegularityConstants { theta, w })
    }

    /// True when the segment `[x, y]` crosses a kink hyperplane of any
    /// agent's cost.
    pub fn segment_crosses_kink(&self, x: &DVector<f64>, y: &DVector<f64>) -> bool {
        for i in 0..self.n_agents {
            for (comp, center, _) in self.kinks(i) {
                let idx = i * self.dim + comp;
                if sign(x[idx] - center) * sign(y[idx] - center) < 0.0 {
                    return true;
                }
            }
        }
        false
    }

    /// Randomized midpoint-convexity self-check of every cost in its own
    /// variable. Diagnostic: structural term costs are convex by
    /// construction, custom closures are the caller's responsibility.
    pub fn check_convexity(
        &self,
        sample_box: &SampleBox,
        samples: usize,
        seed: u64,
    ) -> Result<(), GameError> {
        use rand::SeedableRng;
        sample_box.validate(self.profile_dim())?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let profile = sample_box.sample(&mut rng);
            let pa = sample_box.sample(&mut rng);
            let pb = sample_box.sample(&mut rng);
            for i in 0..self.n_agents {
                let a_i = pa.rows(i * self.dim, self.dim).into_owned();
                let b_i = pb.rows(i * self.dim, self.dim).into_owned();
                let mid = (&a_i + &b_i) * 0.5;
                let mut prof = profile.clone();
                prof.rows_mut(i * self.dim, self.dim).copy_from(&a_i);
                let ja = self.cost_profile(i, &prof);
                prof.rows_mut(i * self.dim, self.dim).copy_from(&b_i);
                let jb = self.cost_profile(i, &prof);
                prof.rows_mut(i * self.dim, self.dim).copy_from(&mid);
                let jm = self.cost_profile(i, &prof);
                let violation = jm - 0.5 * (ja + jb);
                if violation > 1e-9 {
                    return Err(GameError::NonConvexDetected {
                        agent: i,
                        violation,
                    });
                }
            }
        }
        Ok(())
    }

    /// Build a full profile with slot `agent` set to `x_i` and the remaining
    /// slots filled from `others` in index order.
    pub fn assemble_profile(
        &self,
        agent: usize,
        x_i: &DVector<f64>,
        others: &DVector<f64>,
    ) -> DVector<f64> {
        assert!(agent < self.n_agents, "agent index out of range");
        assert_eq!(x_i.len(), self.dim, "own-strategy dimension mismatch");
        assert_eq!(
            others.len(),
            (self.n_agents - 1) * self.dim,
            "opponents dimension mismatch"
        );
        let mut profile = DVector::zeros(self.profile_dim());
        let mut src = 0;
        for j in 0..self.n_agents {
            if j == agent {
                profile.rows_mut(j * self.dim, self.dim).copy_from(x_i);
            } else {
                profile
                    .rows_mut(j * self.dim, self.dim)
                    .copy_from(&others.rows(src * self.dim, self.dim));
                src += 1;
            }
        }
        profile
    }

    /// Drop slot `agent` from a full profile, giving the `x_{-i}` stack.
    pub fn drop_own(&self, agent: usize, profile: &DVector<f64>) -> DVector<f64> {
        let mut others = DVector::zeros((self.n_agents - 1) * self.dim);
        let mut dst = 0;
        for j in 0..self.n_agents {
            if j != agent {
                others
                    .rows_mut(dst * self.dim, self.dim)
                    .copy_from(&profile.rows(j * self.dim, self.dim));
                dst += 1;
            }
        }
        others
    }
}

/// Verdict of [`GameSpec::verify_ne`].
#[derive(Debug, Clone, PartialEq)]
pub struct NeCheck {
    pub is_ne: bool,
    /// Per-agent distance from `0` to the agent's subdifferential.
    pub residuals: DVector<f64>,
}

/// Sign with the minimum-norm convention `sign(0) = 0`.
#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
