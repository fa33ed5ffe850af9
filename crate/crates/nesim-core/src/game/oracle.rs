//! Independent Nash-equilibrium oracles.
//!
//! Neither oracle touches the simulation engine: no consensus estimation and
//! no double-integrator dynamics. [`solve_ne`] runs a damped fixed-point
//! iteration on the pseudogradient (explicit step on the smooth terms, exact
//! proximal step on the kink terms, which reduces to `x - step * F(x)` when
//! the costs are smooth). [`best_response_ne`] cycles exact per-agent
//! minimizations to a fixed point and serves as the cross-check.

use alloc::vec::Vec;
use nalgebra::DVector;

use super::{GameError, GameSpec};

/// Damped fixed-point iteration on the pseudogradient.
///
/// Kink terms are handled by their exact proximal map instead of a raw
/// subgradient step: a subgradient step cannot settle onto a kink (the
/// selection stays bounded away from zero on either side), while the proximal
/// step lands on it exactly. For smooth costs the update is literally
/// `x <- x - step * F(x)`. `step` should lie in `(0, 2w / theta^2)` for the
/// smooth part's constants.
///
/// Terminates when [`GameSpec::verify_ne`] accepts the iterate at `tol`.
pub fn solve_ne(
    game: &GameSpec,
    x0: &DVector<f64>,
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, GameError> {
    let nn = game.profile_dim();
    if x0.len() != nn {
        return Err(GameError::DimensionMismatch {
            expected: nn,
            got: x0.len(),
        });
    }
    let mut x = x0.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let check = game.verify_ne(&x, tol)?;
        residual = check.residuals.amax();
        if check.is_ne {
            return Ok(x);
        }
        let mut next = DVector::zeros(nn);
        for i in 0..game.n_agents() {
            let smooth = game.smooth_gradient_profile(i, &x);
            let own = x.rows(i * game.dim(), game.dim());
            let forward = own - smooth * step;
            let proxed = prox_kinks(game, i, &forward, step);
            next.rows_mut(i * game.dim(), game.dim()).copy_from(&proxed);
        }
        x = next;
    }
    Err(GameError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Proximal map of agent `i`'s kink terms at `y` with step `t`:
/// argmin_z sum_k w_k |z_c - c_k| + ||z - y||^2 / (2 t), componentwise.
fn prox_kinks(game: &GameSpec, agent: usize, y: &DVector<f64>, t: f64) -> DVector<f64> {
    let kinks = game.kinks(agent);
    let mut z = y.clone();
    for comp in 0..game.dim() {
        let mut centers: Vec<(f64, f64)> = kinks
            .iter()
            .filter(|(c, _, _)| *c == comp)
            .map(|(_, center, weight)| (*center, *weight))
            .collect();
        if centers.is_empty() {
            continue;
        }
        centers.sort_by(|a, b| a.0.total_cmp(&b.0));
        z[comp] = prox_abs_sum(y[comp], t, &centers);
    }
    z
}

/// Exact 1-D prox of `sum_k w_k |z - c_k| + (z - y)^2 / (2 t)`.
///
/// The optimality condition `(z - y)/t + sum_k w_k sign(z - c_k) = 0` is
/// piecewise linear and increasing in `z`; scan the intervals between sorted
/// centers for the root, checking each center for the subdifferential case.
fn prox_abs_sum(y: f64, t: f64, centers: &[(f64, f64)]) -> f64 {
    let total: f64 = centers.iter().map(|(_, w)| w).sum();
    // Candidate in (-inf, c_0): all signs -1.
    let cand = y + t * total;
    if cand < centers[0].0 {
        return cand;
    }
    let mut signed = -total; // sum of w_k * sign at the current interval
    for (idx, (center, weight)) in centers.iter().enumerate() {
        // At z = center: z optimal iff 0 in (z - y)/t + signed + [0, 2 w_k].
        let at_center = (center - y) / t + signed;
        if at_center <= 0.0 && at_center + 2.0 * weight >= 0.0 {
            return *center;
        }
        signed += 2.0 * weight;
        let cand = y - t * signed;
        let upper = centers.get(idx + 1).map(|(c, _)| *c).unwrap_or(f64::INFINITY);
        if cand > *center && cand < upper {
            return cand;
        }
    }
    y - t * total
}

/// Per-agent best-response iteration, cycled to a fixed point.
///
/// Scalar strategies get an exact bisection on the agent's own
/// subdifferential (monotone by convexity). Higher-dimensional strategies
/// fall back to an inner forward-backward loop per agent. Sweeps stop when no
/// agent moves by more than `tol`; errs with `NoConvergence` otherwise.
pub fn best_response_ne(
    game: &GameSpec,
    x0: &DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<DVector<f64>, GameError> {
    let nn = game.profile_dim();
    if x0.len() != nn {
        return Err(GameError::DimensionMismatch {
            expected: nn,
            got: x0.len(),
        });
    }
    let mut x = x0.clone();
    let mut largest_move = f64::INFINITY;
    for _ in 0..max_sweeps {
        largest_move = 0.0f64;
        for i in 0..game.n_agents() {
            let old = x.rows(i * game.dim(), game.dim()).into_owned();
            let new = if game.dim() == 1 {
                DVector::from_element(1, bisect_scalar_response(game, i, &x))
            } else {
                inner_minimize(game, i, &x)
            };
            largest_move = largest_move.max((&new - &old).amax());
            x.rows_mut(i * game.dim(), game.dim()).copy_from(&new);
        }
        if largest_move <= tol {
            return Ok(x);
        }
    }
    Err(GameError::NoConvergence {
        iterations: max_sweeps,
        residual: largest_move,
    })
}

/// Exact scalar best response: bisection on the minimum-norm selection, which
/// is nondecreasing in the agent's own variable.
fn bisect_scalar_response(game: &GameSpec, agent: usize, profile: &DVector<f64>) -> f64 {
    let mut work = profile.clone();
    let idx = agent * game.dim();
    let sel_at = |work: &mut DVector<f64>, v: f64| {
        work[idx] = v;
        game.subdiff_profile(agent, work).selection[0]
    };
    // Expand a bracket around the current value until the selection changes sign.
    let x_now = profile[idx];
    let mut radius = 1.0f64.max(libm::fabs(x_now) * 0.5);
    let (mut lo, mut hi) = (x_now - radius, x_now + radius);
    for _ in 0..200 {
        if sel_at(&mut work, lo) <= 0.0 {
            break;
        }
        radius *= 2.0;
        lo = x_now - radius;
    }
    for _ in 0..200 {
        if sel_at(&mut work, hi) >= 0.0 {
            break;
        }
        radius *= 2.0;
        hi = x_now + radius;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = sel_at(&mut work, mid);
        if s > 0.0 {
            hi = mid;
        } else if s < 0.0 {
            lo = mid;
        } else {
            // Selection exactly zero: either smooth stationary point or a
            // kink bracketing zero.
            work[idx] = profile[idx];
            return mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + libm::fabs(mid)) {
            break;
        }
    }
    work[idx] = profile[idx];
    0.5 * (lo + hi)
}

/// Inner forward-backward minimization of one agent's cost in its own block.
fn inner_minimize(game: &GameSpec, agent: usize, profile: &DVector<f64>) -> DVector<f64> {
    let dim = game.dim();
    let mut work = profile.clone();
    // Crude but safe local curvature estimate for the inner step size.
    let mut curvature = 1e-12f64;
    let base = game.smooth_gradient_profile(agent, &work);
    for c in 0..dim {
        let idx = agent * dim + c;
        let orig = work[idx];
        work[idx] = orig + 1e-4;
        let bumped = game.smooth_gradient_profile(agent, &work);
        work[idx] = orig;
        curvature = curvature.max(libm::fabs(bumped[c] - base[c]) / 1e-4);
    }
    let step = 1.0 / curvature.max(1e-6);
    for _ in 0..10_000 {
        let smooth = game.smooth_gradient_profile(agent, &work);
        let own = work.rows(agent * dim, dim).into_owned();
        let forward = &own - smooth * step;
        let next = prox_kinks(game, agent, &forward, step);
        let moved = (&next - &own).amax();
        work.rows_mut(agent * dim, dim).copy_from(&next);
        if moved < 1e-14 {
            break;
        }
    }
    work.rows(agent * dim, dim).into_owned()
}
