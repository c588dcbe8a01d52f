use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{CoupledDynamics, FiniteMdp, Policy, ValueVector};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, solve_linear, sup_distance, Matrix};

/// Above this many states policy evaluation iterates instead of solving.
pub const DIRECT_SOLVE_MAX_STATES: usize = 2000;

const MAX_SWEEPS: usize = 10_000_000;

/// Residual below which successive iterates are within `tol` of the limit of
/// a `γ`-contraction.
pub(crate) fn residual_threshold(tol: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / gamma
    }
}

fn check_args(gamma: f64, tol: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma = {gamma} is outside [0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance {tol} must be positive")));
    }
    Ok(())
}

/// Solves `V = r^π + γ P^π V`.
///
/// Up to [`DIRECT_SOLVE_MAX_STATES`] states this is an LU solve; above it,
/// fixed-point iteration stopped once successive iterates differ by at most
/// `tol (1 - γ) / γ`, so the returned values are within `tol` in sup-norm.
pub fn policy_evaluation(dynamics: &CoupledDynamics, gamma: f64, tol: f64) -> Result<ValueVector> {
    check_args(gamma, tol)?;
    let n = dynamics.n_states();
    let r = dynamics.rewards();
    let p = dynamics.kernel();
    let values = if n <= DIRECT_SOLVE_MAX_STATES {
        let system = Matrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - gamma * p[(i, j)]);
        solve_linear(&system, r).ok_or_else(|| Error::NonFinite("singular evaluation system".into()))?
    } else {
        let threshold = residual_threshold(tol, gamma);
        let mut v = vec![0.0; n];
        for _ in 0..MAX_SWEEPS {
            let next: Vec<f64> = (0..n).map(|x| r[x] + gamma * dot(p.row(x), &v)).collect();
            let residual = sup_distance(&next, &v);
            v = next;
            if residual <= threshold {
                break;
            }
        }
        v
    };
    ValueVector::new(values)
}

/// `V*` by value iteration with the same stopping rule as
/// [`policy_evaluation`]'s iterative branch.
pub fn optimal_values(mdp: &FiniteMdp, tol: f64) -> Result<ValueVector> {
    let gamma = mdp.gamma();
    check_args(gamma, tol)?;
    let threshold = residual_threshold(tol, gamma);
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let next: Vec<f64> = (0..n)
            .map(|x| {
                (0..mdp.n_actions())
                    .map(|a| mdp.reward(x, a) + gamma * dot(mdp.transition(x, a), &v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let residual = sup_distance(&next, &v);
        v = next;
        if residual <= threshold {
            break;
        }
    }
    ValueVector::new(v)
}

/// Greedy actions for `values`, ties broken toward the lowest action.
pub fn greedy_actions(mdp: &FiniteMdp, values: &[f64]) -> Vec<usize> {
    (0..mdp.n_states())
        .map(|x| {
            let q = |a: usize| mdp.reward(x, a) + mdp.gamma() * dot(mdp.transition(x, a), values);
            let mut best = 0;
            let mut best_q = q(0);
            for a in 1..mdp.n_actions() {
                let qa = q(a);
                if qa > best_q {
                    best = a;
                    best_q = qa;
                }
            }
            best
        })
        .collect()
}

/// Deterministic policy greedy with respect to `V*`.
pub fn optimal_policy(mdp: &FiniteMdp, tol: f64) -> Result<Policy> {
    let v = optimal_values(mdp, tol)?;
    Policy::deterministic(&greedy_actions(mdp, &v), mdp.n_actions())
}
