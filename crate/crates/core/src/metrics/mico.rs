use alloc::format;

use super::{iterate_to_fixed_point, DiagonalMode, DistanceTable, FixedPointConfig, FixedPointReport};
use crate::error::{shape, Error, Result};
use crate::kantorovich::check_probability;
use crate::linalg::{dot, Matrix};
use crate::mdp::{couple, CoupledDynamics, FiniteMdp, Policy};

fn check_operand(u: &Matrix, dynamics: &CoupledDynamics) -> Result<()> {
    let n = dynamics.n_states();
    if u.rows() != n || u.cols() != n {
        return Err(shape(format!("{}x{} matrix for {n} states", u.rows(), u.cols())));
    }
    if !u.all_finite() {
        return Err(Error::NonFinite("MICo operand".into()));
    }
    Ok(())
}

/// `(T^π_M U)(x, y) = |r^π_x - r^π_y| + γ (P^π_x)ᵀ U P^π_y`.
///
/// Evaluated as `W = P^π U` followed by `W (P^π)ᵀ` on the upper triangle,
/// mirrored, so the result is exactly symmetric for symmetric `U`.
pub fn mico_operator_step(u: &Matrix, dynamics: &CoupledDynamics, gamma: f64) -> Result<Matrix> {
    check_operand(u, dynamics)?;
    let n = dynamics.n_states();
    let p = dynamics.kernel();
    let r = dynamics.rewards();
    let w = p.matmul(u)?;
    let mut out = Matrix::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let value = libm::fabs(r[x] - r[y]) + gamma * dot(w.row(x), p.row(y));
            out[(x, y)] = value;
            out[(y, x)] = value;
        }
    }
    Ok(out)
}

/// The same operator evaluated pair by pair: each of the `|X|²` entries is
/// an explicit expectation over `|X|²` successor pairs. This is the
/// `O(|X|⁴)` sweep, used for cost measurements and as an independent route
/// to [`mico_operator_step`].
pub fn mico_operator_step_pairwise(u: &Matrix, dynamics: &CoupledDynamics, gamma: f64) -> Result<Matrix> {
    check_operand(u, dynamics)?;
    let n = dynamics.n_states();
    let r = dynamics.rewards();
    let mut out = Matrix::zeros(n, n);
    for x in 0..n {
        let px = dynamics.next_states(x);
        for y in 0..n {
            let py = dynamics.next_states(y);
            let mut expected = 0.0;
            for (xn, &pxn) in px.iter().enumerate() {
                let u_row = u.row(xn);
                let mut inner = 0.0;
                for (yn, &pyn) in py.iter().enumerate() {
                    inner += pyn * u_row[yn];
                }
                expected += pxn * inner;
            }
            out[(x, y)] = libm::fabs(r[x] - r[y]) + gamma * expected;
        }
    }
    Ok(out)
}

/// MICo distance `U^π`, iterated from `U ≡ 0`.
pub fn mico_metric(
    mdp: &FiniteMdp,
    policy: &Policy,
    config: &FixedPointConfig,
) -> Result<(DistanceTable, FixedPointReport)> {
    let dynamics = couple(mdp, policy)?;
    mico_metric_from_dynamics(&dynamics, mdp.gamma(), config)
}

pub fn mico_metric_from_dynamics(
    dynamics: &CoupledDynamics,
    gamma: f64,
    config: &FixedPointConfig,
) -> Result<(DistanceTable, FixedPointReport)> {
    let n = dynamics.n_states();
    let (u, report) = iterate_to_fixed_point(Matrix::zeros(n, n), gamma, config, |u| {
        mico_operator_step(u, dynamics, gamma)
    })?;
    Ok((DistanceTable::from_trusted(u, DiagonalMode::Diffuse), report))
}

/// Łukaszyk–Karmowski distance `E_{x∼μ, y∼ν}[base(x, y)] = μᵀ base ν`.
pub fn lk_distance(base: &Matrix, mu: &[f64], nu: &[f64]) -> Result<f64> {
    if base.rows() != mu.len() || base.cols() != nu.len() {
        return Err(shape(format!(
            "{}x{} base for distributions of size {} and {}",
            base.rows(),
            base.cols(),
            mu.len(),
            nu.len()
        )));
    }
    check_probability(mu, "mu")?;
    check_probability(nu, "nu")?;
    Ok(mu
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(i, &p)| p * dot(base.row(i), nu))
        .sum())
}

/// `ΠU(x, y) = U(x, y) - U(x, x)/2 - U(y, y)/2`, with an exactly zero
/// diagonal. Negative off-diagonal entries are kept.
pub fn reduced_mico(u: &DistanceTable) -> DistanceTable {
    let n = u.n();
    let diag = u.self_distances();
    let mut out = Matrix::zeros(n, n);
    for x in 0..n {
        for y in x + 1..n {
            let value = u.get(x, y) - 0.5 * diag[x] - 0.5 * diag[y];
            out[(x, y)] = value;
            out[(y, x)] = value;
        }
    }
    DistanceTable::from_trusted(out, DiagonalMode::ZeroDiagonal)
}
