use alloc::format;
use alloc::vec::Vec;

use super::{iterate_to_fixed_point, DiagonalMode, DistanceTable, FixedPointConfig, FixedPointReport};
use crate::error::{shape, Result};
use crate::kantorovich::TransportSolver;
use crate::linalg::Matrix;
use crate::mdp::{couple, CoupledDynamics, FiniteMdp, Policy};

struct Term {
    reward_gap: f64,
    solver: TransportSolver,
}

/// One application of a Kantorovich operator
/// `d ↦ max_k |r_k(x) - r_k(y)| + γ W_d(P_k(x), P_k(y))` over a fixed set of
/// `(reward, distribution)` branches per state.
///
/// Only pairs `x < y` are solved; the output is mirrored and its diagonal
/// is zero. Each pair keeps its transport bases across calls to
/// [`step`](Self::step), so successive iterates are solved warm.
pub struct KantorovichSweep {
    n: usize,
    gamma: f64,
    pairs: Vec<(usize, usize)>,
    terms: Vec<Vec<Term>>,
}

impl KantorovichSweep {
    /// Branches are the actions of `mdp`: this is the bisimulation operator.
    pub fn for_mdp(mdp: &FiniteMdp) -> Result<Self> {
        let n = mdp.n_states();
        Self::build(n, mdp.gamma(), mdp.n_actions(), |x, a| {
            (mdp.reward(x, a), mdp.transition(x, a))
        })
    }

    /// A single branch `(r^π, P^π)`: the π-bisimulation operator.
    pub fn for_dynamics(dynamics: &CoupledDynamics, gamma: f64) -> Result<Self> {
        let n = dynamics.n_states();
        Self::build(n, gamma, 1, |x, _| (dynamics.rewards()[x], dynamics.next_states(x)))
    }

    fn build<'a>(
        n: usize,
        gamma: f64,
        branches: usize,
        branch: impl Fn(usize, usize) -> (f64, &'a [f64]),
    ) -> Result<Self> {
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut terms = Vec::with_capacity(pairs.capacity());
        for x in 0..n {
            for y in x + 1..n {
                let mut pair_terms = Vec::with_capacity(branches);
                for k in 0..branches {
                    let (rx, px) = branch(x, k);
                    let (ry, py) = branch(y, k);
                    pair_terms.push(Term {
                        reward_gap: libm::fabs(rx - ry),
                        solver: TransportSolver::new(px, py)?,
                    });
                }
                pairs.push((x, y));
                terms.push(pair_terms);
            }
        }
        Ok(Self { n, gamma, pairs, terms })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    /// Applies the operator to `d` (a symmetric non-negative cost matrix).
    pub fn step(&mut self, d: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        let gamma = self.gamma;
        for (&(x, y), pair_terms) in self.pairs.iter().zip(self.terms.iter_mut()) {
            let value = pair_terms
                .iter_mut()
                .map(|t| t.reward_gap + gamma * t.solver.solve(d))
                .fold(0.0, f64::max);
            out[(x, y)] = value;
            out[(y, x)] = value;
        }
        out
    }
}

fn check_size(d: &DistanceTable, n: usize) -> Result<()> {
    if d.n() != n {
        return Err(shape(format!("{}-state table for a {n}-state MDP", d.n())));
    }
    Ok(())
}

/// `T_K(d)(x, y) = max_a |r^a_x - r^a_y| + γ W_d(P^a_x, P^a_y)`.
pub fn bisim_operator_step(d: &DistanceTable, mdp: &FiniteMdp) -> Result<DistanceTable> {
    check_size(d, mdp.n_states())?;
    let out = KantorovichSweep::for_mdp(mdp)?.step(d.matrix());
    Ok(DistanceTable::from_trusted(out, DiagonalMode::ZeroDiagonal))
}

/// The on-policy operator `|r^π_x - r^π_y| + γ W_d(P^π_x, P^π_y)`.
pub fn pi_bisim_operator_step(d: &DistanceTable, dynamics: &CoupledDynamics, gamma: f64) -> Result<DistanceTable> {
    check_size(d, dynamics.n_states())?;
    let out = KantorovichSweep::for_dynamics(dynamics, gamma)?.step(d.matrix());
    Ok(DistanceTable::from_trusted(out, DiagonalMode::ZeroDiagonal))
}

fn solve(
    mut sweep: KantorovichSweep,
    gamma: f64,
    config: &FixedPointConfig,
) -> Result<(DistanceTable, FixedPointReport)> {
    let n = sweep.n_states();
    let (d, report) = iterate_to_fixed_point(Matrix::zeros(n, n), gamma, config, |d| Ok(sweep.step(d)))?;
    Ok((DistanceTable::from_trusted(d, DiagonalMode::ZeroDiagonal), report))
}

/// Bisimulation metric `d∼`, iterated from `d ≡ 0`.
pub fn bisimulation_metric(mdp: &FiniteMdp, config: &FixedPointConfig) -> Result<(DistanceTable, FixedPointReport)> {
    solve(KantorovichSweep::for_mdp(mdp)?, mdp.gamma(), config)
}

/// π-bisimulation metric `d^π∼`, iterated from `d ≡ 0`.
pub fn pi_bisimulation_metric(
    mdp: &FiniteMdp,
    policy: &Policy,
    config: &FixedPointConfig,
) -> Result<(DistanceTable, FixedPointReport)> {
    let dynamics = couple(mdp, policy)?;
    solve(
        KantorovichSweep::for_dynamics(&dynamics, mdp.gamma())?,
        mdp.gamma(),
        config,
    )
}
