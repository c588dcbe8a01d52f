//! Finite MDPs, policies and the dynamics a policy induces.

mod garnet;
mod grid;
mod lift;
mod values;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::linalg::Matrix;
use crate::rng;

pub use garnet::{build_garnet, build_garnet_state_rewards, garnet_instance, GarnetInstance, GARNET_GAMMA};
pub use grid::{
    build_dayan_grid, build_four_rooms, build_mirrored_rooms, GridAction, GridWorld, DAYAN_GRID_LAYOUT,
    FOUR_ROOMS_LAYOUT, GRID_GAMMA, MIRRORED_ROOMS_LAYOUT,
};
pub use lift::{lift_mdp, lift_mdp_with_cap, pair_index, DEFAULT_LIFT_CAP};
pub(crate) use values::residual_threshold;
pub use values::{greedy_actions, optimal_policy, optimal_values, policy_evaluation, DIRECT_SOLVE_MAX_STATES};

/// Tolerance on the sum of every probability row.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Checks that `row` is a probability vector; `what` names it in the error.
pub(crate) fn check_distribution(row: &[f64], tol: f64, what: impl Fn() -> alloc::string::String) -> Result<()> {
    let mut sum = 0.0;
    for (i, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("{}[{i}] = {p}", what())));
        }
        if p < 0.0 {
            return Err(Error::NotAProbability(format!("{}[{i}] = {p} is negative", what())));
        }
        sum += p;
    }
    if libm::fabs(sum - 1.0) > tol {
        return Err(Error::NotAProbability(format!("{} sums to {sum}", what())));
    }
    Ok(())
}

/// Dense tabular MDP: `P^a_x` rows and `r^a_x` rewards with discount `γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    /// Flattened `[state][action][next_state]`.
    transitions: Vec<f64>,
    /// Flattened `[state][action]`.
    rewards: Vec<f64>,
    gamma: f64,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("an MDP needs at least one state and one action"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma = {gamma} is outside [0, 1)")));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(shape(format!(
                "transitions has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.len() != n_states * n_actions {
            return Err(shape(format!(
                "rewards has {} entries, expected {}",
                rewards.len(),
                n_states * n_actions
            )));
        }
        for x in 0..n_states {
            for a in 0..n_actions {
                let start = (x * n_actions + a) * n_states;
                check_distribution(&transitions[start..start + n_states], STOCHASTIC_TOL, || {
                    format!("transitions[{x}][{a}]")
                })?;
                let r = rewards[x * n_actions + a];
                if !r.is_finite() {
                    return Err(Error::NonFinite(format!("rewards[{x}][{a}] = {r}")));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    /// Builds from `transitions[x][a][x']` and `rewards[x][a]`.
    pub fn from_nested(transitions: &[Vec<Vec<f64>>], rewards: &[Vec<f64>], gamma: f64) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        if rewards.len() != n_states {
            return Err(shape(format!(
                "rewards has {} rows, expected {n_states}",
                rewards.len()
            )));
        }
        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        for (x, (rows, rs)) in transitions.iter().zip(rewards).enumerate() {
            if rows.len() != n_actions {
                return Err(shape(format!(
                    "transitions[{x}] has {} actions, expected {n_actions}",
                    rows.len()
                )));
            }
            if rs.len() != n_actions {
                return Err(shape(format!(
                    "rewards[{x}] has {} actions, expected {n_actions}",
                    rs.len()
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n_states {
                    return Err(shape(format!(
                        "transitions[{x}][{a}] has {} entries, expected {n_states}",
                        row.len()
                    )));
                }
                flat_p.extend_from_slice(row);
            }
            flat_r.extend_from_slice(rs);
        }
        Self::new(n_states, n_actions, flat_p, flat_r, gamma)
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `P^a_x` as a distribution over next states.
    #[inline]
    pub fn transition(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x * self.n_actions + a]
    }

    pub fn rewards_of(&self, x: usize) -> &[f64] {
        &self.rewards[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma = {gamma} is outside [0, 1)")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// True when `r^a_x` does not depend on `a` for every state.
    pub fn has_state_only_rewards(&self) -> bool {
        (0..self.n_states).all(|x| {
            let rs = self.rewards_of(x);
            rs.iter().all(|&r| r == rs[0])
        })
    }

    pub fn to_nested(&self) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let p = (0..self.n_states)
            .map(|x| (0..self.n_actions).map(|a| self.transition(x, a).to_vec()).collect())
            .collect();
        let r = (0..self.n_states).map(|x| self.rewards_of(x).to_vec()).collect();
        (p, r)
    }

    /// Largest `|Σ_x' P^a_x(x') - 1|` over all rows.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.n_states)
            .flat_map(|x| (0..self.n_actions).map(move |a| (x, a)))
            .map(|(x, a)| libm::fabs(self.transition(x, a).iter().sum::<f64>() - 1.0))
            .fold(0.0, f64::max)
    }
}

/// Row-stochastic `π(a|x)` table.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("a policy needs at least one state and one action"));
        }
        if probs.len() != n_states * n_actions {
            return Err(shape(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for x in 0..n_states {
            check_distribution(&probs[x * n_actions..(x + 1) * n_actions], STOCHASTIC_TOL, || {
                format!("policy[{x}]")
            })?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Self::new(m.rows(), m.cols(), m.as_slice().to_vec())
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    /// Puts all mass on `actions[x]` in state `x`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(invalid(format!("action {a} for state {x} is out of range")));
            }
            probs[x * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    /// Samples each row from the flat Dirichlet over actions (normalized
    /// unit exponentials), independently per state.
    pub fn sample_random(mdp: &FiniteMdp, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        let mut probs = Vec::with_capacity(n * k);
        for _ in 0..n {
            if k == 1 {
                probs.push(1.0);
                continue;
            }
            let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 {
                probs.extend(draws.iter().map(|d| d / total));
            } else {
                probs.extend(core::iter::repeat_n(1.0 / k as f64, k));
            }
        }
        Self {
            n_states: n,
            n_actions: k,
            probs,
        }
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|x| self.row(x).to_vec()).collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

/// Samples a policy from the flat Dirichlet; see [`Policy::sample_random`].
pub fn sample_random_policy(mdp: &FiniteMdp, seed: u64) -> Policy {
    Policy::sample_random(mdp, seed)
}

/// Policy-averaged rewards `r^π` and kernel `P^π`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledDynamics {
    rewards: Vec<f64>,
    kernel: Matrix,
}

impl CoupledDynamics {
    /// Builds directly from `r^π` and a row-stochastic `P^π`.
    pub fn new(rewards: Vec<f64>, kernel: Matrix) -> Result<Self> {
        if !kernel.is_square() || kernel.rows() != rewards.len() {
            return Err(shape(format!(
                "{} rewards with a {}x{} kernel",
                rewards.len(),
                kernel.rows(),
                kernel.cols()
            )));
        }
        for x in 0..kernel.rows() {
            check_distribution(kernel.row(x), STOCHASTIC_TOL, || format!("kernel[{x}]"))?;
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("policy reward {r}")));
        }
        Ok(Self { rewards, kernel })
    }

    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn kernel(&self) -> &Matrix {
        &self.kernel
    }

    /// `P^π_x`.
    pub fn next_states(&self, x: usize) -> &[f64] {
        self.kernel.row(x)
    }
}

/// `r^π_x = Σ_a π(a|x) r^a_x` and `P^π_x = Σ_a π(a|x) P^a_x`.
pub fn couple(mdp: &FiniteMdp, policy: &Policy) -> Result<CoupledDynamics> {
    if mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions() {
        return Err(shape(format!(
            "policy is {}x{} but the MDP has {} states and {} actions",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let n = mdp.n_states();
    let mut rewards = vec![0.0; n];
    let mut kernel = Matrix::zeros(n, n);
    for (x, reward) in rewards.iter_mut().enumerate() {
        let row = kernel.row_mut(x);
        for a in 0..mdp.n_actions() {
            let p = policy.prob(x, a);
            if p == 0.0 {
                continue;
            }
            *reward += p * mdp.reward(x, a);
            for (k, &t) in row.iter_mut().zip(mdp.transition(x, a)) {
                *k += p * t;
            }
        }
    }
    CoupledDynamics::new(rewards, kernel)
}

/// One value per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value {v}")));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ValueVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}
