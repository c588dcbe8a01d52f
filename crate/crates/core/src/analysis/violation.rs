use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{build_garnet, couple, greedy_actions, optimal_values, policy_evaluation, FiniteMdp, Policy};
use crate::metrics::{bisimulation_metric, mico_metric_from_dynamics, FixedPointConfig};
use crate::rng;

/// Excess over the bound that counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-8;
const MAX_STATES: usize = 5;
const N_ACTIONS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMetric {
    Bisimulation,
    Mico,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub metric: BoundMetric,
    /// Evaluate a greedy optimal policy instead of a random deterministic one.
    pub optimal_policy: bool,
    pub metric_config: FixedPointConfig,
    /// Witnesses kept in the report.
    pub max_witnesses: usize,
}

impl Default for ViolationConfig {
    fn default() -> Self {
        Self {
            n_trials: 10_000,
            seed: 0,
            metric: BoundMetric::Bisimulation,
            optimal_policy: false,
            metric_config: FixedPointConfig::new(1e-10),
            max_witnesses: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationWitness {
    pub trial: usize,
    /// `[state][action][next_state]`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
    pub actions: Vec<usize>,
    pub x: usize,
    pub y: usize,
    pub value_gap: f64,
    pub distance: f64,
}

impl ViolationWitness {
    pub fn mdp(&self) -> Result<FiniteMdp> {
        FiniteMdp::from_nested(&self.transitions, &self.rewards, self.gamma)
    }

    pub fn excess(&self) -> f64 {
        self.value_gap - self.distance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub n_trials: usize,
    pub seed: u64,
    pub metric: BoundMetric,
    pub optimal_policy: bool,
    pub violations: usize,
    pub max_excess: f64,
    pub witnesses: Vec<ViolationWitness>,
}

impl ViolationReport {
    pub fn from_trials(config: &ViolationConfig, trials: Vec<Option<ViolationWitness>>) -> Self {
        let mut report = Self {
            n_trials: trials.len(),
            seed: config.seed,
            metric: config.metric,
            optimal_policy: config.optimal_policy,
            violations: 0,
            max_excess: 0.0,
            witnesses: Vec::new(),
        };
        for w in trials.into_iter().flatten() {
            report.violations += 1;
            report.max_excess = report.max_excess.max(w.excess());
            if report.witnesses.len() < config.max_witnesses {
                report.witnesses.push(w);
            }
        }
        report
    }
}

/// One cell of [`bound_violation_search`]: the worst pair of a random MDP
/// with at most five states, if it violates the bound.
pub fn violation_trial(config: &ViolationConfig, trial: usize) -> Result<Option<ViolationWitness>> {
    let mut rng = rng::stream(config.seed, trial as u64);
    let n = rng.random_range(2..=MAX_STATES);
    let mdp = build_garnet(n, N_ACTIONS, rng.random())?;
    let actions: Vec<usize> = if config.optimal_policy {
        greedy_actions(&mdp, &optimal_values(&mdp, 1e-13)?)
    } else {
        (0..n).map(|_| rng.random_range(0..N_ACTIONS)).collect()
    };
    let policy = Policy::deterministic(&actions, N_ACTIONS)?;
    let dynamics = couple(&mdp, &policy)?;
    let values = policy_evaluation(&dynamics, mdp.gamma(), 1e-13)?;
    let d = match config.metric {
        BoundMetric::Bisimulation => bisimulation_metric(&mdp, &config.metric_config)?.0,
        BoundMetric::Mico => mico_metric_from_dynamics(&dynamics, mdp.gamma(), &config.metric_config)?.0,
    };
    let mut worst: Option<ViolationWitness> = None;
    for x in 0..n {
        for y in x + 1..n {
            let value_gap = libm::fabs(values[x] - values[y]);
            let distance = d.get(x, y);
            let excess = value_gap - distance;
            if excess > VIOLATION_TOL && worst.as_ref().is_none_or(|w| excess > w.excess()) {
                let (transitions, rewards) = mdp.to_nested();
                worst = Some(ViolationWitness {
                    trial,
                    transitions,
                    rewards,
                    gamma: mdp.gamma(),
                    actions: actions.clone(),
                    x,
                    y,
                    value_gap,
                    distance,
                });
            }
        }
    }
    Ok(worst)
}

/// Searches for `(MDP, π)` with `|V^π(x) - V^π(y)| > d(x, y)`.
pub fn bound_violation_search(config: &ViolationConfig) -> Result<ViolationReport> {
    if config.n_trials == 0 {
        return Err(invalid("n_trials must be at least 1"));
    }
    let trials = (0..config.n_trials)
        .map(|t| violation_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ViolationReport::from_trials(config, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_policy_never_violates() {
        let cfg = ViolationConfig {
            n_trials: 200,
            optimal_policy: true,
            ..ViolationConfig::default()
        };
        assert_eq!(bound_violation_search(&cfg).unwrap().violations, 0);
    }

    #[test]
    fn mico_never_violates() {
        let cfg = ViolationConfig {
            n_trials: 200,
            metric: BoundMetric::Mico,
            ..ViolationConfig::default()
        };
        assert_eq!(bound_violation_search(&cfg).unwrap().violations, 0);
    }

    #[test]
    fn random_policies_find_a_witness() {
        let cfg = ViolationConfig {
            n_trials: 300,
            ..ViolationConfig::default()
        };
        let report = bound_violation_search(&cfg).unwrap();
        assert!(report.violations > 0);
        let w = &report.witnesses[0];
        assert!(w.value_gap > w.distance);
    }
}
