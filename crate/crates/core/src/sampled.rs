//! Online estimation of the MICo distance from sampled transition pairs.
//!
//! Each update moves one entry towards the sampled target
//! `|r - r̃| + γ U(x', y')`, a TD(0) step in the lifted pair MDP. Pairs are
//! drawn uniformly from `X²` with independent generative transitions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::mdp::{couple, FiniteMdp, Policy};
use crate::metrics::{mico_metric_from_dynamics, FixedPointConfig};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Constant,
    Polynomial,
}

/// Per-pair step size as a function of that pair's visit count `n`:
/// `c` (constant) or `c / (n + 1)^p` (polynomial).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: StepKind,
    pub c: f64,
    pub p: f64,
}

impl StepSchedule {
    /// Constant step `c ∈ [0, 1]`.
    pub fn constant(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid(format!("constant step {c} is outside [0, 1]")));
        }
        Ok(Self {
            kind: StepKind::Constant,
            c,
            p: 0.0,
        })
    }

    /// Robbins–Monro schedule; needs `c > 0` and `p ∈ (0.5, 1]`.
    pub fn polynomial(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid(format!("step scale {c} must be positive")));
        }
        if !(p > 0.5 && p <= 1.0) {
            return Err(invalid(format!("exponent {p} is outside (0.5, 1]")));
        }
        Ok(Self {
            kind: StepKind::Polynomial,
            c,
            p,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            StepKind::Constant => Self::constant(self.c).map(|_| ()),
            StepKind::Polynomial => Self::polynomial(self.c, self.p).map(|_| ()),
        }
    }

    #[inline]
    pub fn rate(&self, visits: u64) -> f64 {
        match self.kind {
            StepKind::Constant => self.c,
            StepKind::Polynomial => self.c / libm::pow(visits as f64 + 1.0, self.p),
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            kind: StepKind::Polynomial,
            c: 1.0,
            p: 0.7,
        }
    }
}

/// One observed step `(x, a, r, x')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    pub first: Transition,
    pub second: Transition,
}

/// Current estimate `U_t` with per-pair visit counts.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineEstimate {
    pub u: Matrix,
    pub visits: Vec<u64>,
    pub steps: u64,
}

impl OnlineEstimate {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: Matrix::zeros(n, n),
            visits: vec![0; n * n],
            steps: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.u.rows()
    }

    pub fn visits(&self, x: usize, y: usize) -> u64 {
        self.visits[x * self.n() + y]
    }

    /// Applies one TD step to `(x, y)` and its mirror `(y, x)`.
    pub fn update(&mut self, pair: &TransitionPair, schedule: &StepSchedule, gamma: f64) -> Result<()> {
        let n = self.n();
        let (x, y) = (pair.first.state, pair.second.state);
        let (xn, yn) = (pair.first.next, pair.second.next);
        if [x, y, xn, yn].iter().any(|&s| s >= n) {
            return Err(invalid(format!("transition pair {pair:?} indexes outside {n} states")));
        }
        let target = libm::fabs(pair.first.reward - pair.second.reward) + gamma * self.u[(xn, yn)];
        if !target.is_finite() {
            return Err(Error::NonFinite(format!("TD target {target}")));
        }
        let eps = schedule.rate(self.visits[x * n + y]);
        let value = (1.0 - eps) * self.u[(x, y)] + eps * target;
        self.u[(x, y)] = value;
        self.u[(y, x)] = value;
        self.visits[x * n + y] += 1;
        if x != y {
            self.visits[y * n + x] += 1;
        }
        self.steps += 1;
        Ok(())
    }
}

/// Free-function form of [`OnlineEstimate::update`].
pub fn td_mico_update(
    estimate: &mut OnlineEstimate,
    pair: &TransitionPair,
    schedule: &StepSchedule,
    gamma: f64,
) -> Result<()> {
    estimate.update(pair, schedule, gamma)
}

/// Inverse-CDF draw from `probs`; falls back to the last positive entry when
/// rounding leaves the uniform draw past the cumulative total.
pub(crate) fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `a ∼ π(·|x)`, `x' ∼ P^a_x`, `r = r^a_x`.
pub fn sample_transition(mdp: &FiniteMdp, policy: &Policy, x: usize, rng: &mut Rng) -> Transition {
    let action = sample_index(policy.row(x), rng);
    let next = sample_index(mdp.transition(x, action), rng);
    Transition {
        state: x,
        action,
        reward: mdp.reward(x, action),
        next,
    }
}

/// Draws `(x, y)` uniformly from `X²` and an independent transition from
/// each. When `policy_rewards` is given, its entries replace the sampled
/// rewards.
pub fn sample_pair(mdp: &FiniteMdp, policy: &Policy, rng: &mut Rng, policy_rewards: Option<&[f64]>) -> TransitionPair {
    let n = mdp.n_states();
    let x = rng.random_range(0..n);
    let y = rng.random_range(0..n);
    let mut first = sample_transition(mdp, policy, x, rng);
    let mut second = sample_transition(mdp, policy, y, rng);
    if let Some(r) = policy_rewards {
        first.reward = r[x];
        second.reward = r[y];
    }
    TransitionPair { first, second }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub schedule: StepSchedule,
    pub steps: u64,
    pub seed: u64,
    /// Probe interval for the error trace; 0 disables intermediate probes.
    pub probe_every: u64,
    /// Accuracy of the exact reference `U^π`.
    pub reference_epsilon: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            steps: 200_000,
            seed: 0,
            probe_every: 10_000,
            reference_epsilon: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub sup_error: f64,
    pub mean_error: f64,
}

#[derive(Clone, Debug)]
pub struct OnlineRun {
    pub estimate: OnlineEstimate,
    pub trace: Vec<TracePoint>,
    /// Set when rewards depend on the action and `r^π` was substituted.
    pub action_dependent_rewards: bool,
    pub reference: Matrix,
}

impl OnlineRun {
    pub fn final_sup_error(&self) -> f64 {
        self.estimate.u.max_abs_diff(&self.reference)
    }
}

fn probe(step: u64, u: &Matrix, reference: &Matrix) -> TracePoint {
    let n = u.as_slice().len().max(1) as f64;
    let mean = u
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| libm::fabs(a - b))
        .sum::<f64>()
        / n;
    TracePoint {
        step,
        sup_error: u.max_abs_diff(reference),
        mean_error: mean,
    }
}

/// Runs `config.steps` sampled updates from `U ≡ 0`, probing the sup and
/// mean error against the exact `U^π` every `probe_every` steps (and at step
/// 0 and the final step).
pub fn online_mico(mdp: &FiniteMdp, policy: &Policy, config: &OnlineConfig) -> Result<OnlineRun> {
    config.schedule.validate()?;
    let dynamics = couple(mdp, policy)?;
    let gamma = mdp.gamma();
    let (reference, _) = mico_metric_from_dynamics(&dynamics, gamma, &FixedPointConfig::new(config.reference_epsilon))?;
    let reference = reference.into_matrix();
    let action_dependent_rewards = !mdp.has_state_only_rewards();
    let policy_rewards = action_dependent_rewards.then(|| dynamics.rewards());

    let mut rng = rng::seeded(config.seed);
    let mut estimate = OnlineEstimate::zeros(mdp.n_states());
    let mut trace = vec![probe(0, &estimate.u, &reference)];
    for step in 1..=config.steps {
        let pair = sample_pair(mdp, policy, &mut rng, policy_rewards);
        estimate.update(&pair, &config.schedule, gamma)?;
        if (config.probe_every > 0 && step % config.probe_every == 0) || step == config.steps {
            trace.push(probe(step, &estimate.u, &reference));
        }
    }
    Ok(OnlineRun {
        estimate,
        trace,
        action_dependent_rewards,
        reference,
    })
}
