use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{couple, policy_evaluation, FiniteMdp, Policy};
use crate::metrics::{
    mico_metric_from_dynamics, pi_bisimulation_metric, reduced_mico, DistanceTable, FixedPointConfig,
};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub n_policies: usize,
    pub seed: u64,
    pub mico: FixedPointConfig,
    pub pi_bisim: FixedPointConfig,
    /// Policy evaluation tolerance for large state spaces.
    pub value_tol: f64,
    /// π-bisimulation is by far the most expensive metric; it can be
    /// left out when only the MICo forms are of interest.
    pub include_pi_bisim: bool,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            n_policies: 100,
            seed: 0,
            mico: FixedPointConfig::new(1e-8),
            pi_bisim: FixedPointConfig::new(1e-6),
            value_tol: 1e-12,
            include_pi_bisim: true,
        }
    }
}

/// Running sum, extremes and violation count of signed gaps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapAccumulator {
    pub sum: f64,
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub negative: u64,
}

impl Default for GapAccumulator {
    fn default() -> Self {
        Self {
            sum: 0.0,
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            negative: 0,
        }
    }
}

impl GapAccumulator {
    pub fn push(&mut self, gap: f64) {
        self.sum += gap;
        self.count += 1;
        self.min = self.min.min(gap);
        self.max = self.max.max(gap);
        if gap < 0.0 {
            self.negative += 1;
        }
    }

    pub fn merge(&mut self, other: &GapAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.negative += other.negative;
    }

    /// Accumulates `d(x, y) - |V(x) - V(y)|` over all ordered pairs.
    pub fn from_table(d: &DistanceTable, values: &[f64]) -> Self {
        let mut acc = Self::default();
        for (x, vx) in values.iter().enumerate() {
            for (y, vy) in values.iter().enumerate() {
                acc.push(d.get(x, y) - libm::fabs(vx - vy));
            }
        }
        acc
    }

    pub fn stats(&self) -> GapStats {
        let n = self.count.max(1) as f64;
        GapStats {
            mean: self.sum / n,
            min: self.min,
            max: self.max,
            negative_fraction: self.negative as f64 / n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of (pair, policy) cells where the bound is violated.
    pub negative_fraction: f64,
}

/// Gaps for one policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyGap {
    pub mico: GapAccumulator,
    pub reduced_mico: GapAccumulator,
    pub pi_bisim: Option<GapAccumulator>,
    /// Smallest off-diagonal `ΠU^π` entry.
    pub reduced_min_entry: f64,
    pub converged: bool,
}

/// The `index`-th cell of [`value_bound_gap`]: draws its own policy from
/// the seed stream and computes every metric exactly.
pub fn policy_gap(mdp: &FiniteMdp, config: &GapConfig, index: usize) -> Result<PolicyGap> {
    let policy = Policy::sample_random(mdp, rng::stream_seed(config.seed, index as u64));
    gap_for_policy(mdp, &policy, config)
}

pub(crate) fn gap_for_policy(mdp: &FiniteMdp, policy: &Policy, config: &GapConfig) -> Result<PolicyGap> {
    let dynamics = couple(mdp, policy)?;
    let values = policy_evaluation(&dynamics, mdp.gamma(), config.value_tol)?;
    let (u, report) = mico_metric_from_dynamics(&dynamics, mdp.gamma(), &config.mico)?;
    let reduced = reduced_mico(&u);
    let n = mdp.n_states();
    let mut reduced_min_entry = f64::INFINITY;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                reduced_min_entry = reduced_min_entry.min(reduced.get(x, y));
            }
        }
    }
    let mut converged = report.converged;
    let pi_bisim = if config.include_pi_bisim {
        let (d, r) = pi_bisimulation_metric(mdp, policy, &config.pi_bisim)?;
        converged &= r.converged;
        Some(GapAccumulator::from_table(&d, &values))
    } else {
        None
    };
    Ok(PolicyGap {
        mico: GapAccumulator::from_table(&u, &values),
        reduced_mico: GapAccumulator::from_table(&reduced, &values),
        pi_bisim,
        reduced_min_entry,
        converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_policies: usize,
    pub seed: u64,
    pub mico: GapStats,
    pub reduced_mico: GapStats,
    pub pi_bisim: Option<GapStats>,
    pub reduced_min_entry: f64,
    pub all_converged: bool,
}

impl GapReport {
    /// Aggregates per-policy cells in the given order.
    pub fn from_cells(mdp: &FiniteMdp, config: &GapConfig, cells: &[PolicyGap]) -> Self {
        let mut mico = GapAccumulator::default();
        let mut reduced = GapAccumulator::default();
        let mut pi: Option<GapAccumulator> = None;
        let mut reduced_min_entry = f64::INFINITY;
        let mut all_converged = true;
        for cell in cells {
            mico.merge(&cell.mico);
            reduced.merge(&cell.reduced_mico);
            if let Some(p) = &cell.pi_bisim {
                pi.get_or_insert_with(GapAccumulator::default).merge(p);
            }
            reduced_min_entry = reduced_min_entry.min(cell.reduced_min_entry);
            all_converged &= cell.converged;
        }
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            n_policies: cells.len(),
            seed: config.seed,
            mico: mico.stats(),
            reduced_mico: reduced.stats(),
            pi_bisim: pi.map(|p| p.stats()),
            reduced_min_entry,
            all_converged,
        }
    }
}

/// Mean signed gap `d(x, y) - |V^π(x) - V^π(y)|` over all ordered pairs and
/// `n_policies` flat-Dirichlet policies, for `U^π`, `ΠU^π` and `d^π_∼`.
pub fn value_bound_gap(mdp: &FiniteMdp, config: &GapConfig) -> Result<GapReport> {
    if config.n_policies == 0 {
        return Err(invalid("n_policies must be at least 1"));
    }
    let cells = (0..config.n_policies)
        .map(|i| policy_gap(mdp, config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(GapReport::from_cells(mdp, config, &cells))
}
