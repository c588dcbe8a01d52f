//! Fitting per-state embeddings whose parametrized distance
//! `U_ω(x, y) = (‖φ(x)‖² + ‖φ(y)‖²)/2 + β θ(φ(x), φ(y))` matches `U^π`.
//!
//! The table is tabular (one free vector per state) and trained by plain
//! gradient descent on the MICo loss with analytic gradients. Targets are
//! computed from a separate copy of the table that is synchronized every
//! `target_sync_every` steps and never differentiated.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::mdp::{couple, FiniteMdp, Policy};
use crate::metrics::{DiagonalMode, DistanceTable};
use crate::rng;
use crate::sampled::{sample_pair, TransitionPair};

/// Vectors shorter than this have no direction; their angle is taken as 0.
pub const MIN_NORM: f64 = 1e-12;
/// `|CS|` is clamped to `1 - COSINE_CLAMP` inside the angle gradient.
pub const COSINE_CLAMP: f64 = 1e-9;
/// Loss above which fitting is aborted.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[inline]
fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Cosine similarity, clamped to `[-1, 1]`; `None` if either vector is
/// shorter than [`MIN_NORM`].
fn cosine(u: &[f64], v: &[f64]) -> Option<(f64, f64, f64)> {
    let (nu, nv) = (norm(u), norm(v));
    if nu < MIN_NORM || nv < MIN_NORM {
        return None;
    }
    Some(((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0), nu, nv))
}

/// Angle in `[0, π]` computed as `atan2(√(1 - CS²), CS)`. Zero when the
/// vectors are identical or either is (numerically) zero.
pub fn angular_distance(u: &[f64], v: &[f64]) -> f64 {
    if u == v {
        return 0.0;
    }
    match cosine(u, v) {
        Some((cs, _, _)) => libm::atan2(libm::sqrt(1.0 - cs * cs), cs),
        None => 0.0,
    }
}

/// `∂θ/∂u` for `θ = angular_distance(u, v)`, accumulated into `out` scaled
/// by `scale`.
fn add_angle_gradient(u: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
    let Some((cs, nu, nv)) = cosine(u, v) else {
        return;
    };
    let clamped = cs.clamp(-1.0 + COSINE_CLAMP, 1.0 - COSINE_CLAMP);
    let dtheta_dcs = -1.0 / libm::sqrt(1.0 - clamped * clamped);
    for ((o, &ui), &vi) in out.iter_mut().zip(u).zip(v) {
        let dcs = vi / (nu * nv) - cs * ui / (nu * nu);
        *o += scale * dtheta_dcs * dcs;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    phi: Matrix,
    phi_target: Matrix,
    beta: f64,
}

impl EmbeddingTable {
    /// Table with the target synchronized to `phi`.
    pub fn new(phi: Matrix, beta: f64) -> Result<Self> {
        let target = phi.clone();
        Self::with_target(phi, target, beta)
    }

    pub fn with_target(phi: Matrix, phi_target: Matrix, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(invalid(format!("beta = {beta} must be positive")));
        }
        if (phi.rows(), phi.cols()) != (phi_target.rows(), phi_target.cols()) {
            return Err(shape("online and target tables differ in shape"));
        }
        if !phi.all_finite() || !phi_target.all_finite() {
            return Err(Error::NonFinite("embedding entry".into()));
        }
        Ok(Self { phi, phi_target, beta })
    }

    /// Gaussian initialization with standard deviation `scale`.
    pub fn random(n_states: usize, dim: usize, beta: f64, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let phi = Matrix::from_fn(n_states, dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        Self::new(phi, beta)
    }

    pub fn n_states(&self) -> usize {
        self.phi.rows()
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn phi_target(&self) -> &Matrix {
        &self.phi_target
    }

    pub fn sync_target(&mut self) {
        self.phi_target = self.phi.clone();
    }

    /// The full `U_ω` matrix from the online parameters.
    pub fn distance_matrix(&self) -> Matrix {
        let n = self.n_states();
        Matrix::from_fn(n, n, |x, y| param_distance(self, x, y, false))
    }
}

fn distance_between(a: &[f64], b: &[f64], beta: f64) -> f64 {
    0.5 * (dot(a, a) + dot(b, b)) + beta * angular_distance(a, b)
}

/// `U_ω(x, y)`; with `use_target_for_y` the `y` vector comes from the
/// target table.
pub fn param_distance(table: &EmbeddingTable, x: usize, y: usize, use_target_for_y: bool) -> f64 {
    let b = if use_target_for_y {
        table.phi_target.row(y)
    } else {
        table.phi.row(y)
    };
    distance_between(table.phi.row(x), b, table.beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `e²`
    Squared,
    /// `e²/2` for `|e| ≤ δ`, else `δ(|e| - δ/2)`.
    Huber { delta: f64 },
}

impl LossKind {
    fn value(self, e: f64) -> f64 {
        match self {
            LossKind::Squared => e * e,
            LossKind::Huber { delta } => {
                let a = libm::fabs(e);
                if a <= delta {
                    0.5 * e * e
                } else {
                    delta * (a - 0.5 * delta)
                }
            }
        }
    }

    fn derivative(self, e: f64) -> f64 {
        match self {
            LossKind::Squared => 2.0 * e,
            LossKind::Huber { delta } => e.clamp(-delta, delta),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            LossKind::Huber { delta } if !(delta > 0.0) => {
                Err(invalid(format!("Huber delta {delta} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

fn target_value(table: &EmbeddingTable, pair: &TransitionPair, gamma: f64) -> f64 {
    let a = table.phi_target.row(pair.first.next);
    let b = table.phi_target.row(pair.second.next);
    libm::fabs(pair.first.reward - pair.second.reward) + gamma * distance_between(a, b, table.beta)
}

fn residual(table: &EmbeddingTable, pair: &TransitionPair, gamma: f64) -> f64 {
    target_value(table, pair, gamma) - param_distance(table, pair.first.state, pair.second.state, false)
}

/// Mean loss of `target - U_ω(x, y)` over the batch; the target uses the
/// target table for both next states.
pub fn mico_loss(table: &EmbeddingTable, batch: &[TransitionPair], gamma: f64, loss: LossKind) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch.iter().map(|p| loss.value(residual(table, p, gamma))).sum::<f64>() / batch.len() as f64
}

/// Gradient of [`mico_loss`] with respect to the online table only.
pub fn grad_mico_loss(table: &EmbeddingTable, batch: &[TransitionPair], gamma: f64, loss: LossKind) -> Matrix {
    let mut grad = Matrix::zeros(table.n_states(), table.dim());
    if batch.is_empty() {
        return grad;
    }
    let scale = 1.0 / batch.len() as f64;
    let beta = table.beta;
    for pair in batch {
        let (x, y) = (pair.first.state, pair.second.state);
        // d loss / d U_ω = -ℓ'(e)
        let coeff = -loss.derivative(residual(table, pair, gamma)) * scale;
        if coeff == 0.0 {
            continue;
        }
        if x == y {
            // U_ω(x, x) = ‖φ(x)‖²
            let phi_x = table.phi.row(x).to_vec();
            for (g, p) in grad.row_mut(x).iter_mut().zip(&phi_x) {
                *g += coeff * 2.0 * p;
            }
            continue;
        }
        let phi_x = table.phi.row(x);
        let phi_y = table.phi.row(y);
        let mut gx: Vec<f64> = phi_x.to_vec();
        let mut gy: Vec<f64> = phi_y.to_vec();
        add_angle_gradient(phi_x, phi_y, beta, &mut gx);
        add_angle_gradient(phi_y, phi_x, beta, &mut gy);
        for (g, d) in grad.row_mut(x).iter_mut().zip(&gx) {
            *g += coeff * d;
        }
        for (g, d) in grad.row_mut(y).iter_mut().zip(&gy) {
            *g += coeff * d;
        }
    }
    grad
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub target_sync_every: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub max_steps: usize,
    pub beta: f64,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            target_sync_every: 100,
            batch_size: 128,
            loss: LossKind::Huber { delta: 1.0 },
            max_steps: 50_000,
            beta: 1.0,
            init_scale: 0.5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be positive"));
        }
        if self.target_sync_every == 0 || self.batch_size == 0 || self.max_steps == 0 {
            return Err(invalid("target_sync_every, batch_size and max_steps must be positive"));
        }
        if !(self.beta > 0.0) || !(self.init_scale > 0.0) {
            return Err(invalid("beta and init_scale must be positive"));
        }
        self.loss.validate()
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub table: EmbeddingTable,
    /// Batch loss at every step, before the update.
    pub loss_trace: Vec<f64>,
    /// Set when rewards depend on the action and `r^π` was substituted.
    pub action_dependent_rewards: bool,
}

/// Gradient descent on the MICo loss over batches of sampled pairs.
pub fn fit_embeddings(
    mdp: &FiniteMdp,
    policy: &Policy,
    dim: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<FitResult> {
    if dim < 2 {
        return Err(invalid(format!("embedding dimension {dim} must be at least 2")));
    }
    config.validate()?;
    let dynamics = couple(mdp, policy)?;
    let action_dependent_rewards = !mdp.has_state_only_rewards();
    let policy_rewards = action_dependent_rewards.then(|| dynamics.rewards());
    let gamma = mdp.gamma();
    let mut table = EmbeddingTable::random(
        mdp.n_states(),
        dim,
        config.beta,
        config.init_scale,
        rng::stream_seed(seed, 0),
    )?;
    let mut rng = rng::stream(seed, 1);
    let mut loss_trace = Vec::with_capacity(config.max_steps);
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 0..config.max_steps {
        batch.clear();
        batch.extend((0..config.batch_size).map(|_| sample_pair(mdp, policy, &mut rng, policy_rewards)));
        let loss = mico_loss(&table, &batch, gamma, config.loss);
        if !(loss <= DIVERGENCE_LOSS) {
            return Err(Error::Diverged { step, loss });
        }
        loss_trace.push(loss);
        let grad = grad_mico_loss(&table, &batch, gamma, config.loss);
        update(&mut table.phi, &grad, config.learning_rate);
        if (step + 1) % config.target_sync_every == 0 {
            table.sync_target();
        }
    }
    Ok(FitResult {
        table,
        loss_trace,
        action_dependent_rewards,
    })
}

fn update(phi: &mut Matrix, grad: &Matrix, lr: f64) {
    for x in 0..phi.rows() {
        for (p, g) in phi.row_mut(x).iter_mut().zip(grad.row(x)) {
            *p -= lr * g;
        }
    }
}

/// `β θ(φ(x), φ(y))` for every pair: the learned stand-in for `ΠU^π`.
pub fn extract_reduced(table: &EmbeddingTable) -> DistanceTable {
    let n = table.n_states();
    let mut out = Matrix::zeros(n, n);
    for x in 0..n {
        for y in x + 1..n {
            let v = table.beta * angular_distance(table.phi.row(x), table.phi.row(y));
            out[(x, y)] = v;
            out[(y, x)] = v;
        }
    }
    DistanceTable::from_trusted(out, DiagonalMode::ZeroDiagonal)
}
