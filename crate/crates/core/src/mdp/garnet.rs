use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use super::FiniteMdp;
use crate::error::{invalid, Result};
use crate::rng;

/// Discount used for generated Garnet instances.
pub const GARNET_GAMMA: f64 = 0.9;

/// A Garnet MDP with the branching factor drawn for every `(x, a)`.
#[derive(Clone, Debug)]
pub struct GarnetInstance {
    pub mdp: FiniteMdp,
    /// `branching[x * n_actions + a]`
    pub branching: Vec<usize>,
}

/// Random Garnet MDP.
///
/// For each `(x, a)`: a branching factor `b` uniform on `1..=n_states`,
/// `b` distinct next states drawn without replacement, weights uniform on
/// `(0, 1]` normalized to a distribution, and a reward uniform on `[0, 1)`.
/// Discount is [`GARNET_GAMMA`].
pub fn garnet_instance(n_states: usize, n_actions: usize, seed: u64) -> Result<GarnetInstance> {
    if n_states == 0 || n_actions == 0 {
        return Err(invalid("Garnet needs n_states >= 1 and n_actions >= 1"));
    }
    let mut rng = rng::seeded(seed);
    let mut transitions = vec![0.0; n_states * n_actions * n_states];
    let mut rewards = Vec::with_capacity(n_states * n_actions);
    let mut branching = Vec::with_capacity(n_states * n_actions);
    for x in 0..n_states {
        for a in 0..n_actions {
            let b = rng.random_range(1..=n_states);
            let targets = index::sample(&mut rng, n_states, b);
            let weights: Vec<f64> = (0..b).map(|_| 1.0 - rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let row = &mut transitions[(x * n_actions + a) * n_states..][..n_states];
            for (t, w) in targets.iter().zip(&weights) {
                row[t] = w / total;
            }
            rewards.push(rng.random::<f64>());
            branching.push(b);
        }
    }
    Ok(GarnetInstance {
        mdp: FiniteMdp::new(n_states, n_actions, transitions, rewards, GARNET_GAMMA)?,
        branching,
    })
}

pub fn build_garnet(n_states: usize, n_actions: usize, seed: u64) -> Result<FiniteMdp> {
    garnet_instance(n_states, n_actions, seed).map(|g| g.mdp)
}

/// Garnet whose rewards depend only on the state: every `r^a_x` is replaced
/// by the reward drawn for action 0.
pub fn build_garnet_state_rewards(n_states: usize, n_actions: usize, seed: u64) -> Result<FiniteMdp> {
    let mdp = build_garnet(n_states, n_actions, seed)?;
    let (transitions, rewards) = mdp.to_nested();
    let rewards: Vec<Vec<f64>> = rewards.iter().map(|r| vec![r[0]; n_actions]).collect();
    FiniteMdp::from_nested(&transitions, &rewards, mdp.gamma())
}
