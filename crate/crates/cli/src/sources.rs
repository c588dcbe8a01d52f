//! String specifiers for MDPs and policies, shared by flags and config
//! files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use mico_core::mdp::{
    build_dayan_grid, build_four_rooms, build_garnet, build_garnet_state_rewards, build_mirrored_rooms, optimal_policy,
};
use mico_core::{FiniteMdp, Policy};

use crate::error::{CliError, CliResult};
use crate::io;

/// `four-rooms`, `mirrored-rooms`, `dayan-grid`, `garnet:<n>x<a>:<seed>`,
/// `garnet-sr:<n>x<a>:<seed>` (state-only rewards) or a path to an MDP file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MdpSource {
    FourRooms,
    MirroredRooms,
    DayanGrid,
    Garnet {
        n_states: usize,
        n_actions: usize,
        seed: u64,
        state_rewards: bool,
    },
    File(PathBuf),
}

impl MdpSource {
    pub fn build(&self) -> CliResult<FiniteMdp> {
        Ok(match self {
            MdpSource::FourRooms => build_four_rooms(),
            MdpSource::MirroredRooms => build_mirrored_rooms(),
            MdpSource::DayanGrid => build_dayan_grid(),
            MdpSource::Garnet {
                n_states,
                n_actions,
                seed,
                state_rewards,
            } => {
                if *state_rewards {
                    build_garnet_state_rewards(*n_states, *n_actions, *seed)?
                } else {
                    build_garnet(*n_states, *n_actions, *seed)?
                }
            }
            MdpSource::File(path) => io::load_mdp(path)?,
        })
    }
}

impl fmt::Display for MdpSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpSource::FourRooms => f.write_str("four-rooms"),
            MdpSource::MirroredRooms => f.write_str("mirrored-rooms"),
            MdpSource::DayanGrid => f.write_str("dayan-grid"),
            MdpSource::Garnet {
                n_states,
                n_actions,
                seed,
                state_rewards,
            } => {
                let tag = if *state_rewards { "garnet-sr" } else { "garnet" };
                write!(f, "{tag}:{n_states}x{n_actions}:{seed}")
            }
            MdpSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

impl FromStr for MdpSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "four-rooms" => return Ok(MdpSource::FourRooms),
            "mirrored-rooms" => return Ok(MdpSource::MirroredRooms),
            "dayan-grid" => return Ok(MdpSource::DayanGrid),
            _ => {}
        }
        let garnet = s
            .strip_prefix("garnet:")
            .map(|rest| (rest, false))
            .or_else(|| s.strip_prefix("garnet-sr:").map(|rest| (rest, true)));
        if let Some((rest, state_rewards)) = garnet {
            let bad = || format!("expected garnet:<states>x<actions>:<seed>, got {s:?}");
            let (size, seed) = rest.split_once(':').ok_or_else(bad)?;
            let (n, a) = size.split_once('x').ok_or_else(bad)?;
            return Ok(MdpSource::Garnet {
                n_states: n.parse().map_err(|_| bad())?,
                n_actions: a.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
                state_rewards,
            });
        }
        Ok(MdpSource::File(PathBuf::from(s)))
    }
}

impl From<MdpSource> for String {
    fn from(s: MdpSource) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for MdpSource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// `uniform`, `optimal` (greedy on `V*`), `random:<seed>` (flat
/// Dirichlet) or a path to a policy file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PolicySource {
    Uniform,
    Optimal,
    Random(u64),
    File(PathBuf),
}

impl PolicySource {
    pub fn build(&self, mdp: &FiniteMdp) -> CliResult<Policy> {
        let policy = match self {
            PolicySource::Uniform => Policy::uniform(mdp.n_states(), mdp.n_actions()),
            PolicySource::Optimal => optimal_policy(mdp, 1e-12)?,
            PolicySource::Random(seed) => Policy::sample_random(mdp, *seed),
            PolicySource::File(path) => io::load_policy(path)?,
        };
        if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
            return Err(CliError::input(format!(
                "policy {self} is {}x{} but the MDP has {} states and {} actions",
                policy.n_states(),
                policy.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(policy)
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySource::Uniform => f.write_str("uniform"),
            PolicySource::Optimal => f.write_str("optimal"),
            PolicySource::Random(seed) => write!(f, "random:{seed}"),
            PolicySource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

impl FromStr for PolicySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(PolicySource::Uniform),
            "optimal" => Ok(PolicySource::Optimal),
            _ => match s.strip_prefix("random:") {
                Some(seed) => seed
                    .parse()
                    .map(PolicySource::Random)
                    .map_err(|_| format!("expected random:<seed>, got {s:?}")),
                None => Ok(PolicySource::File(PathBuf::from(s))),
            },
        }
    }
}

impl From<PolicySource> for String {
    fn from(s: PolicySource) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for PolicySource {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}
