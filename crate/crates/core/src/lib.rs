//! Behavioral distances on finite Markov decision processes.
//!
//! The crate computes the MICo diffuse metric (exactly, from sampled
//! transitions, and by fitting tabular embeddings), the Kantorovich-based
//! bisimulation and π-bisimulation metrics, and the tabular experiments built
//! on top of them. It is `no_std` and needs only `alloc`; file formats, the
//! command line, timing and thread pools live in the `mico-cli` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod embedding;
pub mod error;
pub mod kantorovich;
pub mod linalg;
pub mod mdp;
pub mod metrics;
pub mod rng;
pub mod sampled;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use mdp::{CoupledDynamics, FiniteMdp, Policy, ValueVector};
pub use metrics::{DiagonalMode, DistanceTable, FixedPointConfig, FixedPointReport};

/// Version of the on-disk formats and report schemas produced from this crate.
pub const FORMAT_VERSION: &str = "1.0";
