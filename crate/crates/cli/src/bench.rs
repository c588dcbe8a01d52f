//! Wall-clock cost of one operator sweep as a function of `|X|`.
//!
//! MICo is timed with the explicit pairwise sweep, which spends `O(|X|²)`
//! on each of the `|X|²` entries; the factored two-product form is timed
//! alongside for reference. Bisimulation is timed with one cold
//! `T_K` application on a random planar metric, so no transport problem
//! is degenerate. Each timing is the minimum over `repeats` runs.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use mico_core::mdp::{build_garnet, couple};
use mico_core::metrics::{bisim_operator_step, mico_operator_step, mico_operator_step_pairwise};
use mico_core::{rng, DiagonalMode, DistanceTable, Matrix, Policy};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    pub bisim_sizes: Vec<usize>,
    pub n_actions: usize,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            sizes: vec![16, 32, 64, 128],
            bisim_sizes: vec![16, 32, 64],
            n_actions: 2,
            seed: 0,
            repeats: 3,
        }
    }
}

impl BenchmarkConfig {
    fn validate(&self) -> CliResult<()> {
        for (name, sizes) in [("sizes", &self.sizes), ("bisim_sizes", &self.bisim_sizes)] {
            if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes.contains(&0) {
                return Err(CliError::input(format!(
                    "{name} must be positive and strictly ascending"
                )));
            }
        }
        if self.n_actions == 0 || self.repeats == 0 {
            return Err(CliError::input("n_actions and repeats must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub n_states: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_actions: usize,
    pub seed: u64,
    pub repeats: usize,
    pub mico: Vec<Timing>,
    pub mico_factored: Vec<Timing>,
    pub bisim: Vec<Timing>,
    pub mico_slope: f64,
    pub mico_factored_slope: f64,
    pub bisim_slope: f64,
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn loglog_slope(timings: &[Timing]) -> f64 {
    let pts: Vec<(f64, f64)> = timings
        .iter()
        .map(|t| ((t.n_states as f64).ln(), t.seconds.ln()))
        .collect();
    let k = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn min_seconds<T>(repeats: usize, mut f: impl FnMut() -> T) -> f64 {
    (0..repeats)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
        .max(1e-9)
}

fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let mut rng = rng::seeded(seed);
    let mut u = Matrix::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let v: f64 = rng.random();
            u[(x, y)] = v;
            u[(y, x)] = v;
        }
    }
    u
}

fn random_planar_metric(n: usize, seed: u64) -> DistanceTable {
    let mut rng = rng::seeded(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let d = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1)
        }
    });
    DistanceTable::new(d, DiagonalMode::ZeroDiagonal).expect("planar distances form a metric")
}

pub fn complexity_benchmark(config: &BenchmarkConfig) -> CliResult<BenchmarkReport> {
    config.validate()?;
    let mut mico = Vec::new();
    let mut mico_factored = Vec::new();
    for &n in &config.sizes {
        let mdp = build_garnet(n, config.n_actions, rng::stream_seed(config.seed, n as u64))?;
        let dynamics = couple(&mdp, &Policy::sample_random(&mdp, config.seed))?;
        let u = random_symmetric(n, rng::stream_seed(config.seed, 1 << 32 | n as u64));
        let gamma = mdp.gamma();
        let seconds = min_seconds(config.repeats, || mico_operator_step_pairwise(&u, &dynamics, gamma));
        mico.push(Timing { n_states: n, seconds });
        let seconds = min_seconds(config.repeats, || mico_operator_step(&u, &dynamics, gamma));
        mico_factored.push(Timing { n_states: n, seconds });
        log::info!("mico sweep |X|={n}: {seconds:.3e}s factored");
    }
    let mut bisim = Vec::new();
    for &n in &config.bisim_sizes {
        let mdp = build_garnet(n, config.n_actions, rng::stream_seed(config.seed, n as u64))?;
        let d = random_planar_metric(n, rng::stream_seed(config.seed, 2 << 32 | n as u64));
        let seconds = min_seconds(config.repeats, || bisim_operator_step(&d, &mdp));
        log::info!("bisim sweep |X|={n}: {seconds:.3e}s");
        bisim.push(Timing { n_states: n, seconds });
    }
    Ok(BenchmarkReport {
        n_actions: config.n_actions,
        seed: config.seed,
        repeats: config.repeats,
        mico_slope: loglog_slope(&mico),
        mico_factored_slope: loglog_slope(&mico_factored),
        bisim_slope: loglog_slope(&bisim),
        mico,
        mico_factored,
        bisim,
    })
}
