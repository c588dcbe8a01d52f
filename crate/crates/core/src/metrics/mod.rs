//! Exact behavioral distances: bisimulation, π-bisimulation, MICo and its
//! reduced form, plus axiom diagnostics.

mod axioms;
mod bisim;
mod mico;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

pub use axioms::{check_diffuse_axioms, AxiomReport, PairViolation, TripleViolation};
pub use bisim::{
    bisim_operator_step, bisimulation_metric, pi_bisim_operator_step, pi_bisimulation_metric, KantorovichSweep,
};
pub use mico::{
    lk_distance, mico_metric, mico_metric_from_dynamics, mico_operator_step, mico_operator_step_pairwise, reduced_mico,
};

/// Symmetry tolerance for [`DistanceTable`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalMode {
    /// Pseudometric: every self-distance is exactly 0.
    ZeroDiagonal,
    /// Diffuse metric: self-distances may be positive.
    Diffuse,
}

impl DiagonalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagonalMode::ZeroDiagonal => "zero_diagonal",
            DiagonalMode::Diffuse => "diffuse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero_diagonal" => Some(DiagonalMode::ZeroDiagonal),
            "diffuse" => Some(DiagonalMode::Diffuse),
            _ => None,
        }
    }
}

/// Symmetric `|X|×|X|` distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceTable {
    d: Matrix,
    mode: DiagonalMode,
}

impl DistanceTable {
    /// Validates squareness, finiteness, symmetry within [`SYMMETRY_TOL`],
    /// non-negativity and, for [`DiagonalMode::ZeroDiagonal`], an exactly
    /// zero diagonal.
    pub fn new(d: Matrix, mode: DiagonalMode) -> Result<Self> {
        let table = Self::signed(d, mode)?;
        if let Some((i, j, v)) = table.most_negative() {
            return Err(Error::InvalidDistance(format!("d[{i}][{j}] = {v} is negative")));
        }
        Ok(table)
    }

    /// Like [`new`](Self::new) but admits negative entries, which the
    /// reduced MICo distance can produce.
    pub fn signed(d: Matrix, mode: DiagonalMode) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::InvalidDistance(format!(
                "{}x{} table is not square",
                d.rows(),
                d.cols()
            )));
        }
        if !d.all_finite() {
            return Err(Error::NonFinite("distance table entry".into()));
        }
        let asym = d.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidDistance(format!("table is asymmetric by {asym}")));
        }
        if mode == DiagonalMode::ZeroDiagonal {
            if let Some(x) = (0..d.rows()).find(|&x| d[(x, x)] != 0.0) {
                return Err(Error::InvalidDistance(format!(
                    "d[{x}][{x}] = {} in a zero-diagonal table",
                    d[(x, x)]
                )));
            }
        }
        Ok(Self { d, mode })
    }

    pub(crate) fn from_trusted(d: Matrix, mode: DiagonalMode) -> Self {
        debug_assert!(d.is_square());
        Self { d, mode }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_trusted(Matrix::zeros(n, n), DiagonalMode::ZeroDiagonal)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.d[(x, y)]
    }

    pub fn n(&self) -> usize {
        self.d.rows()
    }

    pub fn mode(&self) -> DiagonalMode {
        self.mode
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    pub fn into_matrix(self) -> Matrix {
        self.d
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.d.max_abs_diff(&other.d)
    }

    pub fn self_distances(&self) -> Vec<f64> {
        (0..self.n()).map(|x| self.d[(x, x)]).collect()
    }

    /// The most negative entry, if any.
    pub fn most_negative(&self) -> Option<(usize, usize, f64)> {
        let n = self.n();
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..n {
                let v = self.d[(i, j)];
                if v < 0.0 && worst.is_none_or(|(_, _, w)| v < w) {
                    worst = Some((i, j, v));
                }
            }
        }
        worst
    }
}

/// Stopping rule for the fixed-point solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Target sup-norm distance to the fixed point.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl FixedPointConfig {
    pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        Ok(())
    }

    /// Residual that certifies `epsilon` for a `γ`-contraction.
    pub fn threshold(&self, gamma: f64) -> f64 {
        crate::mdp::residual_threshold(self.epsilon, gamma)
    }
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self::new(1e-8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Sup-norm of the last update.
    pub final_residual: f64,
    pub threshold: f64,
    pub converged: bool,
}

/// Iterates `step` from `initial` until the residual drops to the
/// `γ`-scaled threshold or the iteration cap is reached.
pub(crate) fn iterate_to_fixed_point(
    initial: Matrix,
    gamma: f64,
    config: &FixedPointConfig,
    mut step: impl FnMut(&Matrix) -> Result<Matrix>,
) -> Result<(Matrix, FixedPointReport)> {
    config.validate()?;
    let threshold = config.threshold(gamma);
    let mut current = initial;
    let mut report = FixedPointReport {
        iterations: 0,
        final_residual: f64::INFINITY,
        threshold,
        converged: false,
    };
    while report.iterations < config.max_iterations {
        let next = step(&current)?;
        report.final_residual = next.max_abs_diff(&current);
        report.iterations += 1;
        current = next;
        if report.final_residual <= threshold {
            report.converged = true;
            break;
        }
    }
    Ok((current, report))
}
