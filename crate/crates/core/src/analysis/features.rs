use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{least_squares, symmetric_eigen, Matrix};
use crate::mdp::{couple, policy_evaluation, FiniteMdp, Policy};
use crate::metrics::{mico_metric_from_dynamics, pi_bisimulation_metric, reduced_mico, FixedPointConfig, SYMMETRY_TOL};
use crate::rng;

/// Eigenvalues below this fraction of the largest are treated as zero.
const EIGEN_RELATIVE_TOL: f64 = 1e-12;
/// Transition probabilities above this count as graph edges.
const EDGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MdsEmbedding {
    /// `|X| × dim`, columns ordered by decreasing eigenvalue.
    pub features: Matrix,
    /// Requested columns left at zero because their eigenvalue was not
    /// positive.
    pub zero_columns: usize,
    /// How many eigenvalues of the centered Gram matrix are negative, i.e.
    /// how far the input is from Euclidean.
    pub negative_eigenvalues: usize,
}

/// Classical multidimensional scaling of a symmetric distance matrix.
pub fn embed_from_distances(d: &Matrix, dim: usize) -> Result<MdsEmbedding> {
    let n = d.rows();
    if !d.is_square() {
        return Err(Error::InvalidDistance(format!(
            "{}x{} table is not square",
            n,
            d.cols()
        )));
    }
    if dim == 0 || dim > n {
        return Err(invalid(format!("dim = {dim} must be in 1..={n}")));
    }
    let asym = d.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::InvalidDistance(format!("table is asymmetric by {asym}")));
    }
    // B = -1/2 J D² J with J the centering projector.
    let sq = d.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = Matrix::from_fn(n, n, |i, j| {
        let v = -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand);
        // Exact symmetry for the eigensolver.
        let w = -0.5 * (sq[(j, i)] - row_means[j] - row_means[i] + grand);
        0.5 * (v + w)
    });
    let eig = symmetric_eigen(&b);
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
    let cutoff = EIGEN_RELATIVE_TOL * scale.max(f64::MIN_POSITIVE);
    let negative_eigenvalues = eig.values.iter().filter(|&&v| v < -cutoff).count();
    let mut features = Matrix::zeros(n, dim);
    let mut zero_columns = 0;
    for k in 0..dim {
        let idx = n - 1 - k;
        let lambda = eig.values[idx];
        if lambda <= cutoff {
            zero_columns += 1;
            continue;
        }
        let s = libm::sqrt(lambda);
        for i in 0..n {
            features[(i, k)] = s * eig.vectors[(i, idx)];
        }
    }
    Ok(MdsEmbedding {
        features,
        zero_columns,
        negative_eigenvalues,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PvfFeatures {
    /// `|X| × dim`, orthonormal columns by increasing eigenvalue.
    pub features: Matrix,
    pub eigenvalues: Vec<f64>,
    /// Connected components of the transition graph; more than one means
    /// the leading eigenvectors span several blocks.
    pub components: usize,
}

impl PvfFeatures {
    pub fn is_disconnected(&self) -> bool {
        self.components > 1
    }
}

fn count_components(w: &Matrix) -> usize {
    let n = w.rows();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && w[(u, v)] > 0.0 {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    components
}

/// Eigenvectors of the normalized Laplacian `I - D^{-1/2} W D^{-1/2}` of a
/// weighted undirected graph, smallest eigenvalues first. Isolated
/// vertices get a zero Laplacian row.
pub fn laplacian_eigenvectors(w: &Matrix, dim: usize) -> Result<PvfFeatures> {
    let n = w.rows();
    if dim == 0 || dim > n {
        return Err(invalid(format!("dim = {dim} must be in 1..={n}")));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = w.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / libm::sqrt(deg)
            } else {
                0.0
            }
        })
        .collect();
    let lap = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j && inv_sqrt[i] > 0.0 { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    let eig = symmetric_eigen(&lap);
    let features = Matrix::from_fn(n, dim, |i, k| eig.vectors[(i, k)]);
    Ok(PvfFeatures {
        features,
        eigenvalues: eig.values[..dim].to_vec(),
        components: count_components(w),
    })
}

/// Proto-value functions of the graph with an edge wherever
/// `P^π_x(y) > 0`, symmetrized as `(A + Aᵀ)/2`.
pub fn pvf_features(mdp: &FiniteMdp, policy: &Policy, dim: usize) -> Result<PvfFeatures> {
    let dynamics = couple(mdp, policy)?;
    let p = dynamics.kernel();
    let n = mdp.n_states();
    let adjacency = |i: usize, j: usize| if p[(i, j)] > EDGE_TOL { 1.0 } else { 0.0 };
    let w = Matrix::from_fn(n, n, |i, j| 0.5 * (adjacency(i, j) + adjacency(j, i)));
    laplacian_eigenvectors(&w, dim)
}

/// Standard-normal `n_states × dim` features.
pub fn random_features(n_states: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = rng::seeded(seed);
    Matrix::from_fn(n_states, dim, |_, _| StandardNormal.sample(&mut rng))
}

/// Mean absolute error of the least-squares fit (with intercept) of
/// `values` on the feature columns. Rank deficiency is resolved by the
/// minimum-norm solution.
pub fn feature_regression_error(features: &Matrix, values: &[f64]) -> Result<f64> {
    let n = features.rows();
    if values.len() != n {
        return Err(crate::error::shape(format!(
            "{n} feature rows for {} values",
            values.len()
        )));
    }
    let k = features.cols();
    let design = Matrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { features[(i, j - 1)] });
    let w = least_squares(&design, values);
    let predicted = design.mul_vec(&w);
    Ok(predicted
        .iter()
        .zip(values)
        .map(|(p, v)| libm::fabs(p - v))
        .sum::<f64>()
        / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    ReducedMico,
    PiBisim,
    Pvf,
    Random,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 4] = [
        FeatureSource::ReducedMico,
        FeatureSource::PiBisim,
        FeatureSource::Pvf,
        FeatureSource::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSource::ReducedMico => "reduced_mico",
            FeatureSource::PiBisim => "pi_bisim",
            FeatureSource::Pvf => "pvf",
            FeatureSource::Random => "random",
        }
    }
}

/// How `ΠU^π` is turned into the distance handed to MDS.
///
/// `ΠU^π(x, y)` equals a discounted sum of energy distances between the
/// reward distributions reached from `x` and from `y`, which is a squared
/// Hilbertian distance. Its square root is therefore exactly Euclidean
/// embeddable, while `ΠU^π` itself generally is not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedTransform {
    Identity,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturesConfig {
    pub dims: Vec<usize>,
    /// Random-feature repeats; deterministic sources run once.
    pub repeats: usize,
    pub seed: u64,
    pub mico: FixedPointConfig,
    pub pi_bisim: FixedPointConfig,
    pub value_tol: f64,
    pub reduced_transform: ReducedTransform,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            dims: vec![5, 10, 15, 20, 25],
            repeats: 10,
            seed: 0,
            mico: FixedPointConfig::new(1e-8),
            pi_bisim: FixedPointConfig::new(1e-6),
            value_tol: 1e-12,
            reduced_transform: ReducedTransform::Sqrt,
        }
    }
}

impl FeaturesConfig {
    fn validate(&self, n_states: usize) -> Result<usize> {
        if self.dims.is_empty() {
            return Err(invalid("dims must not be empty"));
        }
        if self.repeats == 0 {
            return Err(invalid("repeats must be at least 1"));
        }
        let max = *self.dims.iter().max().unwrap_or(&0);
        if self.dims.contains(&0) || max > n_states {
            return Err(invalid(format!("dims must lie in 1..={n_states}")));
        }
        Ok(max)
    }
}

/// Everything computed once per (MDP, policy): values and the three
/// deterministic feature matrices at the largest requested dimension.
#[derive(Clone, Debug)]
pub struct SourceDistances {
    pub values: Vec<f64>,
    pub reduced_mds: MdsEmbedding,
    pub pi_bisim_mds: MdsEmbedding,
    pub pvf: PvfFeatures,
    /// Off-diagonal `ΠU^π` entries raised to 0 before embedding.
    pub reduced_clamped: usize,
    pub reduced_min_entry: f64,
    pub converged: bool,
}

impl SourceDistances {
    pub fn compute(mdp: &FiniteMdp, policy: &Policy, config: &FeaturesConfig) -> Result<Self> {
        let max_dim = config.validate(mdp.n_states())?;
        let dynamics = couple(mdp, policy)?;
        let gamma = mdp.gamma();
        let values = policy_evaluation(&dynamics, gamma, config.value_tol)?.into_inner();
        let (u, mico_report) = mico_metric_from_dynamics(&dynamics, gamma, &config.mico)?;
        let reduced = reduced_mico(&u);
        let mut reduced_clamped = 0;
        let mut reduced_min_entry = f64::INFINITY;
        let n = mdp.n_states();
        let clamped = Matrix::from_fn(n, n, |x, y| {
            let v = reduced.get(x, y);
            if x != y {
                reduced_min_entry = reduced_min_entry.min(v);
                if v < 0.0 {
                    reduced_clamped += 1;
                }
            }
            let v = v.max(0.0);
            match config.reduced_transform {
                ReducedTransform::Identity => v,
                ReducedTransform::Sqrt => libm::sqrt(v),
            }
        });
        let (d, bisim_report) = pi_bisimulation_metric(mdp, policy, &config.pi_bisim)?;
        Ok(Self {
            values,
            reduced_mds: embed_from_distances(&clamped, max_dim)?,
            pi_bisim_mds: embed_from_distances(d.matrix(), max_dim)?,
            pvf: pvf_features(mdp, policy, max_dim)?,
            reduced_clamped,
            reduced_min_entry,
            converged: mico_report.converged && bisim_report.converged,
        })
    }

    fn deterministic(&self, source: FeatureSource) -> &Matrix {
        match source {
            FeatureSource::ReducedMico => &self.reduced_mds.features,
            FeatureSource::PiBisim => &self.pi_bisim_mds.features,
            FeatureSource::Pvf => &self.pvf.features,
            FeatureSource::Random => unreachable!("random features are drawn per repeat"),
        }
    }

    /// Regression error of one cell. `repeat` only matters for
    /// [`FeatureSource::Random`].
    pub fn cell_error(&self, source: FeatureSource, dim: usize, repeat: usize, seed: u64) -> Result<f64> {
        let n = self.values.len();
        let features = match source {
            FeatureSource::Random => random_features(n, dim, rng::stream_seed(seed, repeat as u64)),
            _ => leading_columns(self.deterministic(source), dim),
        };
        feature_regression_error(&features, &self.values)
    }
}

fn leading_columns(m: &Matrix, k: usize) -> Matrix {
    Matrix::from_fn(m.rows(), k, |i, j| m[(i, j)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionCurve {
    pub source: FeatureSource,
    pub mean_error: Vec<f64>,
    /// 95% normal-approximation half-width; 0 for single-run sources.
    pub half_width: Vec<f64>,
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n_states: usize,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub curves: Vec<RegressionCurve>,
    pub reduced_clamped: usize,
    pub reduced_min_entry: f64,
    pub pvf_components: usize,
    pub converged: bool,
}

impl RegressionReport {
    pub fn curve(&self, source: FeatureSource) -> Option<&RegressionCurve> {
        self.curves.iter().find(|c| c.source == source)
    }

    /// Builds the report from per-cell errors laid out as
    /// `errors[source][dim][repeat]`.
    pub fn from_cells(sources: &SourceDistances, config: &FeaturesConfig, errors: &[Vec<Vec<f64>>]) -> Self {
        let curves = FeatureSource::ALL
            .iter()
            .zip(errors)
            .map(|(&source, per_dim)| {
                let (mean_error, half_width) = per_dim.iter().map(|runs| mean_and_half_width(runs)).unzip();
                RegressionCurve {
                    source,
                    mean_error,
                    half_width,
                    repeats: per_dim.first().map_or(0, Vec::len),
                }
            })
            .collect();
        Self {
            n_states: sources.values.len(),
            dims: config.dims.clone(),
            seed: config.seed,
            curves,
            reduced_clamped: sources.reduced_clamped,
            reduced_min_entry: sources.reduced_min_entry,
            pvf_components: sources.pvf.components,
            converged: sources.converged,
        }
    }
}

fn mean_and_half_width(runs: &[f64]) -> (f64, f64) {
    let r = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / r;
    if runs.len() < 2 {
        return (mean, 0.0);
    }
    let var = runs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (r - 1.0);
    (mean, 1.96 * libm::sqrt(var / r))
}

/// Number of runs for `source` under `config`.
pub fn runs_for(source: FeatureSource, config: &FeaturesConfig) -> usize {
    if source == FeatureSource::Random {
        config.repeats
    } else {
        1
    }
}

/// Value-regression error curves for every feature source.
pub fn features_experiment(mdp: &FiniteMdp, policy: &Policy, config: &FeaturesConfig) -> Result<RegressionReport> {
    let sources = SourceDistances::compute(mdp, policy, config)?;
    let mut errors = Vec::with_capacity(FeatureSource::ALL.len());
    for source in FeatureSource::ALL {
        let mut per_dim = Vec::with_capacity(config.dims.len());
        for &dim in &config.dims {
            let runs = (0..runs_for(source, config))
                .map(|r| sources.cell_error(source, dim, r, config.seed))
                .collect::<Result<Vec<_>>>()?;
            per_dim.push(runs);
        }
        errors.push(per_dim);
    }
    Ok(RegressionReport::from_cells(&sources, config, &errors))
}
