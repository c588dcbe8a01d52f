//! Experiment configuration files and runners.
//!
//! A config file is TOML with the keys of [`ExperimentSettings`]. Every key
//! is optional; a key set in the file wins over the matching command-line
//! flag, which wins over the built-in default. Each experiment runs once
//! per entry of `seeds`.
//!
//! ```toml
//! experiment = "gap"
//! sizes = [10, 20, 50]
//! actions = [2, 4, 8]
//! seeds = [0]
//! n_policies = 100
//!
//! [tolerances]
//! mico = 1e-8
//! pi_bisim = 1e-6
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mico_core::analysis::{
    policy_gap, runs_for, violation_trial, BoundMetric, FeatureSource, FeaturesConfig, GapConfig, GapReport, GapStats,
    ReducedTransform, RegressionReport, SourceDistances, ViolationConfig, ViolationReport,
};
use mico_core::mdp::build_garnet;
use mico_core::FixedPointConfig;

use crate::bench::{complexity_benchmark, BenchmarkConfig, BenchmarkReport, Timing};
use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64, Provenance};
use crate::parallel::{self, map_cells};
use crate::sources::{MdpSource, PolicySource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Gap,
    Features,
    Benchmark,
    ViolationSearch,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Gap => "gap",
            ExperimentKind::Features => "features",
            ExperimentKind::Benchmark => "benchmark",
            ExperimentKind::ViolationSearch => "violation-search",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub mico: Option<f64>,
    pub pi_bisim: Option<f64>,
    pub bisim: Option<f64>,
    pub value: Option<f64>,
}

/// Raw settings, from a config file or from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub experiment: Option<ExperimentKind>,
    /// Garnet state counts (gap) or MICo benchmark sizes (benchmark).
    pub sizes: Option<Vec<usize>>,
    /// Garnet action counts crossed with `sizes` (gap).
    pub actions: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub dims: Option<Vec<usize>>,
    pub n_policies: Option<usize>,
    pub n_trials: Option<usize>,
    /// Random-feature repeats (features) or timing repeats (benchmark).
    pub repeats: Option<usize>,
    pub mdp: Option<MdpSource>,
    pub policy: Option<PolicySource>,
    pub include_pi_bisim: Option<bool>,
    pub reduced_transform: Option<ReducedTransform>,
    pub bisim_sizes: Option<Vec<usize>>,
    pub n_actions: Option<usize>,
    pub metric: Option<BoundMetric>,
    pub optimal_policy: Option<bool>,
    pub max_witnesses: Option<usize>,
    pub tolerances: Option<Tolerances>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl ExperimentSettings {
    pub fn parse_toml(text: &str, source: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::input(format!("{source}: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse_toml(&io::read_text(path)?, &path.display().to_string())
    }

    /// `top` wins wherever it sets a key.
    pub fn overlay(mut self, top: ExperimentSettings) -> Self {
        let base_tol = self.tolerances.unwrap_or_default();
        let tol = top.tolerances.map(|t| Tolerances {
            mico: t.mico.or(base_tol.mico),
            pi_bisim: t.pi_bisim.or(base_tol.pi_bisim),
            bisim: t.bisim.or(base_tol.bisim),
            value: t.value.or(base_tol.value),
        });
        overlay!(self, top; experiment, sizes, actions, seeds, dims, n_policies, n_trials, repeats, mdp, policy,
            include_pi_bisim, reduced_transform, bisim_sizes, n_actions, metric, optimal_policy, max_witnesses);
        if tol.is_some() {
            self.tolerances = tol;
        }
        self
    }

    fn tolerances(&self) -> Tolerances {
        self.tolerances.unwrap_or_default()
    }

    fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![0])
    }
}

/// Fully resolved parameters of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Resolved {
    Gap {
        sizes: Vec<usize>,
        actions: Vec<usize>,
        seeds: Vec<u64>,
        gap: GapConfig,
    },
    Features {
        mdp: MdpSource,
        policy: PolicySource,
        seeds: Vec<u64>,
        features: FeaturesConfig,
    },
    Benchmark {
        seeds: Vec<u64>,
        benchmark: BenchmarkConfig,
    },
    ViolationSearch {
        seeds: Vec<u64>,
        search: ViolationConfig,
    },
}

fn fixed(eps: Option<f64>, default: FixedPointConfig) -> FixedPointConfig {
    eps.map_or(default, FixedPointConfig::new)
}

pub fn resolve(kind: ExperimentKind, s: &ExperimentSettings) -> CliResult<Resolved> {
    let tol = s.tolerances();
    let seeds = s.seeds();
    if seeds.is_empty() {
        return Err(CliError::input("seeds must not be empty"));
    }
    Ok(match kind {
        ExperimentKind::Gap => {
            let d = GapConfig::default();
            Resolved::Gap {
                sizes: s.sizes.clone().unwrap_or_else(|| vec![10, 20, 50]),
                actions: s.actions.clone().unwrap_or_else(|| vec![2, 4, 8]),
                seeds,
                gap: GapConfig {
                    n_policies: s.n_policies.unwrap_or(d.n_policies),
                    seed: 0,
                    mico: fixed(tol.mico, d.mico),
                    pi_bisim: fixed(tol.pi_bisim, d.pi_bisim),
                    value_tol: tol.value.unwrap_or(d.value_tol),
                    include_pi_bisim: s.include_pi_bisim.unwrap_or(d.include_pi_bisim),
                },
            }
        }
        ExperimentKind::Features => {
            let d = FeaturesConfig::default();
            Resolved::Features {
                mdp: s.mdp.clone().unwrap_or(MdpSource::FourRooms),
                policy: s.policy.clone().unwrap_or(PolicySource::Uniform),
                seeds,
                features: FeaturesConfig {
                    dims: s.dims.clone().unwrap_or(d.dims),
                    repeats: s.repeats.unwrap_or(d.repeats),
                    seed: 0,
                    mico: fixed(tol.mico, d.mico),
                    pi_bisim: fixed(tol.pi_bisim, d.pi_bisim),
                    value_tol: tol.value.unwrap_or(d.value_tol),
                    reduced_transform: s.reduced_transform.unwrap_or(d.reduced_transform),
                },
            }
        }
        ExperimentKind::Benchmark => {
            let d = BenchmarkConfig::default();
            Resolved::Benchmark {
                seeds,
                benchmark: BenchmarkConfig {
                    sizes: s.sizes.clone().unwrap_or(d.sizes),
                    bisim_sizes: s.bisim_sizes.clone().unwrap_or(d.bisim_sizes),
                    n_actions: s.n_actions.unwrap_or(d.n_actions),
                    seed: 0,
                    repeats: s.repeats.unwrap_or(d.repeats),
                },
            }
        }
        ExperimentKind::ViolationSearch => {
            let d = ViolationConfig::default();
            Resolved::ViolationSearch {
                seeds,
                search: ViolationConfig {
                    n_trials: s.n_trials.unwrap_or(d.n_trials),
                    seed: 0,
                    metric: s.metric.unwrap_or(d.metric),
                    optimal_policy: s.optimal_policy.unwrap_or(d.optimal_policy),
                    metric_config: fixed(tol.bisim, d.metric_config),
                    max_witnesses: s.max_witnesses.unwrap_or(d.max_witnesses),
                },
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub garnet_seed: u64,
    pub report: GapReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "results", rename_all = "kebab-case")]
pub enum Results {
    Gap(Vec<GapRow>),
    Features(Vec<RegressionReport>),
    Benchmark(Vec<BenchmarkReport>),
    ViolationSearch(Vec<ViolationReport>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub results: Results,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn all_converged(&self) -> bool {
        match &self.results {
            Results::Gap(rows) => rows.iter().all(|r| r.report.all_converged),
            Results::Features(reports) => reports.iter().all(|r| r.converged),
            Results::Benchmark(_) | Results::ViolationSearch(_) => true,
        }
    }
}

pub fn run_gap_instance(
    pool: &rayon::ThreadPool,
    n_states: usize,
    n_actions: usize,
    garnet_seed: u64,
    config: &GapConfig,
) -> CliResult<GapReport> {
    let mdp = build_garnet(n_states, n_actions, garnet_seed)?;
    let config = GapConfig {
        seed: garnet_seed,
        ..*config
    };
    if config.n_policies == 0 {
        return Err(CliError::input("n_policies must be at least 1"));
    }
    let cells = map_cells(pool, config.n_policies, |i| policy_gap(&mdp, &config, i))?;
    Ok(GapReport::from_cells(&mdp, &config, &cells))
}

pub fn run_features(
    pool: &rayon::ThreadPool,
    mdp: &MdpSource,
    policy: &PolicySource,
    config: &FeaturesConfig,
) -> CliResult<RegressionReport> {
    let mdp = mdp.build()?;
    let policy = policy.build(&mdp)?;
    let sources = SourceDistances::compute(&mdp, &policy, config)?;
    let mut cells = Vec::new();
    for (s, &source) in FeatureSource::ALL.iter().enumerate() {
        for (d, &dim) in config.dims.iter().enumerate() {
            for r in 0..runs_for(source, config) {
                cells.push((s, d, source, dim, r));
            }
        }
    }
    let values = map_cells(pool, cells.len(), |i| {
        let (_, _, source, dim, r) = cells[i];
        sources.cell_error(source, dim, r, config.seed)
    })?;
    let mut errors: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); config.dims.len()]; FeatureSource::ALL.len()];
    for (&(s, d, ..), e) in cells.iter().zip(values) {
        errors[s][d].push(e);
    }
    Ok(RegressionReport::from_cells(&sources, config, &errors))
}

pub fn run_violation_search(pool: &rayon::ThreadPool, config: &ViolationConfig) -> CliResult<ViolationReport> {
    let trials = map_cells(pool, config.n_trials, |t| violation_trial(config, t))?;
    Ok(ViolationReport::from_trials(config, trials))
}

pub fn run(resolved: &Resolved) -> CliResult<ExperimentReport> {
    let pool = parallel::pool()?;
    let results = match resolved {
        Resolved::Gap {
            sizes,
            actions,
            seeds,
            gap,
        } => {
            let mut rows = Vec::new();
            for &seed in seeds {
                for &n in sizes {
                    for &a in actions {
                        log::info!("gap: garnet {n}x{a} seed {seed}");
                        let report = run_gap_instance(&pool, n, a, seed, gap)?;
                        rows.push(GapRow {
                            garnet_seed: seed,
                            report,
                        });
                    }
                }
            }
            Results::Gap(rows)
        }
        Resolved::Features {
            mdp,
            policy,
            seeds,
            features,
        } => Results::Features(
            seeds
                .iter()
                .map(|&seed| {
                    run_features(
                        &pool,
                        mdp,
                        policy,
                        &FeaturesConfig {
                            seed,
                            ..features.clone()
                        },
                    )
                })
                .collect::<CliResult<_>>()?,
        ),
        Resolved::Benchmark { seeds, benchmark } => Results::Benchmark(
            seeds
                .iter()
                .map(|&seed| {
                    complexity_benchmark(&BenchmarkConfig {
                        seed,
                        ..benchmark.clone()
                    })
                })
                .collect::<CliResult<_>>()?,
        ),
        Resolved::ViolationSearch { seeds, search } => Results::ViolationSearch(
            seeds
                .iter()
                .map(|&seed| run_violation_search(&pool, &ViolationConfig { seed, ..*search }))
                .collect::<CliResult<_>>()?,
        ),
    };
    let command = match resolved {
        Resolved::Gap { .. } => "experiment gap",
        Resolved::Features { .. } => "experiment features",
        Resolved::Benchmark { .. } => "experiment benchmark",
        Resolved::ViolationSearch { .. } => "experiment violation-search",
    };
    Ok(ExperimentReport {
        schema_version: io::SCHEMA_VERSION,
        results,
        provenance: Provenance::new(command, resolved),
    })
}

fn push_stats(out: &mut String, prefix: &str, metric: &str, s: &GapStats) {
    let _ = writeln!(
        out,
        "{prefix},{metric},{},{},{},{}",
        fmt_f64(s.mean),
        fmt_f64(s.min),
        fmt_f64(s.max),
        fmt_f64(s.negative_fraction)
    );
}

fn push_timings(out: &mut String, seed: u64, operator: &str, timings: &[Timing]) {
    for t in timings {
        let _ = writeln!(out, "{seed},{operator},{},{}", t.n_states, fmt_f64(t.seconds));
    }
}

/// Plot-ready long-format CSV.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = format!(
        "# provenance: {}\n# schema_version: {}\n",
        serde_json::to_string(&report.provenance).expect("provenance serializes"),
        report.schema_version
    );
    match &report.results {
        Results::Gap(rows) => {
            out.push_str("garnet_seed,n_states,n_actions,n_policies,metric,mean,min,max,negative_fraction\n");
            for row in rows {
                let r = &row.report;
                let prefix = format!("{},{},{},{}", row.garnet_seed, r.n_states, r.n_actions, r.n_policies);
                push_stats(&mut out, &prefix, "mico", &r.mico);
                push_stats(&mut out, &prefix, "reduced_mico", &r.reduced_mico);
                if let Some(p) = &r.pi_bisim {
                    push_stats(&mut out, &prefix, "pi_bisim", p);
                }
            }
        }
        Results::Features(reports) => {
            out.push_str("seed,source,dim,mean_error,half_width,repeats\n");
            for r in reports {
                for c in &r.curves {
                    for (i, dim) in r.dims.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{},{},{dim},{},{},{}",
                            r.seed,
                            c.source.as_str(),
                            fmt_f64(c.mean_error[i]),
                            fmt_f64(c.half_width[i]),
                            c.repeats
                        );
                    }
                }
            }
        }
        Results::Benchmark(reports) => {
            for r in reports {
                let _ = writeln!(
                    out,
                    "# seed {}: mico_slope={} mico_factored_slope={} bisim_slope={}",
                    r.seed,
                    fmt_f64(r.mico_slope),
                    fmt_f64(r.mico_factored_slope),
                    fmt_f64(r.bisim_slope)
                );
            }
            out.push_str("seed,operator,n_states,seconds\n");
            for r in reports {
                push_timings(&mut out, r.seed, "mico", &r.mico);
                push_timings(&mut out, r.seed, "mico_factored", &r.mico_factored);
                push_timings(&mut out, r.seed, "bisim", &r.bisim);
            }
        }
        Results::ViolationSearch(reports) => {
            for r in reports {
                let _ = writeln!(
                    out,
                    "# seed {}: {} of {} trials violated the bound, max excess {}",
                    r.seed,
                    r.violations,
                    r.n_trials,
                    fmt_f64(r.max_excess)
                );
            }
            out.push_str("seed,trial,n_states,x,y,value_gap,distance,excess\n");
            for r in reports {
                for w in &r.witnesses {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        r.seed,
                        w.trial,
                        w.actions.len(),
                        w.x,
                        w.y,
                        fmt_f64(w.value_gap),
                        fmt_f64(w.distance),
                        fmt_f64(w.excess())
                    );
                }
            }
        }
    }
    out
}

pub fn report_json(report: &ExperimentReport) -> String {
    io::to_json_pretty(report)
}

/// Short human-readable digest for stdout.
pub fn summary(report: &ExperimentReport) -> Value {
    match &report.results {
        Results::Gap(rows) => Value::Array(
            rows.iter()
                .map(|row| {
                    let r = &row.report;
                    serde_json::json!({
                        "garnet": format!("{}x{}:{}", r.n_states, r.n_actions, row.garnet_seed),
                        "mico_mean_gap": r.mico.mean,
                        "reduced_mico_mean_gap": r.reduced_mico.mean,
                        "pi_bisim_mean_gap": r.pi_bisim.map(|p| p.mean),
                    })
                })
                .collect(),
        ),
        Results::Features(reports) => Value::Array(
            reports
                .iter()
                .map(|r| {
                    let curves: serde_json::Map<String, Value> = r
                        .curves
                        .iter()
                        .map(|c| (c.source.as_str().to_string(), serde_json::json!(c.mean_error)))
                        .collect();
                    serde_json::json!({ "seed": r.seed, "dims": r.dims, "mean_error": curves })
                })
                .collect(),
        ),
        Results::Benchmark(reports) => Value::Array(
            reports
                .iter()
                .map(
                    |r| serde_json::json!({ "seed": r.seed, "mico_slope": r.mico_slope, "bisim_slope": r.bisim_slope }),
                )
                .collect(),
        ),
        Results::ViolationSearch(reports) => Value::Array(
            reports
                .iter()
                .map(|r| serde_json::json!({ "seed": r.seed, "violations": r.violations, "trials": r.n_trials }))
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_overrides_flags() {
        let file = ExperimentSettings::parse_toml(
            "experiment = \"gap\"\nsizes = [5]\nn_policies = 3\n[tolerances]\nmico = 1e-6\n",
            "cfg.toml",
        )
        .unwrap();
        let flags = ExperimentSettings {
            n_policies: Some(7),
            actions: Some(vec![2]),
            tolerances: Some(Tolerances {
                value: Some(1e-10),
                ..Tolerances::default()
            }),
            ..ExperimentSettings::default()
        };
        let merged = flags.overlay(file);
        let Resolved::Gap {
            sizes, actions, gap, ..
        } = resolve(ExperimentKind::Gap, &merged).unwrap()
        else {
            panic!("wrong experiment");
        };
        assert_eq!(sizes, vec![5]);
        assert_eq!(actions, vec![2]);
        assert_eq!(gap.n_policies, 3);
        assert_eq!(gap.mico.epsilon, 1e-6);
        assert_eq!(gap.value_tol, 1e-10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentSettings::parse_toml("n_polices = 3\n", "cfg.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("n_polices"), "{err}");
    }

    #[test]
    fn small_experiments_run_and_serialize() {
        let settings = ExperimentSettings {
            sizes: Some(vec![4]),
            actions: Some(vec![2]),
            n_policies: Some(4),
            n_trials: Some(30),
            dims: Some(vec![2, 3]),
            repeats: Some(2),
            mdp: Some("garnet:6x2:1".parse().unwrap()),
            ..ExperimentSettings::default()
        };
        for kind in [
            ExperimentKind::Gap,
            ExperimentKind::Features,
            ExperimentKind::ViolationSearch,
        ] {
            let report = run(&resolve(kind, &settings).unwrap()).unwrap();
            let back: ExperimentReport = serde_json::from_str(&report_json(&report)).unwrap();
            assert_eq!(back.results, report.results);
            assert!(report_csv(&report).lines().count() > 2);
        }
    }

    #[test]
    fn gap_cells_match_the_sequential_harness() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let cfg = GapConfig {
            n_policies: 6,
            include_pi_bisim: false,
            ..GapConfig::default()
        };
        let par = run_gap_instance(&pool, 6, 2, 3, &cfg).unwrap();
        let seq = mico_core::analysis::value_bound_gap(&build_garnet(6, 2, 3).unwrap(), &GapConfig { seed: 3, ..cfg })
            .unwrap();
        assert_eq!(par, seq);
    }
}
