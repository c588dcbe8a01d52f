//! Experiment harness: value-bound gaps across metrics, distance-derived
//! state features evaluated by value regression, and a search for policies
//! whose value differences escape the bisimulation bound.
//!
//! Every experiment is split into independent cells (one policy, one trial,
//! one repeat) with their own seed streams, so callers can evaluate cells
//! in parallel and aggregate them in index order.

mod features;
mod gap;
mod violation;

pub use features::{
    embed_from_distances, feature_regression_error, features_experiment, laplacian_eigenvectors, pvf_features,
    random_features, runs_for, FeatureSource, FeaturesConfig, MdsEmbedding, PvfFeatures, ReducedTransform,
    RegressionCurve, RegressionReport, SourceDistances,
};
pub use gap::{policy_gap, value_bound_gap, GapAccumulator, GapConfig, GapReport, GapStats, PolicyGap};
pub use violation::{
    bound_violation_search, violation_trial, BoundMetric, ViolationConfig, ViolationReport, ViolationWitness,
};
