//! Invariant checks on any artifact file.
//!
//! Structural problems (unreadable file, wrong JSON shape) are input
//! errors; broken invariants (a row that does not sum to one, an
//! asymmetric table) are reported as validation failures.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use mico_core::metrics::{check_diffuse_axioms, AxiomReport};
use mico_core::{DiagonalMode, Matrix};

use crate::error::{CliError, CliResult};
use crate::io::{self, EmbeddingDocument, MdpDocument, PolicyDocument, RawTable};

pub const ROW_TOL: f64 = 1e-12;
const MAX_LISTED: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Mdp,
    Policy,
    Table,
    Embedding,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub file: String,
    pub kind: ArtifactKind,
    pub passed: bool,
    /// Human-readable description of each broken invariant.
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axioms: Option<AxiomReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MdpSummary {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Largest `|Σ_x' P(x'|x,a) - 1|` over all rows.
    pub max_row_defect: f64,
    /// Rewards vary across actions somewhere, so sampled and fitted
    /// estimators substitute the policy-averaged reward.
    pub action_dependent_rewards: bool,
}

fn check_rows<'a>(rows: impl Iterator<Item = (String, &'a [f64])>, violations: &mut Vec<String>) -> f64 {
    let mut worst = 0.0f64;
    for (name, row) in rows {
        if let Some((i, v)) = row.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            violations.push(format!("{name}[{i}] = {v} is not a probability"));
        }
        let defect = (row.iter().sum::<f64>() - 1.0).abs();
        worst = worst.max(defect);
        if defect > ROW_TOL {
            violations.push(format!("{name} sums to {}", row.iter().sum::<f64>()));
        }
    }
    worst
}

fn validate_mdp(doc: &MdpDocument) -> (Vec<String>, MdpSummary) {
    let mut v = Vec::new();
    if !(0.0..1.0).contains(&doc.gamma) {
        v.push(format!("gamma = {} is outside [0, 1)", doc.gamma));
    }
    if doc.n_states == 0 || doc.n_actions == 0 {
        v.push("an MDP needs at least one state and one action".into());
    }
    if doc.transitions.len() != doc.n_states || doc.rewards.len() != doc.n_states {
        v.push(format!(
            "transitions/rewards have {}/{} rows but n_states = {}",
            doc.transitions.len(),
            doc.rewards.len(),
            doc.n_states
        ));
    }
    let mut shaped = Vec::new();
    for (x, rows) in doc.transitions.iter().enumerate() {
        if rows.len() != doc.n_actions {
            v.push(format!(
                "transitions[{x}] has {} actions, expected {}",
                rows.len(),
                doc.n_actions
            ));
        }
        for (a, row) in rows.iter().enumerate() {
            if row.len() != doc.n_states {
                v.push(format!(
                    "transitions[{x}][{a}] has {} entries, expected {}",
                    row.len(),
                    doc.n_states
                ));
            } else {
                shaped.push((format!("transitions[{x}][{a}]"), row.as_slice()));
            }
        }
    }
    let mut action_dependent = false;
    for (x, r) in doc.rewards.iter().enumerate() {
        if r.len() != doc.n_actions {
            v.push(format!(
                "rewards[{x}] has {} actions, expected {}",
                r.len(),
                doc.n_actions
            ));
        }
        if let Some((a, val)) = r.iter().enumerate().find(|(_, val)| !val.is_finite()) {
            v.push(format!("rewards[{x}][{a}] = {val} is not finite"));
        }
        action_dependent |= r.windows(2).any(|w| w[0] != w[1]);
    }
    let max_row_defect = check_rows(shaped.into_iter(), &mut v);
    let summary = MdpSummary {
        n_states: doc.n_states,
        n_actions: doc.n_actions,
        gamma: doc.gamma,
        max_row_defect,
        action_dependent_rewards: action_dependent,
    };
    (v, summary)
}

fn axiom_violations(report: &AxiomReport, require_zero_diagonal: bool) -> Vec<String> {
    let mut v = Vec::new();
    if let Some(p) = report.negative {
        v.push(format!("negative entry d[{}][{}] by {:e}", p.x, p.y, p.magnitude));
    }
    if let Some(p) = report.asymmetric {
        v.push(format!("symmetry violated at d[{}][{}] by {:e}", p.x, p.y, p.magnitude));
    }
    if let Some(t) = report.triangle {
        v.push(format!(
            "triangle inequality violated at ({}, {}, {}) by {:e}",
            t.x, t.y, t.z, t.magnitude
        ));
    }
    if require_zero_diagonal {
        if let Some(p) = report.nonzero_self_distance {
            v.push(format!(
                "self-distance d[{}][{}] = {:e} in a zero-diagonal table",
                p.x, p.y, p.magnitude
            ));
        }
    }
    v
}

fn validate_matrix(d: &Matrix, mode: DiagonalMode, tol: f64) -> CliResult<(Vec<String>, AxiomReport)> {
    let report = check_diffuse_axioms(d, tol)?;
    Ok((axiom_violations(&report, mode == DiagonalMode::ZeroDiagonal), report))
}

fn detect(path: &Path, text: &str) -> CliResult<(ArtifactKind, Option<Value>)> {
    if io::Format::from_path(path) == Some(io::Format::Csv) {
        return Ok((ArtifactKind::Table, None));
    }
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let has = |k: &str| value.get(k).is_some();
    let kind = if has("transitions") {
        ArtifactKind::Mdp
    } else if has("probs") {
        ArtifactKind::Policy
    } else if has("phi") {
        ArtifactKind::Embedding
    } else if has("mode") && has("d") {
        ArtifactKind::Table
    } else {
        return Err(CliError::input(format!(
            "{}: not a recognized artifact",
            path.display()
        )));
    };
    Ok((kind, Some(value)))
}

fn from_value<T: for<'de> serde::Deserialize<'de>>(value: Value, source: &str) -> CliResult<T> {
    serde_json::from_value(value).map_err(|e| CliError::input(format!("{source}: {e}")))
}

pub fn validate_file(path: &Path, tol: f64) -> CliResult<ValidationReport> {
    let text = io::read_text(path)?;
    let source = path.display().to_string();
    let (kind, value) = detect(path, &text)?;
    let mut report = ValidationReport {
        file: source.clone(),
        kind,
        passed: false,
        violations: Vec::new(),
        axioms: None,
        mdp: None,
    };
    match kind {
        ArtifactKind::Mdp => {
            let doc: MdpDocument = from_value(value.expect("json"), &source)?;
            let (v, summary) = validate_mdp(&doc);
            report.violations = v;
            report.mdp = Some(summary);
        }
        ArtifactKind::Policy => {
            let doc: PolicyDocument = from_value(value.expect("json"), &source)?;
            if doc.probs.len() != doc.n_states {
                report
                    .violations
                    .push(format!("probs has {} rows, expected {}", doc.probs.len(), doc.n_states));
            }
            for (x, row) in doc.probs.iter().enumerate() {
                if row.len() != doc.n_actions {
                    report.violations.push(format!(
                        "probs[{x}] has {} entries, expected {}",
                        row.len(),
                        doc.n_actions
                    ));
                }
            }
            check_rows(
                doc.probs
                    .iter()
                    .enumerate()
                    .map(|(x, r)| (format!("probs[{x}]"), r.as_slice())),
                &mut report.violations,
            );
        }
        ArtifactKind::Table => {
            let RawTable { mode, d } = match value {
                Some(_) => io::parse_table_json(&text, &source)?,
                None => io::parse_table_csv(&text, &source)?,
            };
            let (v, axioms) = validate_matrix(&d, mode, tol)?;
            report.violations = v;
            report.axioms = Some(axioms);
        }
        ArtifactKind::Embedding => {
            let doc: EmbeddingDocument = from_value(value.expect("json"), &source)?;
            match doc.to_table() {
                Ok(table) => {
                    let (v, axioms) = validate_matrix(&table.distance_matrix(), DiagonalMode::Diffuse, tol)?;
                    report.violations = v;
                    report.axioms = Some(axioms);
                }
                Err(e) => report.violations.push(e.to_string()),
            }
        }
    }
    let total = report.violations.len();
    if total > MAX_LISTED {
        report.violations.truncate(MAX_LISTED);
        report.violations.push(format!("... {} more", total - MAX_LISTED));
    }
    report.passed = total == 0;
    Ok(report)
}
