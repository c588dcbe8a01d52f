//! File formats.
//!
//! * MDP: JSON `{n_states, n_actions, gamma, transitions, rewards}` with
//!   `transitions[x][a][x']` and `rewards[x][a]`.
//! * Policy: JSON `{n_states, n_actions, probs}` with `probs[x][a]`.
//! * Distance table: CSV with a `n=<int>,mode=<zero_diagonal|diffuse>`
//!   header followed by `n` rows, or JSON `{n, mode, d}`.
//! * Embedding: JSON `{m, beta, phi}`, `phi[x]` of length `m`.
//! * Traces: CSV `step,sup_error,mean_error` and `step,loss`.
//!
//! Every writer attaches a [`Provenance`] record: a `provenance` field in
//! JSON, a leading `# provenance: {...}` comment line in CSV. Readers skip
//! `#` lines. Floats are written in the shortest form that parses back to
//! the same bits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mico_core::embedding::EmbeddingTable;
use mico_core::rng::RNG_ALGORITHM;
use mico_core::sampled::TracePoint;
use mico_core::{DiagonalMode, DistanceTable, FiniteMdp, Matrix, Policy};

use crate::error::{CliError, CliResult};

/// Bumped whenever a file layout or report schema changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub tool: String,
    pub command: String,
    pub rng: String,
    /// Fully resolved parameters of the producing command.
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, config: impl Serialize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: format!("mico {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            rng: RNG_ALGORITHM.to_string(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# provenance: {}\n",
            serde_json::to_string(self).expect("provenance serializes")
        )
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn to_json_pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory values serialize");
    s.push('\n');
    s
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::input(format!("{source}: {e}")))
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

// ---------------------------------------------------------------- MDP

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl MdpDocument {
    pub fn from_mdp(mdp: &FiniteMdp, provenance: Option<Provenance>) -> Self {
        let (transitions, rewards) = mdp.to_nested();
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            transitions,
            rewards,
            provenance,
        }
    }

    /// Shape checks against the declared sizes, then the full invariant
    /// check of [`FiniteMdp`].
    pub fn to_mdp(&self) -> mico_core::Result<FiniteMdp> {
        use mico_core::Error::ShapeMismatch;
        if self.transitions.len() != self.n_states {
            return Err(ShapeMismatch(format!(
                "transitions has {} rows but n_states = {}",
                self.transitions.len(),
                self.n_states
            )));
        }
        if let Some(x) = self.transitions.iter().position(|r| r.len() != self.n_actions) {
            return Err(ShapeMismatch(format!(
                "transitions[{x}] has {} actions but n_actions = {}",
                self.transitions[x].len(),
                self.n_actions
            )));
        }
        FiniteMdp::from_nested(&self.transitions, &self.rewards, self.gamma)
    }
}

pub fn parse_mdp(text: &str, source: &str) -> CliResult<FiniteMdp> {
    let doc: MdpDocument = parse_json(text, source)?;
    doc.to_mdp().map_err(|e| CliError::input(format!("{source}: {e}")))
}

pub fn load_mdp(path: &Path) -> CliResult<FiniteMdp> {
    parse_mdp(&read_text(path)?, &path.display().to_string())
}

pub fn mdp_json(mdp: &FiniteMdp, provenance: Option<Provenance>) -> String {
    to_json_pretty(&MdpDocument::from_mdp(mdp, provenance))
}

// ---------------------------------------------------------------- policy

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl PolicyDocument {
    pub fn from_policy(policy: &Policy, provenance: Option<Provenance>) -> Self {
        Self {
            n_states: policy.n_states(),
            n_actions: policy.n_actions(),
            probs: policy.to_rows(),
            provenance,
        }
    }

    pub fn to_policy(&self) -> mico_core::Result<Policy> {
        if self.probs.len() != self.n_states {
            return Err(mico_core::Error::ShapeMismatch(format!(
                "probs has {} rows but n_states = {}",
                self.probs.len(),
                self.n_states
            )));
        }
        if let Some(x) = self.probs.iter().position(|r| r.len() != self.n_actions) {
            return Err(mico_core::Error::ShapeMismatch(format!(
                "probs[{x}] has {} entries but n_actions = {}",
                self.probs[x].len(),
                self.n_actions
            )));
        }
        Policy::from_rows(&self.probs)
    }
}

pub fn load_policy(path: &Path) -> CliResult<Policy> {
    let source = path.display().to_string();
    let doc: PolicyDocument = parse_json(&read_text(path)?, &source)?;
    doc.to_policy().map_err(|e| CliError::input(format!("{source}: {e}")))
}

pub fn policy_json(policy: &Policy, provenance: Option<Provenance>) -> String {
    to_json_pretty(&PolicyDocument::from_policy(policy, provenance))
}

// ---------------------------------------------------------------- tables

/// A parsed table before any metric validation, so that `validate` can
/// report on corrupted files instead of refusing them.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub mode: DiagonalMode,
    pub d: Matrix,
}

impl RawTable {
    /// Admits negative entries (reduced distances) but not asymmetry.
    pub fn into_table(self) -> mico_core::Result<DistanceTable> {
        DistanceTable::signed(self.d, self.mode)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDocument {
    pub n: usize,
    pub mode: DiagonalMode,
    pub d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// Writes any square matrix; callers pass [`DistanceTable`] contents or
/// raw estimates that need not satisfy the table invariants.
pub fn table_csv(d: &Matrix, mode: DiagonalMode, report: Option<&Value>, provenance: Option<&Provenance>) -> String {
    let mut out = String::new();
    if let Some(p) = provenance {
        out.push_str(&p.csv_comment());
    }
    if let Some(r) = report {
        out.push_str(&format!("# report: {r}\n"));
    }
    out.push_str(&format!("n={},mode={}\n", d.rows(), mode.as_str()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for x in 0..d.rows() {
        w.write_record(d.row(x).iter().map(|&v| fmt_f64(v)))
            .expect("writing to memory");
    }
    out.push_str(std::str::from_utf8(&w.into_inner().expect("writing to memory")).expect("ascii"));
    out
}

pub fn table_json(d: &Matrix, mode: DiagonalMode, report: Option<Value>, provenance: Option<Provenance>) -> String {
    to_json_pretty(&TableDocument {
        n: d.rows(),
        mode,
        d: d.to_rows(),
        report,
        provenance,
    })
}

pub fn write_table(
    path: &Path,
    d: &Matrix,
    mode: DiagonalMode,
    report: Option<Value>,
    provenance: Option<Provenance>,
) -> CliResult<()> {
    let text = match Format::from_path(path) {
        Some(Format::Json) => table_json(d, mode, report, provenance),
        _ => table_csv(d, mode, report.as_ref(), provenance.as_ref()),
    };
    write_text(path, &text)
}

pub fn parse_table_csv(text: &str, source: &str) -> CliResult<RawTable> {
    let err = |line: u64, msg: String| CliError::input(format!("{source}: line {line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| CliError::input(format!("{source}: empty table file")))?
        .map_err(|e| CliError::input(format!("{source}: {e}")))?;
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line());
    let hline = line_of(&header);
    let (n, mode) = parse_table_header(&header).map_err(|m| err(hline, m))?;
    let mut d = Matrix::zeros(n, n);
    let mut rows = 0;
    for record in records {
        let record = record.map_err(|e| CliError::input(format!("{source}: {e}")))?;
        let line = line_of(&record);
        if rows == n {
            return Err(err(line, format!("more than n = {n} rows")));
        }
        if record.len() != n {
            return Err(err(
                line,
                format!("row {rows} has {} entries, expected {n}", record.len()),
            ));
        }
        for (y, field) in record.iter().enumerate() {
            d[(rows, y)] = field
                .trim()
                .parse::<f64>()
                .map_err(|_| err(line, format!("d[{rows}][{y}] = {field:?} is not a number")))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(CliError::input(format!("{source}: {rows} rows, expected n = {n}")));
    }
    Ok(RawTable { mode, d })
}

fn parse_table_header(header: &csv::StringRecord) -> Result<(usize, DiagonalMode), String> {
    let mut n = None;
    let mut mode = None;
    for field in header.iter() {
        match field.trim().split_once('=') {
            Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|_| format!("bad table size {v:?}"))?),
            Some(("mode", v)) => mode = Some(DiagonalMode::parse(v).ok_or_else(|| format!("unknown mode {v:?}"))?),
            _ => {
                return Err(format!(
                    "unexpected header field {field:?}; expected n=<int>,mode=<mode>"
                ))
            }
        }
    }
    match (n, mode) {
        (Some(n), Some(mode)) => Ok((n, mode)),
        _ => Err("header must be n=<int>,mode=<zero_diagonal|diffuse>".into()),
    }
}

pub fn parse_table_json(text: &str, source: &str) -> CliResult<RawTable> {
    let doc: TableDocument = parse_json(text, source)?;
    if doc.d.len() != doc.n {
        return Err(CliError::input(format!(
            "{source}: d has {} rows but n = {}",
            doc.d.len(),
            doc.n
        )));
    }
    if let Some(x) = doc.d.iter().position(|r| r.len() != doc.n) {
        return Err(CliError::input(format!(
            "{source}: d[{x}] has {} entries but n = {}",
            doc.d[x].len(),
            doc.n
        )));
    }
    let d = Matrix::from_rows(&doc.d).map_err(|e| CliError::input(format!("{source}: {e}")))?;
    Ok(RawTable { mode: doc.mode, d })
}

pub fn load_raw_table(path: &Path) -> CliResult<RawTable> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    match Format::from_path(path) {
        Some(Format::Json) => parse_table_json(&text, &source),
        _ => parse_table_csv(&text, &source),
    }
}

pub fn load_table(path: &Path) -> CliResult<DistanceTable> {
    load_raw_table(path)?
        .into_table()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- embeddings

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingDocument {
    pub m: usize,
    pub beta: f64,
    pub phi: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl EmbeddingDocument {
    pub fn from_table(table: &EmbeddingTable, provenance: Option<Provenance>) -> Self {
        Self {
            m: table.dim(),
            beta: table.beta(),
            phi: table.phi().to_rows(),
            provenance,
        }
    }

    pub fn to_table(&self) -> mico_core::Result<EmbeddingTable> {
        if let Some(x) = self.phi.iter().position(|r| r.len() != self.m) {
            return Err(mico_core::Error::ShapeMismatch(format!(
                "phi[{x}] has {} entries but m = {}",
                self.phi[x].len(),
                self.m
            )));
        }
        EmbeddingTable::new(Matrix::from_rows(&self.phi)?, self.beta)
    }
}

pub fn load_embedding(path: &Path) -> CliResult<EmbeddingTable> {
    let source = path.display().to_string();
    let doc: EmbeddingDocument = parse_json(&read_text(path)?, &source)?;
    doc.to_table().map_err(|e| CliError::input(format!("{source}: {e}")))
}

pub fn embedding_json(table: &EmbeddingTable, provenance: Option<Provenance>) -> String {
    to_json_pretty(&EmbeddingDocument::from_table(table, provenance))
}

// ---------------------------------------------------------------- traces

pub fn online_trace_csv(trace: &[TracePoint], provenance: Option<&Provenance>) -> String {
    let mut out = provenance.map(Provenance::csv_comment).unwrap_or_default();
    out.push_str("step,sup_error,mean_error\n");
    for p in trace {
        out.push_str(&format!(
            "{},{},{}\n",
            p.step,
            fmt_f64(p.sup_error),
            fmt_f64(p.mean_error)
        ));
    }
    out
}

pub fn loss_trace_csv(losses: &[f64], provenance: Option<&Provenance>) -> String {
    let mut out = provenance.map(Provenance::csv_comment).unwrap_or_default();
    out.push_str("step,loss\n");
    for (step, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{},{}\n", step + 1, fmt_f64(*loss)));
    }
    out
}
