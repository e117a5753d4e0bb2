//! Command-line front end: problem files, datasets and result reports.
//!
//! A problem file is TOML:
//!
//! ```toml
//! tol = 1e-10            # optional; a number or "auto"
//!
//! [[vertices]]
//! label = "u"
//! dim = 2
//!
//! [[edges]]
//! source = "u"
//! target = "v"
//! matrix = { shape = [1, 2], data = [1, 1] }   # row-major
//! ```
//!
//! Datasets are CSV with one sample per row, columns ordered by vertex and
//! then by coordinate. A non-numeric first row is taken as a header.
//!
//! Exit codes: 0 success, 1 oracle mismatch in `check`, 2 parse or usage
//! error, 3 shape error, 4 trivial space of sections.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{run_bench, BenchRow, DEFAULT_DIM, DEFAULT_SIZES};
use crate::graph::{GraphError, Quiver};
use crate::learn::{delta_blowup, fit_edge_maps, LearnError, VertexData};
use crate::qpca::{covariance, ordinary_pca, quiver_pca, Dataset, PcaError};
use crate::sections::{
    dimension_lower_bound, naive_sections, sections, Provenance, Representation, SectionsError,
};
use crate::subspace::{principal_angle_distance, set_default_tol, SubspaceError, Tol};

/// Largest subspace distance accepted by `check`.
pub const CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    TrivialSections(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Shape(_) => 3,
            CliError::TrivialSections(_) => 4,
        }
    }
}

impl From<SectionsError> for CliError {
    fn from(e: SectionsError) -> Self {
        match e {
            SectionsError::ShapeMismatch(_)
            | SectionsError::NonFinite { .. }
            | SectionsError::Subspace(SubspaceError::ShapeMismatch(_))
            | SectionsError::Subspace(SubspaceError::DimensionMismatch { .. }) => {
                CliError::Shape(e.to_string())
            }
            SectionsError::Graph(GraphError::CyclicInput { .. }) => {
                CliError::Usage(format!("the quiver must be acyclic: {e}"))
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<PcaError> for CliError {
    fn from(e: PcaError) -> Self {
        match e {
            PcaError::ZeroSections => CliError::TrivialSections(trivial_message()),
            PcaError::WidthMismatch { .. } | PcaError::ShapeMismatch(_) => {
                CliError::Shape(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Sections(s) => s.into(),
            LearnError::Pca(p) => p.into(),
            LearnError::WidthMismatch { .. } | LearnError::ShapeMismatch(_) => {
                CliError::Shape(e.to_string())
            }
            LearnError::Parse { .. } => CliError::Parse(e.to_string()),
        }
    }
}

fn trivial_message() -> String {
    "the space of sections is trivial (d = 0); restricting to a subquiver with \
     --restrict may leave non-trivial sections"
        .to_string()
}

/// Tolerance as written in a problem file or on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TolSetting {
    Relative(f64),
    Named(String),
}

impl TolSetting {
    pub fn resolve(&self) -> Result<Tol, CliError> {
        match self {
            TolSetting::Relative(r) if r.is_finite() && *r >= 0.0 => Ok(Tol::Relative(*r)),
            TolSetting::Relative(r) => Err(CliError::Parse(format!("invalid tolerance {r}"))),
            TolSetting::Named(s) => parse_tol(s),
        }
    }
}

/// `auto` or a non-negative number.
pub fn parse_tol(s: &str) -> Result<Tol, CliError> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("auto") {
        return Ok(Tol::Auto);
    }
    match t.parse::<f64>() {
        Ok(r) if r.is_finite() && r >= 0.0 => Ok(Tol::Relative(r)),
        _ => Err(CliError::Parse(format!(
            "invalid tolerance '{s}': expected 'auto' or a non-negative number"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub label: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl MatrixSpec {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        MatrixSpec {
            shape: [r, c],
            data: (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        let [r, c] = self.shape;
        if self.data.len() != r * c {
            return Err(CliError::Shape(format!(
                "matrix of shape [{r}, {c}] needs {} entries, found {}",
                r * c,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(r, c, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<TolSetting>,
    pub vertices: Vec<VertexSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let p: ProblemFile = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files serialise")
    }

    fn validate(&self) -> Result<(), CliError> {
        let mut seen = HashMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if let Some(j) = seen.insert(v.label.as_str(), i) {
                return Err(CliError::Parse(format!(
                    "vertices[{i}]: label '{}' already used by vertices[{j}]",
                    v.label
                )));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            for (field, l) in [("source", &e.source), ("target", &e.target)] {
                if !seen.contains_key(l.as_str()) {
                    return Err(CliError::Parse(format!(
                        "edges[{i}].{field}: unknown vertex '{l}'"
                    )));
                }
            }
        }
        if let Some(t) = &self.tol {
            t.resolve()?;
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.vertices.iter().map(|v| v.label.clone()).collect()
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.label.as_str(), i))
            .collect()
    }

    pub fn quiver(&self) -> Quiver {
        let idx = self.index();
        let edges = self
            .edges
            .iter()
            .map(|e| (idx[e.source.as_str()], idx[e.target.as_str()]))
            .collect();
        Quiver::new(self.vertices.len(), edges).expect("labels were validated")
    }

    pub fn dims(&self) -> Vec<usize> {
        self.vertices.iter().map(|v| v.dim).collect()
    }

    pub fn has_all_matrices(&self) -> bool {
        self.edges.iter().all(|e| e.matrix.is_some())
    }

    pub fn representation(&self) -> Result<Representation, CliError> {
        let mut maps = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let m = e.matrix.as_ref().ok_or_else(|| {
                CliError::Usage(format!(
                    "edges[{i}] ({} -> {}) has no matrix; only `learn` accepts missing matrices",
                    e.source, e.target
                ))
            })?;
            maps.push(
                m.to_matrix()
                    .map_err(|err| CliError::Shape(format!("edges[{i}]: {err}")))?,
            );
        }
        Ok(Representation::new(self.quiver(), self.dims(), maps)?)
    }

    /// Same quiver with every edge matrix taken from `rep`.
    pub fn with_matrices(&self, rep: &Representation) -> ProblemFile {
        let mut out = self.clone();
        for (e, spec) in out.edges.iter_mut().enumerate() {
            spec.matrix = Some(MatrixSpec::from_matrix(rep.map(e)));
        }
        out
    }

    /// The full subproblem on the listed vertex labels, plus the kept vertex
    /// indices.
    pub fn restricted(&self, labels: &[String]) -> Result<(ProblemFile, Vec<usize>), CliError> {
        let idx = self.index();
        let mut keep = vec![false; self.vertices.len()];
        for l in labels {
            let i = idx
                .get(l.as_str())
                .ok_or_else(|| CliError::Usage(format!("--restrict: unknown vertex '{l}'")))?;
            keep[*i] = true;
        }
        let kept: Vec<usize> = (0..self.vertices.len()).filter(|&i| keep[i]).collect();
        let vertices = kept.iter().map(|&i| self.vertices[i].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| keep[idx[e.source.as_str()]] && keep[idx[e.target.as_str()]])
            .cloned()
            .collect();
        Ok((
            ProblemFile {
                tol: self.tol.clone(),
                vertices,
                edges,
            },
            kept,
        ))
    }
}

/// Read a CSV of samples; a non-numeric first row is skipped as a header.
pub fn load_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_csv(text: &str) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(format!("row {}: {e}", i + 1)))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::Parse(format!("row {}: {e}", i + 1))),
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(CliError::Shape(format!(
            "data row {} has {} columns, expected {width}",
            i + 1,
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), width, &flat))
}

/// Columns of `data` belonging to the kept vertices.
fn restrict_columns(data: &DMatrix<f64>, dims: &[usize], kept: &[usize]) -> DMatrix<f64> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        offsets.push(acc);
        acc += d;
    }
    let cols: Vec<usize> = kept
        .iter()
        .flat_map(|&v| offsets[v]..offsets[v] + dims[v])
        .collect();
    data.select_columns(cols.iter())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexBlock {
    pub label: String,
    /// Rows of `F` at this vertex.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub components: usize,
    pub removed_edges: usize,
    pub acyclic_edges: usize,
    pub acyclic_dims: Vec<usize>,
    pub minimal_vertices: usize,
    pub root_ambient_dim: usize,
    pub tree_edges: usize,
    pub root_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    /// `quiver` or `ordinary`.
    pub kind: String,
    pub components: usize,
    pub centred: bool,
    pub eigenvalues: Vec<f64>,
    /// Unit direction vectors in the total space.
    pub directions: Vec<Vec<f64>>,
    pub ties: Vec<bool>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeResidual {
    pub source: String,
    pub target: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub problem: String,
    pub pipeline_dim: usize,
    pub naive_dim: usize,
    /// `None` when the dimensions differ.
    pub distance: Option<f64>,
    pub compatibility_residual: f64,
    pub pipeline_seconds: f64,
    pub naive_seconds: f64,
    pub speedup: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub bound: i64,
    pub section_dim: Option<usize>,
}

/// Everything a command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub command: String,
    pub tolerance: Tol,
    pub tolerance_description: String,
    pub vertices: Vec<String>,
    pub total_dim: usize,
    pub section_dim: Option<usize>,
    pub blocks: Vec<VertexBlock>,
    pub stages: Option<StageSummary>,
    pub provenance: Option<Provenance>,
    pub pca: Option<PcaSummary>,
    pub residuals: Vec<EdgeResidual>,
    pub learned_problem: Option<String>,
    pub checks: Vec<CheckSummary>,
    pub bound: Option<BoundSummary>,
    pub bench: Vec<BenchRow>,
    pub warnings: Vec<String>,
    pub elapsed_seconds: f64,
}

impl ResultReport {
    fn new(command: &str, tol: Tol) -> Self {
        ResultReport {
            command: command.to_string(),
            tolerance: tol,
            tolerance_description: tol.describe(),
            vertices: Vec::new(),
            total_dim: 0,
            section_dim: None,
            blocks: Vec::new(),
            stages: None,
            provenance: None,
            pca: None,
            residuals: Vec::new(),
            learned_problem: None,
            checks: Vec::new(),
            bound: None,
            bench: Vec::new(),
            warnings: Vec::new(),
            elapsed_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// 1 when some oracle check failed, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().any(|c| !c.pass) {
            1
        } else {
            0
        }
    }

    /// Plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "command    {}", self.command);
        let _ = writeln!(w, "tolerance  {}", self.tolerance_description);
        if !self.vertices.is_empty() {
            let _ = writeln!(w, "vertices   {}", self.vertices.join(", "));
            let _ = writeln!(w, "total dim  {}", self.total_dim);
        }
        if let Some(d) = self.section_dim {
            let _ = writeln!(w, "sections   d = {d}");
        }
        if let Some(s) = &self.stages {
            let _ = writeln!(
                w,
                "stages     {} strongly connected component(s), {} terminal edge(s) removed, \
                 {} acyclic edge(s), root ambient {}, root dim {}",
                s.components, s.removed_edges, s.acyclic_edges, s.root_ambient_dim, s.root_dim
            );
        }
        for b in &self.blocks {
            let _ = writeln!(w, "  F[{}]", b.label);
            for r in &b.rows {
                let cells: Vec<String> = r.iter().map(|x| format!("{x:>11.6}")).collect();
                let _ = writeln!(w, "    {}", cells.join(" "));
            }
        }
        if let Some(p) = &self.pca {
            let _ = writeln!(
                w,
                "{} PCA    r = {}, centred = {}, objective = {:.9}",
                p.kind, p.components, p.centred, p.objective
            );
            for (i, (l, dir)) in p.eigenvalues.iter().zip(&p.directions).enumerate() {
                let cells: Vec<String> = dir.iter().map(|x| format!("{x:>9.5}")).collect();
                let tie = if p.ties[i] { "  (tied)" } else { "" };
                let _ = writeln!(w, "  {:>2}  λ = {l:<14.9}{tie}\n      [{}]", i + 1, cells.join(" "));
            }
        }
        if !self.residuals.is_empty() {
            let _ = writeln!(w, "edge residuals");
            for r in &self.residuals {
                let _ = writeln!(w, "  {} -> {}  {:.6e}", r.source, r.target, r.residual);
            }
        }
        if let Some(t) = &self.learned_problem {
            let _ = writeln!(w, "learned problem\n{t}");
        }
        for c in &self.checks {
            let dist = c
                .distance
                .map_or_else(|| "n/a".to_string(), |d| format!("{d:.3e}"));
            let _ = writeln!(
                w,
                "{}  {}  pipeline d = {}, naive d = {}, distance {dist}, \
                 compatibility {:.3e}, speedup {:.2}",
                if c.pass { "PASS" } else { "FAIL" },
                c.problem,
                c.pipeline_dim,
                c.naive_dim,
                c.compatibility_residual,
                c.speedup
            );
        }
        if let Some(b) = &self.bound {
            let _ = writeln!(w, "bound      {}", b.bound);
            if let Some(d) = b.section_dim {
                let _ = writeln!(w, "actual d   {d}");
            }
        }
        if !self.bench.is_empty() {
            let _ = writeln!(
                w,
                "{:>6} {:>6} {:>4} {:>14} {:>14} {:>10}",
                "n_V", "n_E", "d", "pipeline (s)", "naive (s)", "speedup"
            );
            for r in &self.bench {
                let _ = writeln!(
                    w,
                    "{:>6} {:>6} {:>4} {:>14.6e} {:>14.6e} {:>10.2}",
                    r.n_vertices,
                    r.n_edges,
                    r.section_dim,
                    r.pipeline_seconds,
                    r.naive_seconds,
                    r.speedup
                );
            }
        }
        for warning in &self.warnings {
            let _ = writeln!(w, "warning: {warning}");
        }
        let _ = writeln!(w, "elapsed    {:.6} s", self.elapsed_seconds);
        out
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qsec",
    version,
    about = "Spaces of sections of quiver representations and quiver-constrained PCA"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Relative rank tolerance, or `auto`.
    #[arg(long, global = true, env = "QSEC_TOL")]
    pub tol: Option<String>,
    /// Print the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Also write the output to this file (JSON report, or the learned
    /// problem for `learn`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the space of sections.
    Sections {
        problem: PathBuf,
        /// Restrict to the full subquiver on these vertex labels.
        #[arg(long, value_delimiter = ',')]
        restrict: Vec<String>,
    },
    /// Principal components inside the space of sections.
    Pca {
        problem: PathBuf,
        data: PathBuf,
        /// Number of components.
        #[arg(long, default_value_t = 1)]
        r: usize,
        /// Treat the data as already centred (checked).
        #[arg(long)]
        no_center: bool,
        #[arg(long, value_delimiter = ',')]
        restrict: Vec<String>,
        /// Ordinary PCA of the same data, ignoring the quiver.
        #[arg(long)]
        ordinary: bool,
    },
    /// Fit the edge maps from data by least squares.
    Learn {
        problem: PathBuf,
        data: PathBuf,
        /// Also run quiver PCA with this many components on the fitted
        /// representation.
        #[arg(long)]
        r: Option<usize>,
        /// Write the weighted blowup edge list here.
        #[arg(long)]
        blowup: Option<PathBuf>,
    },
    /// Compare the pipeline with the dense constraint-matrix kernel.
    Check {
        problems: Vec<PathBuf>,
        /// Time both methods on a generated family.
        #[arg(long)]
        bench: bool,
        #[arg(long, value_delimiter = ',')]
        restrict: Vec<String>,
    },
    /// Lower bound on the dimension of the space of sections (acyclic input).
    Bound {
        problem: PathBuf,
        /// Also compute the actual dimension.
        #[arg(long)]
        verify: bool,
        #[arg(long, value_delimiter = ',')]
        restrict: Vec<String>,
    },
}

struct Loaded {
    problem: ProblemFile,
    kept: Vec<usize>,
    full_dims: Vec<usize>,
}

fn load_problem(path: &Path, restrict: &[String]) -> Result<Loaded, CliError> {
    let full = ProblemFile::load(path)?;
    let full_dims = full.dims();
    if restrict.is_empty() {
        let kept = (0..full.vertices.len()).collect();
        return Ok(Loaded {
            problem: full,
            kept,
            full_dims,
        });
    }
    let (problem, kept) = full.restricted(restrict)?;
    Ok(Loaded {
        problem,
        kept,
        full_dims,
    })
}

fn effective_tol(cli: &Cli, problem: Option<&ProblemFile>) -> Result<Tol, CliError> {
    if let Some(t) = &cli.tol {
        return parse_tol(t);
    }
    match problem.and_then(|p| p.tol.as_ref()) {
        Some(t) => t.resolve(),
        None => Ok(Tol::Auto),
    }
}

fn describe_problem(report: &mut ResultReport, p: &ProblemFile) {
    report.vertices = p.labels();
    report.total_dim = p.dims().iter().sum();
}

fn load_dataset(
    path: &Path,
    loaded: &Loaded,
    rep: &Representation,
    no_center: bool,
) -> Result<Dataset, CliError> {
    let raw = load_csv(path)?;
    let full_total: usize = loaded.full_dims.iter().sum();
    if raw.ncols() != full_total {
        return Err(CliError::Shape(format!(
            "data has {} columns but the problem's total dimension is {full_total}",
            raw.ncols()
        )));
    }
    let cols = restrict_columns(&raw, &loaded.full_dims, &loaded.kept);
    let ds = Dataset::new(cols, rep.layout())?;
    if no_center {
        Ok(ds.assume_centred()?)
    } else {
        Ok(ds.centred())
    }
}

/// Run one parsed command line.
pub fn run(cli: &Cli) -> Result<ResultReport, CliError> {
    let start = Instant::now();
    let mut report = match &cli.command {
        Command::Sections { problem, restrict } => cmd_sections(cli, problem, restrict)?,
        Command::Pca {
            problem,
            data,
            r,
            no_center,
            restrict,
            ordinary,
        } => cmd_pca(cli, problem, data, *r, *no_center, restrict, *ordinary)?,
        Command::Learn {
            problem,
            data,
            r,
            blowup,
        } => cmd_learn(cli, problem, data, *r, blowup.as_deref())?,
        Command::Check {
            problems,
            bench,
            restrict,
        } => cmd_check(cli, problems, *bench, restrict)?,
        Command::Bound {
            problem,
            verify,
            restrict,
        } => cmd_bound(cli, problem, *verify, restrict)?,
    };
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    if let Some(out) = &cli.out {
        let body = match (&cli.command, &report.learned_problem) {
            (Command::Learn { .. }, Some(t)) => t.clone(),
            _ => report.to_json(),
        };
        std::fs::write(out, body).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    }
    Ok(report)
}

fn cmd_sections(cli: &Cli, path: &Path, restrict: &[String]) -> Result<ResultReport, CliError> {
    let loaded = load_problem(path, restrict)?;
    let tol = effective_tol(cli, Some(&loaded.problem))?;
    set_default_tol(tol);
    let rep = loaded.problem.representation()?;
    let (space, trace) = sections(&rep, tol)?;
    let mut report = ResultReport::new("sections", tol);
    describe_problem(&mut report, &loaded.problem);
    report.section_dim = Some(space.dim());
    report.blocks = loaded
        .problem
        .vertices
        .iter()
        .enumerate()
        .map(|(v, spec)| {
            let b = space.block(v);
            VertexBlock {
                label: spec.label.clone(),
                rows: b
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            }
        })
        .collect();
    let acyc = &trace.acyclic;
    report.stages = Some(StageSummary {
        components: acyc.components.len(),
        removed_edges: rep.quiver().n_edges() - acyc.quiver.n_edges(),
        acyclic_edges: acyc.quiver.n_edges(),
        acyclic_dims: acyc.reduced.space_dims(),
        minimal_vertices: trace.arboreal.augmented.minimal.len(),
        root_ambient_dim: trace.arboreal.root_layout.total(),
        tree_edges: trace.arboreal.tree.quiver().n_edges(),
        root_dim: trace.root_dim(),
    });
    report.provenance = Some(space.provenance().clone());
    if space.dim() == 0 {
        report.warnings.push(trivial_message());
    }
    Ok(report)
}

fn pca_summary(
    kind: &str,
    centred: bool,
    values: Vec<f64>,
    directions: &DMatrix<f64>,
    ties: Vec<bool>,
    objective: f64,
) -> PcaSummary {
    PcaSummary {
        kind: kind.to_string(),
        components: values.len(),
        centred,
        eigenvalues: values,
        directions: directions
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect(),
        ties,
        objective,
    }
}

fn tie_warning(report: &mut ResultReport, ties: &[bool]) {
    if ties.iter().any(|&t| t) {
        report.warnings.push(
            "some eigenvalues are tied within tolerance; the corresponding directions are not \
             unique"
                .to_string(),
        );
    }
}

fn cmd_pca(
    cli: &Cli,
    path: &Path,
    data: &Path,
    r: usize,
    no_center: bool,
    restrict: &[String],
    ordinary: bool,
) -> Result<ResultReport, CliError> {
    let loaded = load_problem(path, restrict)?;
    let tol = effective_tol(cli, Some(&loaded.problem))?;
    set_default_tol(tol);
    let rep = loaded.problem.representation()?;
    let ds = load_dataset(data, &loaded, &rep, no_center)?;
    let mut report = ResultReport::new("pca", tol);
    describe_problem(&mut report, &loaded.problem);
    if ordinary {
        if r > rep.total_dim() {
            return Err(CliError::Usage(format!(
                "--r {r} exceeds the total dimension {}",
                rep.total_dim()
            )));
        }
        let s = covariance(&ds)?;
        let p = ordinary_pca(&s, r)?;
        let objective = p.values.iter().sum();
        tie_warning(&mut report, &p.ties);
        report.pca = Some(pca_summary(
            "ordinary",
            true,
            p.values,
            &p.directions,
            p.ties,
            objective,
        ));
        return Ok(report);
    }
    let (space, _) = sections(&rep, tol)?;
    report.section_dim = Some(space.dim());
    if space.dim() == 0 {
        return Err(CliError::TrivialSections(trivial_message()));
    }
    if r > space.dim() {
        return Err(CliError::Usage(format!(
            "--r {r} exceeds the dimension of the space of sections d = {}",
            space.dim()
        )));
    }
    let pcs = quiver_pca(&ds, &space, r)?;
    tie_warning(&mut report, &pcs.ties);
    report.pca = Some(pca_summary(
        "quiver",
        true,
        pcs.values.clone(),
        &pcs.directions,
        pcs.ties.clone(),
        pcs.objective,
    ));
    Ok(report)
}

fn cmd_learn(
    cli: &Cli,
    path: &Path,
    data: &Path,
    r: Option<usize>,
    blowup: Option<&Path>,
) -> Result<ResultReport, CliError> {
    let problem = ProblemFile::load(path)?;
    let tol = effective_tol(cli, Some(&problem))?;
    set_default_tol(tol);
    let q = problem.quiver();
    let dims = problem.dims();
    let raw = load_csv(data)?;
    let total: usize = dims.iter().sum();
    if raw.ncols() != total {
        return Err(CliError::Shape(format!(
            "data has {} columns but the problem's total dimension is {total}",
            raw.ncols()
        )));
    }
    let ds = Dataset::new(raw, crate::sections::BlockLayout::new(&dims))?.centred();
    let vd = VertexData::from_dataset(&ds)?;
    let learned = fit_edge_maps(&q, &vd, tol)?;
    let mut report = ResultReport::new("learn", tol);
    describe_problem(&mut report, &problem);
    report.residuals = problem
        .edges
        .iter()
        .zip(&learned.residuals)
        .map(|(e, &residual)| EdgeResidual {
            source: e.source.clone(),
            target: e.target.clone(),
            residual,
        })
        .collect();
    report.learned_problem = Some(problem.with_matrices(&learned.representation).to_toml());
    if let Some(path) = blowup {
        let g = delta_blowup(&q, &dims, Some(&learned.representation))?;
        if !g.is_graphical() {
            report.warnings.push(
                "some vertex has several incoming edges; the blowup is not a directed \
                 graphical model"
                    .to_string(),
            );
        }
        std::fs::write(path, g.to_edge_list())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if let Some(r) = r {
        let (space, _) = sections(&learned.representation, tol)?;
        report.section_dim = Some(space.dim());
        if space.dim() == 0 {
            return Err(CliError::TrivialSections(trivial_message()));
        }
        if r > space.dim() {
            return Err(CliError::Usage(format!(
                "--r {r} exceeds the dimension of the space of sections d = {}",
                space.dim()
            )));
        }
        let pcs = quiver_pca(&ds, &space, r)?;
        tie_warning(&mut report, &pcs.ties);
        report.pca = Some(pca_summary(
            "quiver",
            true,
            pcs.values.clone(),
            &pcs.directions,
            pcs.ties.clone(),
            pcs.objective,
        ));
    }
    Ok(report)
}

/// Pipeline against the dense kernel on one representation.
pub fn check_representation(
    name: &str,
    rep: &Representation,
    tol: Tol,
) -> Result<CheckSummary, CliError> {
    let t0 = Instant::now();
    let (space, _) = sections(rep, tol)?;
    let pipeline_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let naive = naive_sections(rep, tol);
    let naive_seconds = t1.elapsed().as_secs_f64();
    let distance = if space.dim() == naive.dim() {
        Some(principal_angle_distance(&space.image(), &naive).map_err(SectionsError::from)?)
    } else {
        None
    };
    let compatibility_residual = space.compatibility_residual(rep);
    let pass = distance.is_some_and(|d| d <= CHECK_TOL) && compatibility_residual <= CHECK_TOL;
    Ok(CheckSummary {
        problem: name.to_string(),
        pipeline_dim: space.dim(),
        naive_dim: naive.dim(),
        distance,
        compatibility_residual,
        pipeline_seconds,
        naive_seconds,
        speedup: naive_seconds / pipeline_seconds.max(1e-12),
        pass,
    })
}

fn cmd_check(
    cli: &Cli,
    problems: &[PathBuf],
    bench: bool,
    restrict: &[String],
) -> Result<ResultReport, CliError> {
    if problems.is_empty() && !bench {
        return Err(CliError::Usage(
            "check needs at least one problem file or --bench".to_string(),
        ));
    }
    let cli_tol = effective_tol(cli, None)?;
    let mut report = ResultReport::new("check", cli_tol);
    for path in problems {
        let loaded = load_problem(path, restrict)?;
        let tol = effective_tol(cli, Some(&loaded.problem))?;
        let rep = loaded.problem.representation()?;
        report
            .checks
            .push(check_representation(&path.display().to_string(), &rep, tol)?);
        if problems.len() == 1 {
            report.tolerance = tol;
            report.tolerance_description = tol.describe();
            describe_problem(&mut report, &loaded.problem);
        }
    }
    if bench {
        report.bench = run_bench(&DEFAULT_SIZES, DEFAULT_DIM, 3, 0x9e5e, cli_tol)?;
    }
    Ok(report)
}

fn cmd_bound(
    cli: &Cli,
    path: &Path,
    verify: bool,
    restrict: &[String],
) -> Result<ResultReport, CliError> {
    let loaded = load_problem(path, restrict)?;
    let tol = effective_tol(cli, Some(&loaded.problem))?;
    set_default_tol(tol);
    let q = loaded.problem.quiver();
    let dims = loaded.problem.dims();
    let rep = if loaded.problem.has_all_matrices() {
        loaded.problem.representation()?
    } else if verify {
        return Err(CliError::Usage(
            "--verify needs every edge matrix".to_string(),
        ));
    } else {
        Representation::zero(q, dims)?
    };
    let bound = dimension_lower_bound(&rep)?;
    let section_dim = if verify {
        Some(sections(&rep, tol)?.0.dim())
    } else {
        None
    };
    let mut report = ResultReport::new("bound", tol);
    describe_problem(&mut report, &loaded.problem);
    report.section_dim = section_dim;
    if let Some(d) = section_dim.filter(|&d| bound > d as i64) {
        report.warnings.push(format!(
            "the path-count bound {bound} exceeds the actual dimension {d}; it only accounts \
             for merges at maximal vertices"
        ));
    }
    report.bound = Some(BoundSummary { bound, section_dim });
    Ok(report)
}

/// Parse `args`, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(report) => {
            if cli.json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render());
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
