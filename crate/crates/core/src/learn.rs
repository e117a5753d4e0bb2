//! Estimating edge maps from data and exporting the scalar blowup graph.
//!
//! Each edge map is fitted on its own by least squares: with `Y_v` the
//! `m × dim A_v` block of samples at vertex `v`, the minimiser of
//! `‖Y_t - Y_s A_eᵀ‖²` of minimum norm is `A_eᵀ = Y_s⁺ Y_t`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{EdgeId, Quiver};
use crate::qpca::{quiver_pca, Dataset, PcaError, QuiverPCs};
use crate::sections::{sections, Representation, SectionSpace, SectionsError};
use crate::subspace::{pinv, Tol};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("data has {found} columns but the vertex dimensions sum to {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("edge list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Sections(#[from] SectionsError),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

/// Per-vertex sample blocks `Y_v` sharing one sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexData {
    blocks: Vec<DMatrix<f64>>,
    samples: usize,
}

impl VertexData {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self, LearnError> {
        let samples = blocks.first().map_or(0, |b| b.nrows());
        if let Some((v, b)) = blocks.iter().enumerate().find(|(_, b)| b.nrows() != samples) {
            return Err(LearnError::ShapeMismatch(format!(
                "block {v} has {} samples, expected {samples}",
                b.nrows()
            )));
        }
        Ok(VertexData { blocks, samples })
    }

    /// Slice a centred dataset into its vertex blocks.
    pub fn from_dataset(d: &Dataset) -> Result<Self, LearnError> {
        if !d.is_centred() {
            return Err(PcaError::NotCentred {
                max_mean: d.means().amax(),
            }
            .into());
        }
        let blocks = (0..d.layout().n_blocks()).map(|v| d.block(v)).collect();
        Ok(VertexData {
            blocks,
            samples: d.n_samples(),
        })
    }

    pub fn block(&self, v: usize) -> &DMatrix<f64> {
        &self.blocks[v]
    }

    pub fn n_samples(&self) -> usize {
        self.samples
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.ncols()).collect()
    }
}

/// Fitted representation with the per-edge residual `‖Y_t - Y_s A_eᵀ‖_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedRepresentation {
    pub representation: Representation,
    pub residuals: Vec<f64>,
}

fn check_blocks(q: &Quiver, vd: &VertexData) -> Result<(), LearnError> {
    if vd.blocks.len() != q.n_vertices() {
        return Err(LearnError::ShapeMismatch(format!(
            "{} data blocks for {} vertices",
            vd.blocks.len(),
            q.n_vertices()
        )));
    }
    Ok(())
}

/// Least-squares estimate of every edge map, edge by edge.
pub fn fit_edge_maps(
    q: &Quiver,
    vd: &VertexData,
    tol: Tol,
) -> Result<LearnedRepresentation, LearnError> {
    check_blocks(q, vd)?;
    let pinvs: Vec<DMatrix<f64>> = vd.blocks.iter().map(|y| pinv(y, tol)).collect();
    let mut maps = Vec::with_capacity(q.n_edges());
    let mut residuals = Vec::with_capacity(q.n_edges());
    for &(s, t) in q.edges() {
        let at = &pinvs[s] * &vd.blocks[t];
        residuals.push((&vd.blocks[t] - &vd.blocks[s] * &at).norm());
        maps.push(at.transpose());
    }
    let representation = Representation::new(q.clone(), vd.dims(), maps)?;
    Ok(LearnedRepresentation {
        representation,
        residuals,
    })
}

/// `Σ_e ‖Y_t - Y_s A_eᵀ‖²_F`.
pub fn fit_objective(rep: &Representation, vd: &VertexData) -> Result<f64, LearnError> {
    check_blocks(rep.quiver(), vd)?;
    Ok(rep
        .quiver()
        .edges()
        .iter()
        .zip(rep.maps())
        .map(|(&(s, t), a)| (&vd.blocks[t] - &vd.blocks[s] * a.transpose()).norm_squared())
        .sum())
}

/// One scalar edge of a blowup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupEdge {
    pub source: usize,
    pub target: usize,
    pub weight: Option<f64>,
    /// Quiver edge the scalar edge belongs to.
    pub edge: EdgeId,
}

/// Every quiver vertex `v` replaced by `δ(v)` scalar nodes and every edge by
/// the complete bipartite bundle between its endpoints' nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupGraph {
    offsets: Vec<usize>,
    counts: Vec<usize>,
    edges: Vec<BlowupEdge>,
    single_parent: bool,
}

impl BlowupGraph {
    pub fn n_nodes(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[BlowupEdge] {
        &self.edges
    }

    /// Node ids standing for quiver vertex `v`.
    pub fn nodes_of(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v] + self.counts[v]
    }

    /// Whether every quiver vertex has at most one incoming edge, the case
    /// in which the blowup reads as a directed graphical model.
    pub fn is_graphical(&self) -> bool {
        self.single_parent
    }

    /// One `src dst weight` line per scalar edge; unweighted edges get 1.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let w = e.weight.unwrap_or(1.0);
            writeln!(out, "{} {} {w:?}", e.source, e.target).expect("writing to a String");
        }
        out
    }
}

/// Blow up `q` by `delta`. With `weights`, the scalar edge from node `j` of
/// `s(e)` to node `i` of `t(e)` carries `A_e[i, j]`.
pub fn delta_blowup(
    q: &Quiver,
    delta: &[usize],
    weights: Option<&Representation>,
) -> Result<BlowupGraph, LearnError> {
    if delta.len() != q.n_vertices() {
        return Err(LearnError::ShapeMismatch(format!(
            "{} multiplicities for {} vertices",
            delta.len(),
            q.n_vertices()
        )));
    }
    if let Some(w) = weights {
        if w.quiver() != q || w.dims() != delta {
            return Err(LearnError::ShapeMismatch(
                "weights must be a representation of the same quiver with dims equal to delta"
                    .into(),
            ));
        }
    }
    let mut offsets = Vec::with_capacity(delta.len());
    let mut acc = 0;
    for &d in delta {
        offsets.push(acc);
        acc += d;
    }
    let mut edges = Vec::new();
    for (e, &(s, t)) in q.edges().iter().enumerate() {
        for j in 0..delta[s] {
            for i in 0..delta[t] {
                edges.push(BlowupEdge {
                    source: offsets[s] + j,
                    target: offsets[t] + i,
                    weight: weights.map(|w| w.map(e)[(i, j)]),
                    edge: e,
                });
            }
        }
    }
    let single_parent = q.in_edges().iter().all(|inc| inc.len() <= 1);
    Ok(BlowupGraph {
        offsets,
        counts: delta.to_vec(),
        edges,
        single_parent,
    })
}

/// Parse `src dst weight` lines; blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize, f64)>, LearnError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| LearnError::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [s, t, w] = fields.as_slice() else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let s = s.parse().map_err(|e| err(format!("source: {e}")))?;
        let t = t.parse().map_err(|e| err(format!("target: {e}")))?;
        let w = w.parse().map_err(|e| err(format!("weight: {e}")))?;
        out.push((s, t, w));
    }
    Ok(out)
}

/// Learned maps, their sections and the resulting principal components.
#[derive(Debug, Clone)]
pub struct LearnedPca {
    pub learned: LearnedRepresentation,
    pub sections: SectionSpace,
    pub pcs: QuiverPCs,
}

/// Fit every edge map, compute the sections of the fitted representation
/// and run quiver PCA on the same data. The data is centred first unless
/// already flagged as centred.
pub fn learn_then_pca(
    q: &Quiver,
    data: &Dataset,
    r: usize,
    tol: Tol,
) -> Result<LearnedPca, LearnError> {
    let data = if data.is_centred() {
        data.clone()
    } else {
        data.clone().centred()
    };
    if data.layout().n_blocks() != q.n_vertices() {
        return Err(LearnError::ShapeMismatch(format!(
            "dataset has {} blocks for {} vertices",
            data.layout().n_blocks(),
            q.n_vertices()
        )));
    }
    let vd = VertexData::from_dataset(&data)?;
    let learned = fit_edge_maps(q, &vd, tol)?;
    let (space, _) = sections(&learned.representation, tol)?;
    let pcs = quiver_pca(&data, &space, r)?;
    Ok(LearnedPca {
        learned,
        sections: space,
        pcs,
    })
}
