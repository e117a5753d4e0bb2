//! Spaces of sections of quiver representations.
//!
//! A section picks one vector per vertex so that every edge map carries the
//! vector at its source to the vector at its target. The pipeline computes
//! the space of sections in three stages:
//!
//! 1. [`sc_reduce`] collapses each strongly connected component onto a
//!    spanning arborescence, replacing the space at its root by the common
//!    kernel of the cycle defects `A_{p[t]} - A_ε A_{p[s]}`.
//! 2. [`acyc_reduce`] drops every terminal edge and shrinks each vertex space
//!    to the vectors whose images along every remaining path into a reduced
//!    root land in that root's kernel.
//! 3. [`arb_replace`] adds a root feeding all minimal vertices, pushes flow
//!    spaces forward in topological order and keeps only the part of the
//!    root space on which all parallel paths agree.
//!
//! The surviving root space is isomorphic to the space of sections; pushing
//! its basis along a spanning tree gives the embedding `F`.
//!
//! Intermediate representations keep every vertex space in the coordinates
//! of the original `A_v` (a [`SubRepresentation`]); maps stay ambient.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    augment, ear_decompose, induced_arborescence, induced_subquiver, spanning_arborescence,
    tarjan_msc, top_sort, Arborescence, Augmented, EarDecomposition, EdgeId, GraphError,
    InducedArborescence, Quiver, VertexId,
};
use crate::subspace::{
    intersect, kernel, kernel_within, preimage, restrict, spectral_norm, LinMap, Subspace,
    SubspaceError, Tol,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SectionsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("map of edge {edge} has a non-finite entry")]
    NonFinite { edge: EdgeId },
    #[error("number of paths into vertex {vertex} exceeds the integer range")]
    PathCountOverflow { vertex: VertexId },
}

/// Row ranges of the vertex blocks inside `Tot = ⊕_v A_v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    offsets: Vec<usize>,
    dims: Vec<usize>,
}

impl BlockLayout {
    pub fn new(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in dims {
            offsets.push(acc);
            acc += d;
        }
        BlockLayout {
            offsets,
            dims: dims.to_vec(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.offsets.last().map_or(0, |o| o + self.dims[self.dims.len() - 1])
    }

    pub fn offset(&self, v: VertexId) -> usize {
        self.offsets[v]
    }

    pub fn dim(&self, v: VertexId) -> usize {
        self.dims[v]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn range(&self, v: VertexId) -> Range<usize> {
        self.offsets[v]..self.offsets[v] + self.dims[v]
    }

    /// Rows of `m` belonging to block `v`.
    pub fn block(&self, m: &DMatrix<f64>, v: VertexId) -> DMatrix<f64> {
        m.rows(self.offsets[v], self.dims[v]).into_owned()
    }
}

/// A representation: a vector space `R^{dims[v]}` per vertex and a
/// `dims[t] × dims[s]` matrix per edge `s → t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    quiver: Quiver,
    dims: Vec<usize>,
    maps: Vec<LinMap>,
}

fn check_maps(q: &Quiver, dims: &[usize], maps: &[LinMap]) -> Result<(), SectionsError> {
    if dims.len() != q.n_vertices() {
        return Err(SectionsError::ShapeMismatch(format!(
            "{} dimensions for {} vertices",
            dims.len(),
            q.n_vertices()
        )));
    }
    if maps.len() != q.n_edges() {
        return Err(SectionsError::ShapeMismatch(format!(
            "{} maps for {} edges",
            maps.len(),
            q.n_edges()
        )));
    }
    for (e, (m, &(s, t))) in maps.iter().zip(q.edges()).enumerate() {
        if m.shape() != (dims[t], dims[s]) {
            return Err(SectionsError::ShapeMismatch(format!(
                "edge {e} ({s} -> {t}) has a {}x{} map, expected {}x{}",
                m.nrows(),
                m.ncols(),
                dims[t],
                dims[s]
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(SectionsError::NonFinite { edge: e });
        }
    }
    Ok(())
}

impl Representation {
    pub fn new(quiver: Quiver, dims: Vec<usize>, maps: Vec<LinMap>) -> Result<Self, SectionsError> {
        check_maps(&quiver, &dims, &maps)?;
        Ok(Representation { quiver, dims, maps })
    }

    /// All edge maps zero.
    pub fn zero(quiver: Quiver, dims: Vec<usize>) -> Result<Self, SectionsError> {
        if dims.len() != quiver.n_vertices() {
            return Err(SectionsError::ShapeMismatch(format!(
                "{} dimensions for {} vertices",
                dims.len(),
                quiver.n_vertices()
            )));
        }
        let maps = quiver
            .edges()
            .iter()
            .map(|&(s, t)| DMatrix::zeros(dims[t], dims[s]))
            .collect();
        Ok(Representation { quiver, dims, maps })
    }

    pub fn quiver(&self) -> &Quiver {
        &self.quiver
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, v: VertexId) -> usize {
        self.dims[v]
    }

    pub fn maps(&self) -> &[LinMap] {
        &self.maps
    }

    pub fn map(&self, e: EdgeId) -> &LinMap {
        &self.maps[e]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(&self.dims)
    }

    /// Restriction to the full subquiver on the selected vertices. Returns
    /// the kept vertex ids (old numbering) alongside.
    pub fn restrict_to(&self, keep: impl Fn(VertexId) -> bool) -> (Representation, Vec<VertexId>) {
        let sub = induced_subquiver(&self.quiver, keep);
        let dims = sub.new_to_old.iter().map(|&v| self.dims[v]).collect();
        let maps = sub
            .edge_new_to_old
            .iter()
            .map(|&e| self.maps[e].clone())
            .collect();
        (
            Representation {
                quiver: sub.quiver,
                dims,
                maps,
            },
            sub.new_to_old,
        )
    }

    /// Relabelled copy: vertex `v` becomes `vperm[v]`, edge `e` becomes
    /// `eperm[e]`.
    pub fn permuted(&self, vperm: &[VertexId], eperm: &[EdgeId]) -> Representation {
        let quiver = self.quiver.permuted(vperm, eperm);
        let mut dims = vec![0; self.dims.len()];
        for (v, &d) in self.dims.iter().enumerate() {
            dims[vperm[v]] = d;
        }
        let mut maps = vec![DMatrix::zeros(0, 0); self.maps.len()];
        for (e, m) in self.maps.iter().enumerate() {
            maps[eperm[e]] = m.clone();
        }
        Representation { quiver, dims, maps }
    }

    /// Base change `A_e ↦ g_t A_e g_s⁻¹` by invertible per-vertex matrices.
    pub fn transformed(&self, g: &[LinMap]) -> Result<Representation, SectionsError> {
        if g.len() != self.dims.len() {
            return Err(SectionsError::ShapeMismatch(format!(
                "{} base changes for {} vertices",
                g.len(),
                self.dims.len()
            )));
        }
        let mut inv = Vec::with_capacity(g.len());
        for (v, gv) in g.iter().enumerate() {
            if gv.shape() != (self.dims[v], self.dims[v]) {
                return Err(SectionsError::ShapeMismatch(format!(
                    "base change at vertex {v} is {}x{}, expected {}x{}",
                    gv.nrows(),
                    gv.ncols(),
                    self.dims[v],
                    self.dims[v]
                )));
            }
            let i = gv.clone().try_inverse().ok_or_else(|| {
                SectionsError::ShapeMismatch(format!("base change at vertex {v} is singular"))
            })?;
            inv.push(i);
        }
        let maps = self
            .quiver
            .edges()
            .iter()
            .zip(&self.maps)
            .map(|(&(s, t), a)| &g[t] * a * &inv[s])
            .collect();
        Representation::new(self.quiver.clone(), self.dims.clone(), maps)
    }
}

/// Subspaces `W_v ⊂ R^{dims[v]}` with ambient edge maps satisfying
/// `A_e W_s ⊂ W_t`.
#[derive(Debug, Clone)]
pub struct SubRepresentation {
    quiver: Quiver,
    dims: Vec<usize>,
    spaces: Vec<Subspace>,
    maps: Vec<LinMap>,
}

impl SubRepresentation {
    pub fn new(
        quiver: Quiver,
        spaces: Vec<Subspace>,
        maps: Vec<LinMap>,
    ) -> Result<Self, SectionsError> {
        let dims: Vec<usize> = spaces.iter().map(Subspace::ambient_dim).collect();
        check_maps(&quiver, &dims, &maps)?;
        Ok(SubRepresentation {
            quiver,
            dims,
            spaces,
            maps,
        })
    }

    /// Every vertex space full.
    pub fn from_representation(rep: &Representation, tol: Tol) -> Self {
        SubRepresentation {
            quiver: rep.quiver.clone(),
            dims: rep.dims.clone(),
            spaces: rep
                .dims
                .iter()
                .map(|&d| Subspace::full(d).with_tol(tol))
                .collect(),
            maps: rep.maps.clone(),
        }
    }

    pub fn quiver(&self) -> &Quiver {
        &self.quiver
    }

    /// Ambient dimensions.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spaces(&self) -> &[Subspace] {
        &self.spaces
    }

    pub fn maps(&self) -> &[LinMap] {
        &self.maps
    }

    pub fn space_dims(&self) -> Vec<usize> {
        self.spaces.iter().map(Subspace::dim).collect()
    }

    /// Coordinate form: each `W_v` becomes `R^{dim W_v}` through its
    /// orthonormal basis, each map becomes `W_tᵀ A_e W_s`. Fails with
    /// `NotInvariant` when some `A_e` leaves `W_t`.
    pub fn to_representation(&self) -> Result<Representation, SectionsError> {
        let maps = self
            .quiver
            .edges()
            .iter()
            .zip(&self.maps)
            .map(|(&(s, t), a)| restrict(a, &self.spaces[s], &self.spaces[t]))
            .collect::<Result<Vec<_>, _>>()?;
        Representation::new(self.quiver.clone(), self.space_dims(), maps)
    }

    pub fn check_invariance(&self) -> Result<(), SectionsError> {
        for (&(s, t), a) in self.quiver.edges().iter().zip(&self.maps) {
            restrict(a, &self.spaces[s], &self.spaces[t])?;
        }
        Ok(())
    }
}

/// Output of [`sc_reduce`] on a strongly connected representation.
#[derive(Debug, Clone)]
pub struct ScReduction {
    pub decomposition: EarDecomposition,
    /// The quiver minus its terminal edges.
    pub tree: InducedArborescence,
    /// `A_{p[t(ε)]} - A_ε A_{p[s(ε)]}` for each terminal edge, in the order
    /// of `decomposition.terminal_edges()`.
    pub defects: Vec<LinMap>,
    /// Common kernel of the defects inside the root space.
    pub kernel: Subspace,
    /// Representation on the tree with the root space replaced by `kernel`.
    pub reduced: SubRepresentation,
}

/// Maps `A_{p[v]}` along the unique tree path from the root to every vertex.
fn path_maps(tree: &InducedArborescence, maps: &[LinMap], dims: &[usize]) -> Vec<LinMap> {
    let arb = &tree.arborescence;
    let root = arb.root();
    let mut out = vec![DMatrix::zeros(0, 0); dims.len()];
    out[root] = DMatrix::identity(dims[root], dims[root]);
    for v in arb.bfs_order().into_iter().skip(1) {
        let e = arb.parent_edge(v).expect("non-root vertices have a parent");
        let s = arb.quiver().source(e);
        out[v] = &maps[tree.edge_origin[e]] * &out[s];
    }
    out
}

/// Reduce a strongly connected representation to an arborescence whose root
/// space is the space of sections.
pub fn sc_reduce(
    rep: &Representation,
    root_hint: Option<VertexId>,
    tol: Tol,
) -> Result<ScReduction, SectionsError> {
    let decomposition = ear_decompose(&rep.quiver, root_hint)?;
    let tree = induced_arborescence(&decomposition);
    let root = decomposition.root();
    let paths = path_maps(&tree, &rep.maps, &rep.dims);
    let mut k = Subspace::full(rep.dims[root]).with_tol(tol);
    let mut defects = Vec::with_capacity(decomposition.terminal_edges().len());
    for &eps in decomposition.terminal_edges() {
        let (s, t) = rep.quiver.edges()[eps];
        let a = &rep.maps[eps];
        let through = a * &paths[s];
        let scale = paths[t].norm().max(through.norm());
        let delta = &paths[t] - through;
        k = kernel_within(&k, &delta, tol, scale)?;
        defects.push(delta);
    }
    let tq = tree.arborescence.quiver().clone();
    let spaces = (0..tq.n_vertices())
        .map(|v| {
            if v == root {
                k.clone()
            } else {
                Subspace::full(rep.dims[v]).with_tol(tol)
            }
        })
        .collect();
    let maps = tree
        .edge_origin
        .iter()
        .map(|&e| rep.maps[e].clone())
        .collect();
    let reduced = SubRepresentation {
        quiver: tq,
        dims: rep.dims.clone(),
        spaces,
        maps,
    };
    Ok(ScReduction {
        decomposition,
        tree,
        defects,
        kernel: k,
        reduced,
    })
}

/// One strongly connected component and its reduction.
#[derive(Debug, Clone)]
pub struct ComponentReduction {
    /// Vertex ids of the component in the input quiver, increasing; local
    /// vertex `i` of `reduction` is `vertices[i]`.
    pub vertices: Vec<VertexId>,
    /// Input edge id of each local edge.
    pub edges: Vec<EdgeId>,
    pub root: VertexId,
    /// Terminal edges, input ids.
    pub terminal_edges: Vec<EdgeId>,
    pub reduction: ScReduction,
}

/// Output of [`acyc_reduce`].
#[derive(Debug, Clone)]
pub struct AcycReduction {
    pub components: Vec<ComponentReduction>,
    /// The input quiver minus every terminal edge; acyclic.
    pub quiver: Quiver,
    /// Input edge id of each edge of `quiver`.
    pub edge_origin: Vec<EdgeId>,
    /// Vertex spaces `Λ_v` and the surviving edge maps.
    pub reduced: SubRepresentation,
}

fn reduce_component(
    rep: &Representation,
    vertices: Vec<VertexId>,
    tol: Tol,
) -> Result<ComponentReduction, SectionsError> {
    let keep = {
        let mut mask = vec![false; rep.quiver.n_vertices()];
        for &v in &vertices {
            mask[v] = true;
        }
        mask
    };
    let sub = induced_subquiver(&rep.quiver, |v| keep[v]);
    let local = Representation {
        dims: sub.new_to_old.iter().map(|&v| rep.dims[v]).collect(),
        maps: sub
            .edge_new_to_old
            .iter()
            .map(|&e| rep.maps[e].clone())
            .collect(),
        quiver: sub.quiver,
    };
    let reduction = sc_reduce(&local, None, tol)?;
    let root = sub.new_to_old[reduction.decomposition.root()];
    let terminal_edges = reduction
        .decomposition
        .terminal_edges()
        .iter()
        .map(|&e| sub.edge_new_to_old[e])
        .collect();
    Ok(ComponentReduction {
        vertices: sub.new_to_old,
        edges: sub.edge_new_to_old,
        root,
        terminal_edges,
        reduction,
    })
}

// Component reductions are independent; large inputs spread them over
// scoped threads. Results keep component order.
fn reduce_components(
    rep: &Representation,
    comps: Vec<Vec<VertexId>>,
    tol: Tol,
) -> Result<Vec<ComponentReduction>, SectionsError> {
    let work: usize = comps
        .iter()
        .map(|c| c.iter().map(|&v| rep.dims[v]).sum::<usize>())
        .sum();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    if comps.len() < 2 || threads < 2 || work < 256 {
        return comps
            .into_iter()
            .map(|c| reduce_component(rep, c, tol))
            .collect();
    }
    let chunk = comps.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = comps
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|c| reduce_component(rep, c.clone(), tol))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::new();
        for h in handles {
            out.extend(h.join().expect("component reduction does not panic")?);
        }
        Ok(out)
    })
}

/// Remove every cycle: reduce each maximal strongly connected component,
/// delete all terminal edges, and cut each vertex space down to
/// `Λ_v = A°_v ∩ ⋂_R C_{v,R}` where `A°_v` is the reduced kernel at
/// component roots (full elsewhere) and `C_{v,R}` holds the vectors whose
/// images along every path to the root of `R` land in its kernel.
///
/// The remaining quiver is acyclic, so `C_{·,R}` is computed in one pass in
/// reverse topological order over the ancestors of the root:
/// `C_{ρ,R} = K_R` and `C_{v,R} = ⋂_{e: v→w} A_e⁻¹(C_{w,R})` over edges
/// whose target reaches `ρ`.
pub fn acyc_reduce(rep: &Representation, tol: Tol) -> Result<AcycReduction, SectionsError> {
    let comps: Vec<Vec<VertexId>> = tarjan_msc(&rep.quiver)
        .into_iter()
        .map(|c| c.vertices)
        .collect();
    let components = reduce_components(rep, comps, tol)?;

    let mut removed = vec![false; rep.quiver.n_edges()];
    for c in &components {
        for &e in &c.terminal_edges {
            removed[e] = true;
        }
    }
    let (qstar, edge_origin) = crate::graph::edge_subquiver(&rep.quiver, |e| !removed[e]);
    let maps: Vec<LinMap> = edge_origin.iter().map(|&e| rep.maps[e].clone()).collect();
    let order = top_sort(&qstar)?;
    let out = qstar.out_edges();
    let rev = qstar.reversed();

    let mut lambda: Vec<Subspace> = rep
        .dims
        .iter()
        .map(|&d| Subspace::full(d).with_tol(tol))
        .collect();
    for c in &components {
        lambda[c.root] = c.reduction.kernel.clone();
    }
    for c in &components {
        let ancestors = rev.reachable_from(c.root);
        let mut cons: Vec<Option<Subspace>> = vec![None; rep.dims.len()];
        for &v in order.iter().rev() {
            if !ancestors[v] {
                continue;
            }
            let cv = if v == c.root {
                c.reduction.kernel.clone()
            } else {
                let mut acc = Subspace::full(rep.dims[v]).with_tol(tol);
                for &e in &out[v] {
                    if let Some(ct) = &cons[qstar.target(e)] {
                        acc = intersect(&acc, &preimage(&maps[e], ct, tol)?, tol)?;
                    }
                }
                acc
            };
            lambda[v] = intersect(&lambda[v], &cv, tol)?;
            cons[v] = Some(cv);
        }
    }
    let reduced = SubRepresentation {
        quiver: qstar.clone(),
        dims: rep.dims.clone(),
        spaces: lambda,
        maps,
    };
    reduced.check_invariance()?;
    Ok(AcycReduction {
        components,
        quiver: qstar,
        edge_origin,
        reduced,
    })
}

/// Output of [`arb_replace`].
#[derive(Debug, Clone)]
pub struct ArbReplacement {
    /// The input plus a root (id `n`) with one edge into each minimal vertex.
    pub augmented: Augmented,
    /// Blocks of the root's ambient space, one per minimal vertex in the
    /// order of `augmented.minimal`.
    pub root_layout: BlockLayout,
    /// Flow space `Φ_v` of every augmented vertex, inside the root ambient.
    pub flow_spaces: Vec<Subspace>,
    /// Flow map `φ_v`: root ambient to `R^{dims[v]}`.
    pub flow_maps: Vec<LinMap>,
    /// Part of the root space on which all parallel paths agree.
    pub root_space: Subspace,
    pub tree: Arborescence,
    /// Augmented-quiver edge id of each tree edge.
    pub tree_edge_origin: Vec<EdgeId>,
    /// Maps of the augmented quiver: input maps then block projections.
    pub augmented_maps: Vec<LinMap>,
    /// Representation on the tree; the root carries `root_space`.
    pub replaced: SubRepresentation,
}

/// Replace an acyclic sub-representation by one on a spanning arborescence
/// of its augmentation with the same space of sections.
pub fn arb_replace(sub: &SubRepresentation, tol: Tol) -> Result<ArbReplacement, SectionsError> {
    let augmented = augment(&sub.quiver)?;
    let n = sub.quiver.n_vertices();
    let root = augmented.root;
    let min_dims: Vec<usize> = augmented.minimal.iter().map(|&v| sub.dims[v]).collect();
    let root_layout = BlockLayout::new(&min_dims);
    let big = root_layout.total();

    let mut augmented_maps = sub.maps.clone();
    for (i, &v) in augmented.minimal.iter().enumerate() {
        let mut p = DMatrix::zeros(sub.dims[v], big);
        p.view_mut((0, root_layout.offset(i)), (sub.dims[v], sub.dims[v]))
            .fill_with_identity();
        augmented_maps.push(p);
    }

    let root_basis = {
        let cols: usize = augmented.minimal.iter().map(|&v| sub.spaces[v].dim()).sum();
        let mut b = DMatrix::zeros(big, cols);
        let mut c = 0;
        for (i, &v) in augmented.minimal.iter().enumerate() {
            let w = sub.spaces[v].basis();
            b.view_mut((root_layout.offset(i), c), w.shape()).copy_from(w);
            c += w.ncols();
        }
        b
    };
    let root_flow = Subspace::from_orthonormal(root_basis, tol);

    let aq = &augmented.quiver;
    let inc = aq.in_edges();
    let mut flow_spaces = vec![Subspace::zero(0); n + 1];
    let mut flow_maps = vec![DMatrix::zeros(0, 0); n + 1];
    flow_spaces[root] = root_flow.clone();
    flow_maps[root] = DMatrix::identity(big, big);
    for v in top_sort(aq)? {
        if v == root {
            continue;
        }
        let mut phi = flow_spaces[aq.source(inc[v][0])].clone();
        for &e in &inc[v][1..] {
            phi = intersect(&phi, &flow_spaces[aq.source(e)], tol)?;
        }
        let pushed: Vec<LinMap> = inc[v]
            .iter()
            .map(|&e| &augmented_maps[e] * &flow_maps[aq.source(e)])
            .collect();
        flow_spaces[v] = crate::subspace::equalise(&phi, &pushed, tol)?;
        flow_maps[v] = pushed.into_iter().next().expect("non-root vertices have an in-edge");
    }
    let mut root_space = root_flow;
    for v in sub.quiver.maximal_vertices() {
        root_space = intersect(&root_space, &flow_spaces[v], tol)?;
    }

    let (tree, tree_edge_origin) = spanning_arborescence(aq, root)?;
    let mut spaces = sub.spaces.clone();
    spaces.push(root_space.clone());
    let maps = tree_edge_origin
        .iter()
        .map(|&e| augmented_maps[e].clone())
        .collect();
    let replaced = SubRepresentation {
        quiver: tree.quiver().clone(),
        dims: spaces.iter().map(Subspace::ambient_dim).collect(),
        spaces,
        maps,
    };
    Ok(ArbReplacement {
        augmented,
        root_layout,
        flow_spaces,
        flow_maps,
        root_space,
        tree,
        tree_edge_origin,
        augmented_maps,
        replaced,
    })
}

/// Edge of the final spanning tree, named in the input's terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeEdge {
    Original { edge: EdgeId },
    Root { vertex: VertexId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentChoice {
    pub vertices: Vec<VertexId>,
    pub root: VertexId,
    pub ears: usize,
    pub terminal_edges: Vec<EdgeId>,
}

/// The combinatorial choices behind an embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub components: Vec<ComponentChoice>,
    pub minimal_vertices: Vec<VertexId>,
    pub tree_edges: Vec<TreeEdge>,
}

/// The space of sections as the column span of `F`.
#[derive(Debug, Clone)]
pub struct SectionSpace {
    embedding: DMatrix<f64>,
    layout: BlockLayout,
    provenance: Provenance,
    tol: Tol,
}

impl SectionSpace {
    pub fn total_dim(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }

    /// `F`, `n × d`.
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.embedding
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn tol(&self) -> Tol {
        self.tol
    }

    /// Rows of `F` at vertex `v`.
    pub fn block(&self, v: VertexId) -> DMatrix<f64> {
        self.layout.block(&self.embedding, v)
    }

    pub fn image(&self) -> Subspace {
        Subspace::span(&self.embedding, self.tol)
    }

    /// Largest `‖γ_t - A_e γ_s‖ / (max(‖A_e‖, 1) ‖γ‖)` over edges and
    /// columns `γ` of `F`.
    pub fn compatibility_residual(&self, rep: &Representation) -> f64 {
        compatibility_residual(&self.embedding, rep)
    }
}

/// See [`SectionSpace::compatibility_residual`].
pub fn compatibility_residual(f: &DMatrix<f64>, rep: &Representation) -> f64 {
    let layout = rep.layout();
    let mut worst: f64 = 0.0;
    for (&(s, t), a) in rep.quiver.edges().iter().zip(&rep.maps) {
        let scale = spectral_norm(a).max(1.0);
        let gs = layout.block(f, s);
        let gt = layout.block(f, t);
        let diff = gt - a * gs;
        for j in 0..f.ncols() {
            let norm = f.column(j).norm();
            if norm > 0.0 {
                worst = worst.max(diff.column(j).norm() / (scale * norm));
            }
        }
    }
    worst
}

/// Every intermediate stage of [`sections`].
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    pub acyclic: AcycReduction,
    pub arboreal: ArbReplacement,
}

impl PipelineTrace {
    /// The acyclified representation in coordinates.
    pub fn acyclified(&self) -> Result<Representation, SectionsError> {
        self.acyclic.reduced.to_representation()
    }

    /// The arboreal replacement in coordinates.
    pub fn replaced(&self) -> Result<Representation, SectionsError> {
        self.arboreal.replaced.to_representation()
    }

    pub fn root_dim(&self) -> usize {
        self.arboreal.root_space.dim()
    }
}

/// Space of sections with its full trace.
pub fn sections(
    rep: &Representation,
    tol: Tol,
) -> Result<(SectionSpace, PipelineTrace), SectionsError> {
    let acyclic = acyc_reduce(rep, tol)?;
    let arboreal = arb_replace(&acyclic.reduced, tol)?;

    let n = rep.quiver.n_vertices();
    let d = arboreal.root_space.dim();
    let tree = &arboreal.tree;
    let mut blocks = vec![DMatrix::zeros(0, d); n + 1];
    blocks[tree.root()] = arboreal.root_space.basis().clone();
    for v in tree.bfs_order().into_iter().skip(1) {
        let e = tree.parent_edge(v).expect("non-root vertices have a parent");
        let s = tree.quiver().source(e);
        blocks[v] = &arboreal.replaced.maps[e] * &blocks[s];
    }
    let layout = rep.layout();
    let mut f = DMatrix::zeros(layout.total(), d);
    for v in 0..n {
        f.rows_mut(layout.offset(v), layout.dim(v))
            .copy_from(&blocks[v]);
    }

    let n_star = acyclic.quiver.n_edges();
    let provenance = Provenance {
        components: acyclic
            .components
            .iter()
            .map(|c| ComponentChoice {
                vertices: c.vertices.clone(),
                root: c.root,
                ears: c.reduction.decomposition.ears().len(),
                terminal_edges: c.terminal_edges.clone(),
            })
            .collect(),
        minimal_vertices: arboreal.augmented.minimal.clone(),
        tree_edges: arboreal
            .tree_edge_origin
            .iter()
            .map(|&e| {
                if e < n_star {
                    TreeEdge::Original {
                        edge: acyclic.edge_origin[e],
                    }
                } else {
                    TreeEdge::Root {
                        vertex: arboreal.augmented.minimal[e - n_star],
                    }
                }
            })
            .collect(),
    };
    let space = SectionSpace {
        embedding: f,
        layout,
        provenance,
        tol,
    };
    Ok((
        space,
        PipelineTrace {
            acyclic,
            arboreal,
        },
    ))
}

/// The constraint matrix `M`: one block row per edge with `-A_e` in the
/// source column block and the identity in the target column block (both
/// when `e` is a loop).
pub fn constraint_matrix(rep: &Representation) -> DMatrix<f64> {
    let layout = rep.layout();
    let rows: usize = rep.quiver.edges().iter().map(|&(_, t)| rep.dims[t]).sum();
    let mut m = DMatrix::zeros(rows, layout.total());
    let mut r = 0;
    for (&(s, t), a) in rep.quiver.edges().iter().zip(&rep.maps) {
        let h = rep.dims[t];
        let mut src = m.view_mut((r, layout.offset(s)), (h, rep.dims[s]));
        src -= a;
        let mut tgt = m.view_mut((r, layout.offset(t)), (h, h));
        for i in 0..h {
            tgt[(i, i)] += 1.0;
        }
        r += h;
    }
    m
}

/// Sections as the kernel of the constraint matrix; independent of the
/// reduction pipeline.
pub fn naive_sections(rep: &Representation, tol: Tol) -> Subspace {
    kernel(&constraint_matrix(rep), tol)
}

/// `Σ_{V_min} dim A_u - Σ_{V_max} (n_v - 1) dim A_v`, where `n_v` counts the
/// paths into `v` from the augmented root; may be negative. Bounds the
/// dimension of the sections of an acyclic representation from below only
/// when every vertex with several in-edges is maximal: merges at interior
/// vertices cut the space too and are not charged.
pub fn dimension_lower_bound(rep: &Representation) -> Result<i64, SectionsError> {
    let q = &rep.quiver;
    let order = top_sort(q)?;
    let inc = q.in_edges();
    let mut paths = vec![0u64; q.n_vertices()];
    for &v in &order {
        paths[v] = if inc[v].is_empty() {
            1
        } else {
            inc[v].iter().try_fold(0u64, |acc, &e| {
                acc.checked_add(paths[q.source(e)])
                    .ok_or(SectionsError::PathCountOverflow { vertex: v })
            })?
        };
    }
    let overflow = |v| SectionsError::PathCountOverflow { vertex: v };
    let mut bound: i64 = 0;
    for v in q.minimal_vertices() {
        bound = bound
            .checked_add(i64::try_from(rep.dims[v]).map_err(|_| overflow(v))?)
            .ok_or_else(|| overflow(v))?;
    }
    for v in q.maximal_vertices() {
        let extra = i64::try_from(paths[v] - 1)
            .ok()
            .and_then(|p| p.checked_mul(i64::try_from(rep.dims[v]).ok()?))
            .ok_or_else(|| overflow(v))?;
        bound = bound.checked_sub(extra).ok_or_else(|| overflow(v))?;
    }
    Ok(bound)
}

/// Common fixed space of square matrices of one size: the sections of the
/// one-vertex quiver with one loop per generator.
pub fn group_fixed_space(generators: &[LinMap], tol: Tol) -> Result<Subspace, SectionsError> {
    let Some(first) = generators.first() else {
        return Err(SectionsError::ShapeMismatch(
            "at least one generator is required".into(),
        ));
    };
    let n = first.nrows();
    for (i, g) in generators.iter().enumerate() {
        if g.shape() != (n, n) {
            return Err(SectionsError::ShapeMismatch(format!(
                "generator {i} is {}x{}, expected {n}x{n}",
                g.nrows(),
                g.ncols()
            )));
        }
    }
    let quiver = Quiver::new(1, vec![(0, 0); generators.len()])?;
    let rep = Representation::new(quiver, vec![n], generators.to_vec())?;
    let (space, _) = sections(&rep, tol)?;
    Ok(space.image())
}

/// Vertices reachable from `v` by a breadth-first walk; used by callers that
/// restrict a problem to the part downstream of a vertex.
pub fn downstream(q: &Quiver, v: VertexId) -> Vec<VertexId> {
    let out = q.out_edges();
    let mut seen = vec![false; q.n_vertices()];
    seen[v] = true;
    let mut queue = VecDeque::from([v]);
    let mut order = Vec::new();
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &e in &out[u] {
            let t = q.target(e);
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::principal_angle_distance;
    use nalgebra::dmatrix;

    fn rep(n: usize, edges: Vec<(usize, usize)>, dims: Vec<usize>, maps: Vec<LinMap>) -> Representation {
        Representation::new(Quiver::new(n, edges).unwrap(), dims, maps).unwrap()
    }

    fn agree(rep: &Representation) -> SectionSpace {
        let (space, trace) = sections(rep, Tol::Auto).unwrap();
        let naive = naive_sections(rep, Tol::Auto);
        assert_eq!(space.dim(), naive.dim());
        assert_eq!(trace.root_dim(), space.dim());
        assert!(principal_angle_distance(&space.image(), &naive).unwrap() < 1e-8);
        assert!(space.compatibility_residual(rep) < 1e-10);
        space
    }

    #[test]
    fn jordan_loop_fixes_first_axis() {
        let r = rep(1, vec![(0, 0)], vec![2], vec![dmatrix![1.0, 1.0; 0.0, 1.0]]);
        let red = sc_reduce(&r, None, Tol::Auto).unwrap();
        assert_eq!(red.kernel.dim(), 1);
        assert!(red.kernel.basis()[(1, 0)].abs() < 1e-12);
        let acyc = acyc_reduce(&r, Tol::Auto).unwrap();
        assert_eq!(acyc.quiver.n_edges(), 0);
        assert_eq!(acyc.reduced.space_dims(), vec![1]);
        let s = agree(&r);
        assert_eq!(s.dim(), 1);
    }

    #[test]
    fn two_cycle_kernel_is_fixed_space_of_composite() {
        let a = dmatrix![0.0, 1.0; 1.0, 0.0];
        let b = dmatrix![1.0, 0.0; 0.0, 2.0];
        let r = rep(2, vec![(0, 1), (1, 0)], vec![2, 2], vec![a.clone(), b.clone()]);
        let red = sc_reduce(&r, None, Tol::Auto).unwrap();
        let expect = kernel(&(&b * &a - DMatrix::identity(2, 2)), Tol::Auto);
        assert_eq!(red.kernel.dim(), expect.dim());
        agree(&r);
    }

    #[test]
    fn kronecker_sections_are_kernel_of_difference() {
        let r = rep(
            2,
            vec![(0, 1), (0, 1)],
            vec![2, 2],
            vec![DMatrix::identity(2, 2), dmatrix![1.0, 0.0; 0.0, 2.0]],
        );
        let s = agree(&r);
        assert_eq!(s.dim(), 1);
        let u = s.block(0);
        assert!(u[(1, 0)].abs() < 1e-12);
        assert!((u[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_arrow_sections_are_graphs() {
        let a = dmatrix![1.0, 2.0];
        let b = dmatrix![3.0, -1.0];
        let r = rep(3, vec![(1, 0), (1, 2)], vec![1, 2, 1], vec![a.clone(), b.clone()]);
        let s = agree(&r);
        assert_eq!(s.dim(), 2);
        let x = s.block(1);
        assert!((s.block(0) - &a * &x).norm() < 1e-12);
        assert!((s.block(2) - &b * &x).norm() < 1e-12);
        assert_eq!(dimension_lower_bound(&r).unwrap(), 2);
    }

    #[test]
    fn marginals() {
        let a = dmatrix![1.0, 1.0, 0.0, 0.0; 0.0, 0.0, 1.0, 1.0];
        let b = dmatrix![1.0, 0.0, 1.0, 0.0; 0.0, 1.0, 0.0, 1.0];
        let r = rep(3, vec![(0, 1), (0, 2)], vec![4, 2, 2], vec![a, b]);
        let s = agree(&r);
        assert_eq!(s.dim(), 4);
        let f = s.embedding();
        for j in 0..4 {
            let c = f.column(j);
            assert!((c[4] - c[0] - c[1]).abs() < 1e-12);
            assert!((c[5] - c[2] - c[3]).abs() < 1e-12);
            assert!((c[6] - c[0] - c[2]).abs() < 1e-12);
            assert!((c[7] - c[1] - c[3]).abs() < 1e-12);
        }
    }

    #[test]
    fn edgeless_sections_are_everything() {
        let r = rep(2, vec![], vec![2, 3], vec![]);
        let s = agree(&r);
        assert_eq!(s.dim(), 5);
        let f = s.embedding();
        assert!((f.transpose() * f - DMatrix::identity(5, 5)).norm() < 1e-12);
        assert_eq!(dimension_lower_bound(&r).unwrap(), 5);
    }

    #[test]
    fn commuting_square_matches_corner() {
        let q = Quiver::grid(2, 2);
        let a = dmatrix![1.0, 2.0; 0.0, 1.0];
        let b = dmatrix![2.0, 0.0; 1.0, 1.0];
        let closing = &b * &a * b.clone().try_inverse().unwrap();
        let maps: Vec<LinMap> = q
            .edges()
            .iter()
            .map(|&e| match e {
                (0, 2) => a.clone(),
                (0, 1) => b.clone(),
                (2, 3) => b.clone(),
                (1, 3) => closing.clone(),
                _ => unreachable!(),
            })
            .collect();
        let r = Representation::new(q, vec![2; 4], maps).unwrap();
        let s = agree(&r);
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn arborescence_keeps_root_space() {
        let r = rep(
            4,
            vec![(0, 1), (1, 2), (1, 3)],
            vec![1, 2, 3, 2],
            vec![
                dmatrix![1.0; 2.0],
                dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0],
                dmatrix![0.0, 1.0; 1.0, 0.0],
            ],
        );
        let s = agree(&r);
        assert_eq!(s.dim(), 1);
        assert_eq!(dimension_lower_bound(&r).unwrap(), 1);
    }

    #[test]
    fn diamond_bound() {
        let r = rep(
            4,
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
            vec![2, 2, 2, 2],
            vec![
                dmatrix![1.0, 2.0; 3.0, 4.0],
                dmatrix![0.0, 1.0; 1.0, 1.0],
                dmatrix![2.0, 0.0; 1.0, 1.0],
                dmatrix![1.0, -1.0; 0.0, 3.0],
            ],
        );
        assert_eq!(dimension_lower_bound(&r).unwrap(), 0);
        let s = agree(&r);
        assert!(s.dim() as i64 >= 0);
    }

    #[test]
    fn bound_rejects_cycles() {
        let r = rep(1, vec![(0, 0)], vec![1], vec![dmatrix![1.0]]);
        assert!(matches!(
            dimension_lower_bound(&r),
            Err(SectionsError::Graph(GraphError::CyclicInput { .. }))
        ));
    }

    #[test]
    fn fixed_spaces() {
        let id = group_fixed_space(&[DMatrix::identity(3, 3)], Tol::Auto).unwrap();
        assert_eq!(id.dim(), 3);
        let swap = group_fixed_space(&[dmatrix![0.0, 1.0; 1.0, 0.0]], Tol::Auto).unwrap();
        assert_eq!(swap.dim(), 1);
        let v = swap.basis().column(0);
        assert!((v[0] - v[1]).abs() < 1e-12);
        let c = dmatrix![0.0, 0.0, 1.0; 1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let cyc = group_fixed_space(&[c.clone(), &c * &c], Tol::Auto).unwrap();
        assert_eq!(cyc.dim(), 1);
        let v = cyc.basis().column(0);
        assert!((v[0] - v[2]).abs() < 1e-12 && (v[1] - v[2]).abs() < 1e-12);
        assert!(group_fixed_space(&[], Tol::Auto).is_err());
        assert!(group_fixed_space(&[DMatrix::zeros(2, 3)], Tol::Auto).is_err());
    }

    #[test]
    fn shape_errors() {
        let q = Quiver::new(2, vec![(0, 1)]).unwrap();
        assert!(matches!(
            Representation::new(q.clone(), vec![2, 3], vec![DMatrix::zeros(2, 3)]),
            Err(SectionsError::ShapeMismatch(_))
        ));
        let mut m = DMatrix::zeros(3, 2);
        m[(0, 0)] = f64::NAN;
        assert!(matches!(
            Representation::new(q, vec![2, 3], vec![m]),
            Err(SectionsError::NonFinite { edge: 0 })
        ));
    }

    #[test]
    fn generic_cycle_has_no_sections() {
        let r = rep(
            3,
            vec![(0, 1), (1, 2), (2, 0), (0, 2)],
            vec![2, 3, 2],
            vec![
                dmatrix![1.0, 2.0; 0.5, -1.0; 3.0, 1.0],
                dmatrix![1.0, 0.0, 2.0; -1.0, 1.0, 1.0],
                dmatrix![0.3, 1.0; 2.0, -0.7],
                dmatrix![1.0, 1.0; 2.0, 0.0],
            ],
        );
        let s = agree(&r);
        assert_eq!(s.dim(), 0);
        assert_eq!(s.embedding().shape(), (7, 0));
    }

    #[test]
    fn trace_chain_dimensions() {
        let r = rep(
            4,
            vec![(0, 1), (1, 0), (1, 2), (3, 2)],
            vec![2, 2, 2, 1],
            vec![
                dmatrix![1.0, 0.0; 0.0, 2.0],
                dmatrix![1.0, 0.0; 0.0, 0.5],
                dmatrix![1.0, 1.0; 0.0, 1.0],
                dmatrix![1.0; 1.0],
            ],
        );
        let (s, trace) = sections(&r, Tol::Auto).unwrap();
        let a_star = trace.acyclified().unwrap();
        let a_plus = trace.replaced().unwrap();
        assert_eq!(naive_sections(&r, Tol::Auto).dim(), s.dim());
        assert_eq!(naive_sections(&a_star, Tol::Auto).dim(), s.dim());
        assert_eq!(naive_sections(&a_plus, Tol::Auto).dim(), s.dim());
        assert_eq!(s.provenance().components.len(), 1);
        assert_eq!(s.provenance().tree_edges.len(), 4);
    }
}
