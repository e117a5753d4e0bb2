//! Quiver combinatorics: strongly connected components, ear decompositions,
//! arborescences, augmentation and topological sorting.
//!
//! Vertices and edges are dense integer ids. Every choice made by the
//! algorithms here (roots, ear order, BFS tie-breaks) is resolved by lowest
//! id so the whole pipeline is reproducible.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge {edge} references vertex {vertex}, but the quiver has {n_vertices} vertices")]
    InvalidVertex {
        edge: EdgeId,
        vertex: VertexId,
        n_vertices: usize,
    },
    #[error("quiver is not strongly connected")]
    NotStronglyConnected,
    #[error("quiver contains a directed cycle through edges {:?}", .witness.edges())]
    CyclicInput { witness: QuiverPath },
    #[error("vertices {0:?} are unreachable from the root")]
    Unreachable(Vec<VertexId>),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("vertex {0} is out of range")]
    VertexOutOfRange(VertexId),
}

/// A finite directed multigraph. Loops and parallel edges are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quiver {
    n_vertices: usize,
    edges: Vec<(VertexId, VertexId)>,
}

impl Quiver {
    pub fn new(n_vertices: usize, edges: Vec<(VertexId, VertexId)>) -> Result<Self, GraphError> {
        for (e, &(s, t)) in edges.iter().enumerate() {
            for v in [s, t] {
                if v >= n_vertices {
                    return Err(GraphError::InvalidVertex {
                        edge: e,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
        }
        Ok(Quiver { n_vertices, edges })
    }

    /// Quiver with `n` vertices and no edges.
    pub fn discrete(n: usize) -> Self {
        Quiver {
            n_vertices: n,
            edges: Vec::new(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn source(&self, e: EdgeId) -> VertexId {
        self.edges[e].0
    }

    pub fn target(&self, e: EdgeId) -> VertexId {
        self.edges[e].1
    }

    /// Outgoing edge ids of every vertex, in increasing edge order.
    pub fn out_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut out = vec![Vec::new(); self.n_vertices];
        for (e, &(s, _)) in self.edges.iter().enumerate() {
            out[s].push(e);
        }
        out
    }

    /// Incoming edge ids of every vertex, in increasing edge order.
    pub fn in_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut inc = vec![Vec::new(); self.n_vertices];
        for (e, &(_, t)) in self.edges.iter().enumerate() {
            inc[t].push(e);
        }
        inc
    }

    pub fn has_loops(&self) -> bool {
        self.edges.iter().any(|&(s, t)| s == t)
    }

    /// Vertices with no incoming edge.
    pub fn minimal_vertices(&self) -> Vec<VertexId> {
        let inc = self.in_edges();
        (0..self.n_vertices).filter(|&v| inc[v].is_empty()).collect()
    }

    /// Vertices with no outgoing edge.
    pub fn maximal_vertices(&self) -> Vec<VertexId> {
        let out = self.out_edges();
        (0..self.n_vertices).filter(|&v| out[v].is_empty()).collect()
    }

    /// Vertices reachable from `from` (including `from`).
    pub fn reachable_from(&self, from: VertexId) -> Vec<bool> {
        let out = self.out_edges();
        let mut seen = vec![false; self.n_vertices];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &e in &out[v] {
                let t = self.target(e);
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    /// Every vertex reaches every other vertex. A single vertex counts as
    /// strongly connected only when it carries a loop.
    pub fn is_strongly_connected(&self) -> bool {
        match self.n_vertices {
            0 => false,
            1 => self.has_loops(),
            _ => {
                let fwd = self.reachable_from(0);
                if fwd.iter().any(|&r| !r) {
                    return false;
                }
                let rev = self.reversed().reachable_from(0);
                rev.iter().all(|&r| r)
            }
        }
    }

    pub fn reversed(&self) -> Quiver {
        Quiver {
            n_vertices: self.n_vertices,
            edges: self.edges.iter().map(|&(s, t)| (t, s)).collect(),
        }
    }

    /// Relabel vertices and edges: vertex `v` becomes `vperm[v]`, edge `e`
    /// becomes `eperm[e]`.
    pub fn permuted(&self, vperm: &[VertexId], eperm: &[EdgeId]) -> Quiver {
        let mut edges = vec![(0, 0); self.edges.len()];
        for (e, &(s, t)) in self.edges.iter().enumerate() {
            edges[eperm[e]] = (vperm[s], vperm[t]);
        }
        Quiver {
            n_vertices: self.n_vertices,
            edges,
        }
    }

    /// The `rows × cols` grid quiver: vertex `(i, j)` (zero-based) has id
    /// `i * cols + j` and edges to `(i + 1, j)` and `(i, j + 1)`.
    pub fn grid(rows: usize, cols: usize) -> Quiver {
        let id = |i: usize, j: usize| i * cols + j;
        let mut edges = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if i + 1 < rows {
                    edges.push((id(i, j), id(i + 1, j)));
                }
                if j + 1 < cols {
                    edges.push((id(i, j), id(i, j + 1)));
                }
            }
        }
        Quiver {
            n_vertices: rows * cols,
            edges,
        }
    }
}

/// A path: distinct edges with distinct sources, each starting where the
/// previous one ends. The empty path at `v` is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuiverPath {
    edges: Vec<EdgeId>,
    source: VertexId,
    target: VertexId,
}

impl QuiverPath {
    pub fn empty(v: VertexId) -> Self {
        QuiverPath {
            edges: Vec::new(),
            source: v,
            target: v,
        }
    }

    pub fn new(q: &Quiver, edges: Vec<EdgeId>) -> Result<Self, GraphError> {
        let Some(&first) = edges.first() else {
            return Err(GraphError::InvalidPath(
                "use QuiverPath::empty for the empty path".into(),
            ));
        };
        let mut sources = BTreeSet::new();
        for (i, &e) in edges.iter().enumerate() {
            if e >= q.n_edges() {
                return Err(GraphError::InvalidPath(format!("edge {e} out of range")));
            }
            if !sources.insert(q.source(e)) {
                return Err(GraphError::InvalidPath(format!(
                    "source vertex {} repeats",
                    q.source(e)
                )));
            }
            if i > 0 && q.target(edges[i - 1]) != q.source(e) {
                return Err(GraphError::InvalidPath(format!(
                    "edge {} does not start where edge {} ends",
                    e,
                    edges[i - 1]
                )));
            }
        }
        let source = q.source(first);
        let target = q.target(*edges.last().unwrap());
        Ok(QuiverPath {
            edges,
            source,
            target,
        })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn source(&self) -> VertexId {
        self.source
    }

    pub fn target(&self) -> VertexId {
        self.target
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_cycle(&self) -> bool {
        !self.edges.is_empty() && self.source == self.target
    }
}

/// A subquiver given by ids of the parent quiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subquiver {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeId>,
}

/// Maximal strongly connected subquivers. Vertices lying on no cycle are
/// omitted; each component carries every edge internal to it (loops
/// included). Components are sorted by their smallest vertex id.
pub fn tarjan_msc(q: &Quiver) -> Vec<Subquiver> {
    let mut g = DiGraph::<(), ()>::with_capacity(q.n_vertices(), q.n_edges());
    let nodes: Vec<_> = (0..q.n_vertices()).map(|_| g.add_node(())).collect();
    for &(s, t) in q.edges() {
        g.add_edge(nodes[s], nodes[t], ());
    }
    let mut comp_of = vec![usize::MAX; q.n_vertices()];
    let mut comps: Vec<Vec<VertexId>> = Vec::new();
    for scc in tarjan_scc(&g) {
        let mut vs: Vec<VertexId> = scc.into_iter().map(|n| n.index()).collect();
        vs.sort_unstable();
        for &v in &vs {
            comp_of[v] = comps.len();
        }
        comps.push(vs);
    }
    let mut comp_edges = vec![Vec::new(); comps.len()];
    for (e, &(s, t)) in q.edges().iter().enumerate() {
        if comp_of[s] == comp_of[t] {
            comp_edges[comp_of[s]].push(e);
        }
    }
    let mut out: Vec<Subquiver> = comps
        .into_iter()
        .zip(comp_edges)
        .filter(|(vs, es)| vs.len() > 1 || !es.is_empty())
        .map(|(vertices, edges)| Subquiver { vertices, edges })
        .collect();
    out.sort_by_key(|c| c.vertices[0]);
    out
}

/// Result of [`induced_subquiver`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedSubquiver {
    pub quiver: Quiver,
    /// `old_to_new[v]` is the new id of old vertex `v`, if kept.
    pub old_to_new: Vec<Option<VertexId>>,
    pub new_to_old: Vec<VertexId>,
    /// Old edge id of each new edge.
    pub edge_new_to_old: Vec<EdgeId>,
}

/// Keep the vertices selected by `keep` and every edge among them.
/// Relative order of vertices and edges is preserved.
pub fn induced_subquiver(q: &Quiver, keep: impl Fn(VertexId) -> bool) -> InducedSubquiver {
    let mut old_to_new = vec![None; q.n_vertices()];
    let mut new_to_old = Vec::new();
    for v in 0..q.n_vertices() {
        if keep(v) {
            old_to_new[v] = Some(new_to_old.len());
            new_to_old.push(v);
        }
    }
    let mut edges = Vec::new();
    let mut edge_new_to_old = Vec::new();
    for (e, &(s, t)) in q.edges().iter().enumerate() {
        if let (Some(ns), Some(nt)) = (old_to_new[s], old_to_new[t]) {
            edges.push((ns, nt));
            edge_new_to_old.push(e);
        }
    }
    InducedSubquiver {
        quiver: Quiver {
            n_vertices: new_to_old.len(),
            edges,
        },
        old_to_new,
        new_to_old,
        edge_new_to_old,
    }
}

/// Subquiver with all vertices and the listed edges, renumbered densely.
/// Returns the quiver and the old id of each new edge.
pub fn edge_subquiver(q: &Quiver, keep: impl Fn(EdgeId) -> bool) -> (Quiver, Vec<EdgeId>) {
    let mut edges = Vec::new();
    let mut origin = Vec::new();
    for (e, &st) in q.edges().iter().enumerate() {
        if keep(e) {
            edges.push(st);
            origin.push(e);
        }
    }
    (
        Quiver {
            n_vertices: q.n_vertices(),
            edges,
        },
        origin,
    )
}

/// Topological order, smallest available vertex first. On failure the
/// error carries a directed cycle as witness.
pub fn top_sort(q: &Quiver) -> Result<Vec<VertexId>, GraphError> {
    let mut indeg = vec![0usize; q.n_vertices()];
    for &(_, t) in q.edges() {
        indeg[t] += 1;
    }
    let out = q.out_edges();
    let mut ready: BinaryHeap<Reverse<VertexId>> = (0..q.n_vertices())
        .filter(|&v| indeg[v] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(q.n_vertices());
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &e in &out[v] {
            let t = q.target(e);
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.push(Reverse(t));
            }
        }
    }
    if order.len() == q.n_vertices() {
        return Ok(order);
    }
    Err(GraphError::CyclicInput {
        witness: cycle_witness(q, &indeg),
    })
}

// Every vertex left with positive in-degree after Kahn's algorithm has an
// incoming edge from another such vertex; walking those backwards must
// eventually repeat a vertex.
fn cycle_witness(q: &Quiver, indeg: &[usize]) -> QuiverPath {
    let inc = q.in_edges();
    let start = (0..q.n_vertices()).find(|&v| indeg[v] > 0).unwrap();
    let mut pos = vec![usize::MAX; q.n_vertices()];
    let mut walk: Vec<EdgeId> = Vec::new();
    let mut v = start;
    loop {
        pos[v] = walk.len();
        let e = *inc[v].iter().find(|&&e| indeg[q.source(e)] > 0).unwrap();
        walk.push(e);
        v = q.source(e);
        if pos[v] != usize::MAX {
            let mut cycle: Vec<EdgeId> = walk[pos[v]..].to_vec();
            cycle.reverse();
            return QuiverPath::new(q, cycle).expect("backward walk yields a simple cycle");
        }
    }
}

pub fn is_acyclic(q: &Quiver) -> bool {
    top_sort(q).is_ok()
}

/// A quiver with a root such that every other vertex has exactly one
/// incoming edge and is reachable from the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arborescence {
    quiver: Quiver,
    root: VertexId,
    parent: Vec<Option<EdgeId>>,
}

impl Arborescence {
    /// Validate `q` as an arborescence rooted at `root`.
    pub fn new(q: Quiver, root: VertexId) -> Result<Self, GraphError> {
        if root >= q.n_vertices() {
            return Err(GraphError::VertexOutOfRange(root));
        }
        let inc = q.in_edges();
        if !inc[root].is_empty() {
            return Err(GraphError::InvalidPath(format!(
                "root {root} has an incoming edge"
            )));
        }
        let mut parent = vec![None; q.n_vertices()];
        for v in 0..q.n_vertices() {
            if v == root {
                continue;
            }
            match inc[v].as_slice() {
                [e] => parent[v] = Some(*e),
                _ => {
                    return Err(GraphError::InvalidPath(format!(
                        "vertex {v} has {} incoming edges",
                        inc[v].len()
                    )))
                }
            }
        }
        let reach = q.reachable_from(root);
        let unreachable: Vec<_> = (0..q.n_vertices()).filter(|&v| !reach[v]).collect();
        if !unreachable.is_empty() {
            return Err(GraphError::Unreachable(unreachable));
        }
        Ok(Arborescence {
            quiver: q,
            root,
            parent,
        })
    }

    pub fn quiver(&self) -> &Quiver {
        &self.quiver
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    /// Incoming tree edge of `v`; `None` for the root.
    pub fn parent_edge(&self, v: VertexId) -> Option<EdgeId> {
        self.parent[v]
    }

    /// The unique path from the root to `v`.
    pub fn path_to(&self, v: VertexId) -> QuiverPath {
        let mut edges = Vec::new();
        let mut cur = v;
        while let Some(e) = self.parent[cur] {
            edges.push(e);
            cur = self.quiver.source(e);
        }
        if edges.is_empty() {
            return QuiverPath::empty(v);
        }
        edges.reverse();
        QuiverPath::new(&self.quiver, edges).expect("tree paths are simple")
    }

    /// Vertices in breadth-first order from the root (parents first).
    pub fn bfs_order(&self) -> Vec<VertexId> {
        let out = self.quiver.out_edges();
        let mut order = vec![self.root];
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            for &e in &out[v] {
                order.push(self.quiver.target(e));
            }
            i += 1;
        }
        order
    }
}

/// One ear: a cycle (first ear or a later closed ear) or an open path whose
/// endpoints already belong to earlier ears.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ear {
    pub edges: Vec<EdgeId>,
    pub source: VertexId,
    pub target: VertexId,
}

impl Ear {
    /// The ear's last edge, which ends at its target.
    pub fn terminal_edge(&self) -> Option<EdgeId> {
        self.edges.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarDecomposition {
    quiver: Quiver,
    ears: Vec<Ear>,
    /// Ear index (zero-based) of every edge.
    depth: Vec<usize>,
    /// Index of the first ear containing every vertex.
    level: Vec<usize>,
    terminal: Vec<EdgeId>,
    root: VertexId,
}

impl EarDecomposition {
    pub fn quiver(&self) -> &Quiver {
        &self.quiver
    }

    pub fn ears(&self) -> &[Ear] {
        &self.ears
    }

    pub fn depth(&self, e: EdgeId) -> usize {
        self.depth[e]
    }

    pub fn level(&self, v: VertexId) -> usize {
        self.level[v]
    }

    pub fn terminal_edges(&self) -> &[EdgeId] {
        &self.terminal
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn is_terminal(&self, e: EdgeId) -> bool {
        self.terminal.contains(&e)
    }

    /// Vertices of ear `i` in walking order, endpoints included.
    pub fn ear_vertices(&self, i: usize) -> Vec<VertexId> {
        let ear = &self.ears[i];
        let mut vs = vec![ear.source];
        vs.extend(ear.edges.iter().map(|&e| self.quiver.target(e)));
        vs
    }

    /// The increasing path from the root to `v` using edges of depth at
    /// most `level(v)`.
    pub fn increasing_path(&self, v: VertexId) -> QuiverPath {
        let edges = self.increasing_edges(v);
        if edges.is_empty() {
            QuiverPath::empty(v)
        } else {
            QuiverPath::new(&self.quiver, edges).expect("increasing paths are simple")
        }
    }

    fn increasing_edges(&self, v: VertexId) -> Vec<EdgeId> {
        if v == self.root {
            return Vec::new();
        }
        let i = self.level[v];
        let ear = &self.ears[i];
        let mut edges = if i == 0 {
            Vec::new()
        } else {
            self.increasing_edges(ear.source)
        };
        for &e in &ear.edges {
            edges.push(e);
            if self.quiver.target(e) == v {
                break;
            }
        }
        edges
    }

    /// The decreasing path from `v` back to the root using edges of depth at
    /// most `level(v)`.
    pub fn decreasing_path(&self, v: VertexId) -> QuiverPath {
        let edges = self.decreasing_edges(v);
        if edges.is_empty() {
            QuiverPath::empty(v)
        } else {
            QuiverPath::new(&self.quiver, edges).expect("decreasing paths are simple")
        }
    }

    fn decreasing_edges(&self, v: VertexId) -> Vec<EdgeId> {
        if v == self.root {
            return Vec::new();
        }
        let i = self.level[v];
        let ear = &self.ears[i];
        let start = ear
            .edges
            .iter()
            .position(|&e| self.quiver.source(e) == v)
            .expect("vertex lies inside its first ear");
        let mut edges: Vec<EdgeId> = ear.edges[start..].to_vec();
        if i > 0 {
            edges.extend(self.decreasing_edges(ear.target));
        }
        edges
    }
}

/// Deterministic ear decomposition of a strongly connected quiver.
///
/// The first ear is the cycle formed by the lowest-id edge (or the lowest-id
/// edge leaving `root_hint`) closed by a BFS-shortest return path. Each
/// later ear starts with the lowest-id unused edge leaving the covered
/// vertex set and follows a BFS-shortest path through new vertices back
/// into it.
pub fn ear_decompose(
    r: &Quiver,
    root_hint: Option<VertexId>,
) -> Result<EarDecomposition, GraphError> {
    if !r.is_strongly_connected() {
        return Err(GraphError::NotStronglyConnected);
    }
    let n = r.n_vertices();
    let out = r.out_edges();

    let first_edge = match root_hint {
        Some(h) if h >= n => return Err(GraphError::VertexOutOfRange(h)),
        Some(h) => out[h][0],
        None => 0,
    };
    let root = r.source(first_edge);

    let mut covered = vec![false; n];
    let mut used = vec![false; r.n_edges()];
    let mut ears = Vec::new();

    let first = {
        let mut edges = vec![first_edge];
        if r.target(first_edge) != root {
            let back = shortest_path_into(r, &out, r.target(first_edge), |v| v == root, &used)
                .expect("strongly connected");
            edges.extend(back);
        }
        edges
    };
    for &e in &first {
        used[e] = true;
        covered[r.source(e)] = true;
    }
    covered[root] = true;
    ears.push(Ear {
        edges: first,
        source: root,
        target: root,
    });

    loop {
        let next = (0..r.n_edges()).find(|&e| !used[e] && covered[r.source(e)]);
        let Some(e) = next else { break };
        let mut edges = vec![e];
        let s = r.source(e);
        let t = r.target(e);
        if !covered[t] {
            // BFS over uncovered vertices until an edge lands in the covered set.
            let back = shortest_path_into(r, &out, t, |v| covered[v], &used)
                .expect("strongly connected");
            edges.extend(back);
        }
        let target = r.target(*edges.last().unwrap());
        for &f in &edges {
            used[f] = true;
            covered[r.target(f)] = true;
        }
        ears.push(Ear {
            edges,
            source: s,
            target,
        });
    }

    let mut depth = vec![0; r.n_edges()];
    let mut level = vec![usize::MAX; n];
    level[root] = 0;
    for (i, ear) in ears.iter().enumerate() {
        for &e in &ear.edges {
            depth[e] = i;
            let t = r.target(e);
            if level[t] == usize::MAX {
                level[t] = i;
            }
        }
    }
    let terminal = ears.iter().filter_map(Ear::terminal_edge).collect();
    Ok(EarDecomposition {
        quiver: r.clone(),
        ears,
        depth,
        level,
        terminal,
        root,
    })
}

// BFS from `from` along unused edges, only passing through vertices that do
// not satisfy `stop`; returns the edge list of the first path reaching a
// vertex satisfying `stop`. Ties resolved by edge id.
fn shortest_path_into(
    q: &Quiver,
    out: &[Vec<EdgeId>],
    from: VertexId,
    stop: impl Fn(VertexId) -> bool,
    used: &[bool],
) -> Option<Vec<EdgeId>> {
    let mut via: Vec<Option<EdgeId>> = vec![None; q.n_vertices()];
    let mut seen = vec![false; q.n_vertices()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &e in &out[v] {
            if used[e] {
                continue;
            }
            let t = q.target(e);
            if stop(t) {
                let mut path = vec![e];
                let mut cur = v;
                while let Some(p) = via[cur] {
                    path.push(p);
                    cur = q.source(p);
                }
                path.reverse();
                return Some(path);
            }
            if !seen[t] {
                seen[t] = true;
                via[t] = Some(e);
                queue.push_back(t);
            }
        }
    }
    None
}

/// Arborescence obtained by deleting the terminal edges. Edge ids of the
/// result index the surviving edges in their original relative order; use
/// [`InducedArborescence::edge_origin`] to map back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedArborescence {
    pub arborescence: Arborescence,
    pub edge_origin: Vec<EdgeId>,
}

pub fn induced_arborescence(d: &EarDecomposition) -> InducedArborescence {
    let (q, edge_origin) = edge_subquiver(d.quiver(), |e| !d.is_terminal(e));
    let arborescence =
        Arborescence::new(q, d.root()).expect("removing terminal edges yields an arborescence");
    InducedArborescence {
        arborescence,
        edge_origin,
    }
}

/// Result of [`augment`]: the augmented quiver, its new root, and the ids of
/// the new edges (one per minimal vertex, in increasing vertex order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Augmented {
    pub quiver: Quiver,
    pub root: VertexId,
    pub new_edges: Vec<EdgeId>,
    pub minimal: Vec<VertexId>,
}

/// Add a root vertex (id `n`) with one edge into every minimal vertex.
pub fn augment(q: &Quiver) -> Result<Augmented, GraphError> {
    top_sort(q)?;
    let minimal = q.minimal_vertices();
    let root = q.n_vertices();
    let mut edges = q.edges().to_vec();
    let mut new_edges = Vec::with_capacity(minimal.len());
    for &v in &minimal {
        new_edges.push(edges.len());
        edges.push((root, v));
    }
    Ok(Augmented {
        quiver: Quiver {
            n_vertices: root + 1,
            edges,
        },
        root,
        new_edges,
        minimal,
    })
}

/// Breadth-first spanning arborescence rooted at `root`. Returns the tree and
/// the id in `q` of each tree edge.
pub fn spanning_arborescence(
    q: &Quiver,
    root: VertexId,
) -> Result<(Arborescence, Vec<EdgeId>), GraphError> {
    if root >= q.n_vertices() {
        return Err(GraphError::VertexOutOfRange(root));
    }
    let out = q.out_edges();
    let mut tree_edge: Vec<Option<EdgeId>> = vec![None; q.n_vertices()];
    let mut seen = vec![false; q.n_vertices()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &e in &out[v] {
            let t = q.target(e);
            if !seen[t] {
                seen[t] = true;
                tree_edge[t] = Some(e);
                queue.push_back(t);
            }
        }
    }
    let unreachable: Vec<_> = (0..q.n_vertices()).filter(|&v| !seen[v]).collect();
    if !unreachable.is_empty() {
        return Err(GraphError::Unreachable(unreachable));
    }
    let mut kept: Vec<EdgeId> = tree_edge.into_iter().flatten().collect();
    kept.sort_unstable();
    let keep: BTreeSet<EdgeId> = kept.iter().copied().collect();
    let (tq, origin) = edge_subquiver(q, |e| keep.contains(&e));
    let arb = Arborescence::new(tq, root)?;
    Ok((arb, origin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: usize, edges: &[(usize, usize)]) -> Quiver {
        Quiver::new(n, edges.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_vertex() {
        assert!(matches!(
            Quiver::new(2, vec![(0, 2)]),
            Err(GraphError::InvalidVertex { vertex: 2, .. })
        ));
    }

    #[test]
    fn msc_single_loop() {
        let msc = tarjan_msc(&q(1, &[(0, 0)]));
        assert_eq!(
            msc,
            vec![Subquiver {
                vertices: vec![0],
                edges: vec![0]
            }]
        );
    }

    #[test]
    fn msc_kronecker_is_empty() {
        assert!(tarjan_msc(&q(2, &[(0, 1), (0, 1)])).is_empty());
    }

    #[test]
    fn ear_single_loop() {
        let d = ear_decompose(&q(1, &[(0, 0)]), None).unwrap();
        assert_eq!(d.ears().len(), 1);
        assert_eq!(d.terminal_edges(), &[0]);
        let t = induced_arborescence(&d);
        assert_eq!(t.arborescence.quiver().n_edges(), 0);
        assert_eq!(t.arborescence.quiver().n_vertices(), 1);
    }

    #[test]
    fn ear_three_cycle() {
        let d = ear_decompose(&q(3, &[(0, 1), (1, 2), (2, 0)]), None).unwrap();
        assert_eq!(d.ears().len(), 1);
        assert_eq!(d.root(), 0);
        assert_eq!(d.terminal_edges(), &[2]);
        let t = induced_arborescence(&d);
        assert_eq!(t.arborescence.path_to(2).len(), 2);
    }

    #[test]
    fn ear_root_hint() {
        let d = ear_decompose(&q(3, &[(0, 1), (1, 2), (2, 0)]), Some(1)).unwrap();
        assert_eq!(d.root(), 1);
        assert_eq!(d.terminal_edges(), &[0]);
    }

    #[test]
    fn ear_rejects_non_strongly_connected() {
        assert_eq!(
            ear_decompose(&q(2, &[(0, 1)]), None),
            Err(GraphError::NotStronglyConnected)
        );
        assert_eq!(
            ear_decompose(&q(1, &[]), None),
            Err(GraphError::NotStronglyConnected)
        );
    }

    #[test]
    fn top_sort_chain_and_discrete() {
        assert_eq!(top_sort(&q(3, &[(0, 1), (1, 2)])).unwrap(), vec![0, 1, 2]);
        assert_eq!(top_sort(&Quiver::discrete(4)).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn top_sort_two_cycle_witness() {
        let quiv = q(2, &[(0, 1), (1, 0)]);
        match top_sort(&quiv) {
            Err(GraphError::CyclicInput { witness }) => {
                assert!(witness.is_cycle());
                let mut es = witness.edges().to_vec();
                es.sort();
                assert_eq!(es, vec![0, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn top_sort_loop_witness() {
        match top_sort(&q(2, &[(0, 1), (1, 1)])) {
            Err(GraphError::CyclicInput { witness }) => assert_eq!(witness.edges(), &[1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn augment_examples() {
        let a = augment(&Quiver::discrete(1)).unwrap();
        assert_eq!(a.root, 1);
        assert_eq!(a.quiver.edges(), &[(1, 0)]);

        // U <- V -> W with U=0, V=1, W=2
        let a = augment(&q(3, &[(1, 0), (1, 2)])).unwrap();
        assert_eq!(a.minimal, vec![1]);
        assert_eq!(a.new_edges, vec![2]);
        assert_eq!(a.quiver.edges()[2], (3, 1));

        assert!(matches!(
            augment(&q(1, &[(0, 0)])),
            Err(GraphError::CyclicInput { .. })
        ));
    }

    #[test]
    fn spanning_arborescence_diamond() {
        // rho=0, a=1, b=2, c=3
        let quiv = q(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let (arb, origin) = spanning_arborescence(&quiv, 0).unwrap();
        assert_eq!(origin, vec![0, 1, 2]);
        assert_eq!(arb.quiver().n_edges(), 3);
    }

    #[test]
    fn spanning_arborescence_of_arborescence_is_identity() {
        let quiv = q(4, &[(0, 1), (1, 2), (1, 3)]);
        let (arb, origin) = spanning_arborescence(&quiv, 0).unwrap();
        assert_eq!(origin, vec![0, 1, 2]);
        assert_eq!(arb.quiver(), &quiv);
    }

    #[test]
    fn spanning_arborescence_unreachable() {
        assert_eq!(
            spanning_arborescence(&q(3, &[(0, 1)]), 0).unwrap_err(),
            GraphError::Unreachable(vec![2])
        );
    }

    #[test]
    fn induced_subquiver_examples() {
        let quiv = q(3, &[(0, 1), (1, 2)]);
        let all = induced_subquiver(&quiv, |_| true);
        assert_eq!(all.quiver, quiv);
        assert_eq!(all.new_to_old, vec![0, 1, 2]);
        let none = induced_subquiver(&quiv, |_| false);
        assert_eq!(none.quiver.n_vertices(), 0);
        assert_eq!(none.quiver.n_edges(), 0);

        // 2x2 grid, one-based (1,1),(1,2) are ids 0 and 1.
        let grid = Quiver::grid(2, 2);
        let sub = induced_subquiver(&grid, |v| v == 0 || v == 1);
        assert_eq!(sub.quiver.edges(), &[(0, 1)]);
    }

    #[test]
    fn path_validation() {
        let quiv = q(3, &[(0, 1), (1, 2), (2, 0)]);
        assert!(QuiverPath::new(&quiv, vec![0, 1]).is_ok());
        assert!(QuiverPath::new(&quiv, vec![0, 2]).is_err());
        assert!(QuiverPath::new(&quiv, vec![0, 1, 2]).unwrap().is_cycle());
        assert!(QuiverPath::new(&quiv, vec![]).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = Quiver::grid(3, 3);
        assert_eq!(g.n_vertices(), 9);
        assert_eq!(g.n_edges(), 12);
        assert_eq!(g.minimal_vertices(), vec![0]);
        assert_eq!(g.maximal_vertices(), vec![8]);
    }
}
