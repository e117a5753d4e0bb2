//! Generated timing family comparing the reduction pipeline with the dense
//! kernel of the constraint matrix.
//!
//! Instances are sparse acyclic quivers with a single source: every vertex
//! after the first has one parent among its three predecessors, plus about
//! `n / 4` extra forward edges. All vertex spaces have the same dimension.
//! Maps are `G_t G_s⁻¹` for well-conditioned random `G_v`, so every path
//! between two vertices composes to the same map and the sections are
//! non-trivial.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graph::Quiver;
use crate::sections::{naive_sections, sections, Representation, SectionsError};
use crate::subspace::Tol;

pub const DEFAULT_SIZES: [usize; 4] = [10, 20, 40, 80];
pub const DEFAULT_DIM: usize = 4;

pub fn bench_instance(n_vertices: usize, dim: usize, seed: u64) -> Representation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n_vertices as u64).wrapping_mul(0x9e37_79b9));
    let mut edges = Vec::new();
    for v in 1..n_vertices {
        let lo = v.saturating_sub(3);
        edges.push((rng.random_range(lo..v), v));
    }
    for _ in 0..n_vertices / 4 {
        if n_vertices < 3 {
            break;
        }
        let t = rng.random_range(2..n_vertices);
        let s = rng.random_range(0..t - 1);
        edges.push((s, t));
    }
    let g: Vec<DMatrix<f64>> = (0..n_vertices)
        .map(|_| {
            let noise = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            DMatrix::identity(dim, dim) + noise * 0.25
        })
        .collect();
    let inv: Vec<DMatrix<f64>> = g
        .iter()
        .map(|m| m.clone().try_inverse().expect("perturbed identity is invertible"))
        .collect();
    let maps = edges.iter().map(|&(s, t)| &g[t] * &inv[s]).collect();
    let quiver = Quiver::new(n_vertices, edges).expect("edges are in range");
    Representation::new(quiver, vec![dim; n_vertices], maps).expect("shapes match")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub section_dim: usize,
    pub naive_dim: usize,
    pub pipeline_seconds: f64,
    pub naive_seconds: f64,
    pub speedup: f64,
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let v = f();
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(v);
    }
    (out.expect("at least one run"), best)
}

/// Time both methods on each size; each timing is the best of `repeats`.
pub fn run_bench(
    sizes: &[usize],
    dim: usize,
    repeats: usize,
    seed: u64,
    tol: Tol,
) -> Result<Vec<BenchRow>, SectionsError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let rep = bench_instance(n, dim, seed);
        let (res, pipeline_seconds) = best_of(repeats, || sections(&rep, tol));
        let (space, _) = res?;
        let (naive, naive_seconds) = best_of(repeats, || naive_sections(&rep, tol));
        rows.push(BenchRow {
            n_vertices: n,
            n_edges: rep.quiver().n_edges(),
            section_dim: space.dim(),
            naive_dim: naive.dim(),
            pipeline_seconds,
            naive_seconds,
            speedup: naive_seconds / pipeline_seconds.max(1e-12),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log t` against `log n`.
pub fn loglog_slope(ns: &[usize], ts: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| t.max(1e-12).ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
