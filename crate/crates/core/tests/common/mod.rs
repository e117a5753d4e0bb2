//! Shared test helpers: exact rational linear algebra and a seeded corpus of
//! small integer representations.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use qsec::graph::Quiver;
use qsec::sections::Representation;
use qsec::subspace::{LinMap, Subspace, Tol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Q = BigRational;
/// Row-major exact matrix.
pub type QMat = Vec<Vec<Q>>;

pub fn q_of(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

pub fn to_q(m: &DMatrix<f64>) -> QMat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| q_of(m[(i, j)])).collect())
        .collect()
}

pub fn q_zeros(r: usize, c: usize) -> QMat {
    vec![vec![Q::zero(); c]; r]
}

pub fn q_mul(a: &QMat, b: &QMat, inner: usize, cols: usize) -> QMat {
    let mut out = q_zeros(a.len(), cols);
    for i in 0..a.len() {
        for k in 0..inner {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..cols {
                let t = &a[i][k] * &b[k][j];
                out[i][j] += t;
            }
        }
    }
    out
}

/// Reduced row echelon form and pivot columns.
pub fn rref(mut m: QMat, cols: usize) -> (QMat, Vec<usize>) {
    let mut pivots = Vec::new();
    let mut row = 0;
    for c in 0..cols {
        let Some(p) = (row..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = Q::one() / &m[row][c];
        for x in m[row].iter_mut() {
            *x *= &inv;
        }
        for i in 0..m.len() {
            if i != row && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let t = &f * &m[row][j];
                    m[i][j] -= t;
                }
            }
        }
        pivots.push(c);
        row += 1;
        if row == m.len() {
            break;
        }
    }
    (m, pivots)
}

pub fn q_rank(m: &QMat, cols: usize) -> usize {
    rref(m.clone(), cols).1.len()
}

/// Basis of the null space, as column vectors.
pub fn q_nullspace(m: &QMat, cols: usize) -> Vec<Vec<Q>> {
    let (r, pivots) = rref(m.clone(), cols);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Q::zero(); cols];
            v[f] = Q::one();
            for (i, &p) in pivots.iter().enumerate() {
                v[p] = -r[i][f].clone();
            }
            v
        })
        .collect()
}

pub fn cols_to_f64(cols: &[Vec<Q>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i].to_f64().unwrap())
}

/// Orthonormalised span of exact column vectors.
pub fn exact_span(cols: &[Vec<Q>], n: usize) -> Subspace {
    Subspace::span(&cols_to_f64(cols, n), Tol::Relative(1e-12))
}

/// Exact constraint matrix of a representation with integer entries.
pub fn exact_constraints(rep: &Representation) -> (QMat, usize) {
    let layout = rep.layout();
    let n = layout.total();
    let mut rows = Vec::new();
    for (e, &(s, t)) in rep.quiver().edges().iter().enumerate() {
        let a = to_q(rep.map(e));
        for i in 0..rep.dim(t) {
            let mut row = vec![Q::zero(); n];
            for j in 0..rep.dim(s) {
                row[layout.offset(s) + j] -= a[i][j].clone();
            }
            row[layout.offset(t) + i] += Q::one();
            rows.push(row);
        }
    }
    (rows, n)
}

/// Exact space of sections.
pub fn exact_sections(rep: &Representation) -> Vec<Vec<Q>> {
    let (m, n) = exact_constraints(rep);
    if m.is_empty() {
        return (0..n)
            .map(|i| {
                let mut v = vec![Q::zero(); n];
                v[i] = Q::one();
                v
            })
            .collect();
    }
    q_nullspace(&m, n)
}

pub fn q_abs_max(m: &QMat) -> f64 {
    m.iter()
        .flatten()
        .map(|x| x.abs().to_f64().unwrap())
        .fold(0.0, f64::max)
}

pub fn random_int_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: i32, hi: i32) -> LinMap {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..=hi) as f64)
}

/// Integer edge map of one of several structured kinds, so that sections
/// are frequently non-trivial.
fn structured_map(rng: &mut ChaCha8Rng, r: usize, c: usize) -> LinMap {
    match rng.random_range(0..6) {
        0 => random_int_matrix(rng, r, c, -3, 3),
        1 => DMatrix::from_fn(r, c, |i, j| if i == j { 1.0 } else { 0.0 }),
        2 => {
            let u = random_int_matrix(rng, r, 1, -2, 2);
            let v = random_int_matrix(rng, 1, c, -2, 2);
            u * v
        }
        3 => {
            let mut m = DMatrix::zeros(r, c);
            for j in 0..c {
                if r > 0 {
                    m[(rng.random_range(0..r), j)] = 1.0;
                }
            }
            m
        }
        4 => DMatrix::zeros(r, c),
        _ => DMatrix::from_fn(r, c, |_, _| {
            if rng.random_bool(0.3) {
                rng.random_range(-1..=1) as f64
            } else {
                0.0
            }
        }),
    }
}

pub fn random_representation(rng: &mut ChaCha8Rng) -> Representation {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(0..=7);
    let edges: Vec<(usize, usize)> = (0..m)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(0..=3)).collect();
    let maps = edges
        .iter()
        .map(|&(s, t)| structured_map(rng, dims[t], dims[s]))
        .collect();
    Representation::new(Quiver::new(n, edges).unwrap(), dims, maps).unwrap()
}

/// Random acyclic representation: edges only go from lower to higher ids.
pub fn random_acyclic_representation(rng: &mut ChaCha8Rng) -> Representation {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=8);
    let mut edges = Vec::new();
    for _ in 0..m {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a.min(b), a.max(b)));
        }
    }
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(0..=3)).collect();
    let maps = edges
        .iter()
        .map(|&(s, t)| structured_map(rng, dims[t], dims[s]))
        .collect();
    Representation::new(Quiver::new(n, edges).unwrap(), dims, maps).unwrap()
}

/// The fixed integer corpus used by the oracle and chain tests.
pub fn corpus() -> Vec<Representation> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ec7_1045);
    let mut out: Vec<Representation> = (0..300).map(|_| random_representation(&mut rng)).collect();
    out.extend((0..100).map(|_| random_acyclic_representation(&mut rng)));
    out
}

pub fn acyclic_corpus() -> Vec<Representation> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac7_c11c);
    (0..200)
        .map(|_| random_acyclic_representation(&mut rng))
        .collect()
}

/// Gaussian samples with a random anisotropic covariance.
pub fn gaussian_data(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mix = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
    let z = DMatrix::<f64>::from_fn(m, n, |_, _| StandardNormal.sample(&mut *rng));
    z * mix
}

/// A representation with `1 <= d <= max_d` sections, its section space and
/// `m` centred samples over its total space.
pub fn pca_instance(
    rng: &mut ChaCha8Rng,
    max_d: usize,
    m: usize,
) -> (
    Representation,
    qsec::sections::SectionSpace,
    qsec::qpca::Dataset,
) {
    loop {
        let rep = random_representation(rng);
        let (space, _) = qsec::sections::sections(&rep, Tol::Auto).unwrap();
        if space.dim() == 0 || space.dim() > max_d {
            continue;
        }
        let data = gaussian_data(rng, m, rep.total_dim());
        let ds = qsec::qpca::Dataset::new(data, rep.layout()).unwrap().centred();
        return (rep, space, ds);
    }
}
