//! Tolerance-aware subspace arithmetic on dense real matrices.
//!
//! Every subspace is stored as an orthonormal column basis in its ambient
//! space. Rank decisions go through a singular value decomposition and a
//! [`Tol`] which is either the standard `max(rows, cols) * eps` rule or a
//! caller-supplied relative threshold. Zero-dimensional spaces and
//! zero-sized matrices are valid everywhere.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::QuiverPath;

/// Dense real linear map, `rows = dim codomain`, `cols = dim domain`.
pub type LinMap = DMatrix<f64>;

/// Floor for relative residual checks (invariance, membership). Residuals
/// accumulate roundoff from several decompositions, so they are compared
/// against a looser bound than single rank decisions.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Floor for automatic rank decisions on matrices built from computed bases
/// (intersections, preimages, equalisers). Those inputs already carry
/// roundoff well above `eps`, so the plain `max(rows, cols) * eps` rule
/// would split genuinely shared directions.
pub const DERIVED_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubspaceError {
    #[error("ambient dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("map does not send the domain into the codomain (residual {residual:.3e} > {threshold:.3e})")]
    NotInvariant { residual: f64, threshold: f64 },
}

/// Relative rank tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tol {
    /// `max(rows, cols) * f64::EPSILON`, relative to the operation's scale.
    Auto,
    /// Fixed relative threshold.
    Relative(f64),
}

const AUTO_BITS: u64 = u64::MAX;
static GLOBAL_TOL: AtomicU64 = AtomicU64::new(AUTO_BITS);

/// Replace the process-wide default returned by `Tol::default()`.
pub fn set_default_tol(tol: Tol) {
    let bits = match tol {
        Tol::Auto => AUTO_BITS,
        Tol::Relative(r) => r.to_bits(),
    };
    GLOBAL_TOL.store(bits, Ordering::Relaxed);
}

impl Default for Tol {
    fn default() -> Self {
        match GLOBAL_TOL.load(Ordering::Relaxed) {
            AUTO_BITS => Tol::Auto,
            bits => Tol::Relative(f64::from_bits(bits)),
        }
    }
}

impl Tol {
    pub fn relative(&self, rows: usize, cols: usize) -> f64 {
        match *self {
            Tol::Auto => rows.max(cols).max(1) as f64 * f64::EPSILON,
            Tol::Relative(r) => r,
        }
    }

    /// Singular values at or below this are treated as zero.
    pub fn rank_threshold(&self, rows: usize, cols: usize, scale: f64) -> f64 {
        self.relative(rows, cols) * scale
    }

    /// Like [`Tol::rank_threshold`], with `Auto` floored at
    /// [`DERIVED_FLOOR`].
    pub fn derived_threshold(&self, rows: usize, cols: usize, scale: f64) -> f64 {
        match *self {
            Tol::Auto => self.relative(rows, cols).max(DERIVED_FLOOR) * scale,
            Tol::Relative(r) => r * scale,
        }
    }

    pub fn residual_threshold(&self, rows: usize, cols: usize, scale: f64) -> f64 {
        self.relative(rows, cols).max(RESIDUAL_FLOOR) * scale.max(1.0)
    }

    /// Effective relative value, for reports.
    pub fn describe(&self) -> String {
        match self {
            Tol::Auto => "auto (max(rows, cols) * eps)".to_string(),
            Tol::Relative(r) => format!("{r:e}"),
        }
    }
}

/// A linear subspace of `R^ambient_dim` with an orthonormal column basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
    tol: Tol,
}

impl Subspace {
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(ambient_dim, 0),
            tol: Tol::default(),
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Subspace {
            basis: DMatrix::identity(ambient_dim, ambient_dim),
            tol: Tol::default(),
        }
    }

    /// Column span of `m`, orthonormalised.
    pub fn span(m: &DMatrix<f64>, tol: Tol) -> Self {
        let n = m.nrows();
        if m.ncols() == 0 || n == 0 {
            return Subspace {
                basis: DMatrix::zeros(n, 0),
                tol,
            };
        }
        let (sv, u) = left_singular(m);
        let thr = tol.rank_threshold(m.nrows(), m.ncols(), sv.first().copied().unwrap_or(0.0));
        let rank = sv.iter().take_while(|&&s| s > thr && s > 0.0).count();
        Subspace {
            basis: canonical_signs(u.columns(0, rank).into_owned()),
            tol,
        }
    }

    /// Wrap a basis already known to be orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>, tol: Tol) -> Self {
        Subspace { basis, tol }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn tol(&self) -> Tol {
        self.tol
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `(I - P) m` without forming `P`.
    pub fn complement_apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m - &self.basis * (self.basis.transpose() * m)
    }

    /// Distance of `v` from the subspace.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    /// Maximum deviation of `basisᵀ basis` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.transpose() * &self.basis;
        let k = g.nrows();
        (g - DMatrix::<f64>::identity(k, k)).amax()
    }

    /// Orthogonal complement within the ambient space.
    pub fn complement(&self) -> Subspace {
        if self.dim() == 0 {
            return Subspace::full(self.ambient_dim()).with_tol(self.tol);
        }
        kernel(&self.basis.transpose(), self.tol)
    }

    pub fn with_tol(mut self, tol: Tol) -> Self {
        self.tol = tol;
        self
    }
}

// Left singular vectors of `m` (columns of U, `rows x min`), sorted by
// decreasing singular value.
fn left_singular(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let order = descending(svd.singular_values.as_slice());
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<_> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    (sv, DMatrix::from_columns(&cols))
}

fn descending(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    idx
}

// Full right singular basis (cols x cols) with singular values padded by
// zeros, sorted descending.
fn right_singular_full(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let c = m.ncols();
    let padded;
    let work = if m.nrows() < c {
        let mut p = DMatrix::zeros(c, c);
        p.rows_mut(0, m.nrows()).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    let svd = work.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let order = descending(svd.singular_values.as_slice());
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<_> = order
        .iter()
        .map(|&i| vt.row(i).transpose().into_owned())
        .collect();
    (sv, DMatrix::from_columns(&cols))
}

// Flip each column so its first entry of significant magnitude is positive.
fn canonical_signs(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in m.column_iter_mut() {
        let big = col.amax();
        if let Some(x) = col.iter().find(|x| x.abs() > 1e-8 * big) {
            if *x < 0.0 {
                col.neg_mut();
            }
        }
    }
    m
}

/// Kernel of `m` against an explicit scale: singular directions with
/// `sigma <= tol.relative * scale` span the result.
pub fn kernel_scaled(m: &DMatrix<f64>, tol: Tol, scale: f64) -> Subspace {
    let thr = tol.rank_threshold(m.nrows(), m.ncols(), scale);
    kernel_below(m, tol, thr)
}

// Kernel for matrices assembled from computed bases.
fn kernel_derived(m: &DMatrix<f64>, tol: Tol, scale: f64) -> Subspace {
    let thr = tol.derived_threshold(m.nrows(), m.ncols(), scale);
    kernel_below(m, tol, thr)
}

fn kernel_below(m: &DMatrix<f64>, tol: Tol, thr: f64) -> Subspace {
    let c = m.ncols();
    if c == 0 {
        return Subspace::zero(0).with_tol(tol);
    }
    if m.nrows() == 0 {
        return Subspace::full(c).with_tol(tol);
    }
    let (sv, v) = right_singular_full(m);
    let rank = sv.iter().take_while(|&&s| s > thr && s > 0.0).count();
    Subspace {
        basis: canonical_signs(v.columns(rank, c - rank).into_owned()),
        tol,
    }
}

/// Numerical null space: right singular vectors with
/// `sigma_i <= tol * sigma_max`.
pub fn kernel(m: &LinMap, tol: Tol) -> Subspace {
    let smax = spectral_norm(m);
    kernel_scaled(m, tol, smax)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

fn check_same_ambient(a: &Subspace, b: &Subspace) -> Result<(), SubspaceError> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(SubspaceError::DimensionMismatch {
            left: a.ambient_dim(),
            right: b.ambient_dim(),
        });
    }
    Ok(())
}

// Basis `d` times an orthonormal coefficient matrix, re-orthonormalised.
fn within(d: &Subspace, coeffs: &Subspace, tol: Tol) -> Subspace {
    if coeffs.dim() == d.dim() {
        return d.clone().with_tol(tol);
    }
    let raw = d.basis() * coeffs.basis();
    Subspace::span(&raw, Tol::Relative(0.5)).with_tol(tol)
}

/// Intersection of two subspaces of the same ambient space, computed as
/// `a ∩ b = A · ker((I - P_b) A)`.
pub fn intersect(a: &Subspace, b: &Subspace, tol: Tol) -> Result<Subspace, SubspaceError> {
    check_same_ambient(a, b)?;
    if b.is_full() || a.dim() == 0 {
        return Ok(a.clone().with_tol(tol));
    }
    if a.is_full() || b.dim() == 0 {
        return Ok(b.clone().with_tol(tol));
    }
    let r = b.complement_apply(a.basis());
    let coeffs = kernel_derived(&r, tol, 1.0);
    Ok(within(a, &coeffs, tol))
}

pub fn intersect_all<'a>(
    ambient: usize,
    spaces: impl IntoIterator<Item = &'a Subspace>,
    tol: Tol,
) -> Result<Subspace, SubspaceError> {
    let mut acc = Subspace::full(ambient).with_tol(tol);
    for s in spaces {
        acc = intersect(&acc, s, tol)?;
    }
    Ok(acc)
}

/// Largest subspace of `domain` on which all `maps` agree: the intersection
/// of `ker(f_i - f_{i+1})` over successive pairs, restricted to `domain`.
/// A single map (or none) leaves `domain` unchanged.
pub fn equalise(domain: &Subspace, maps: &[LinMap], tol: Tol) -> Result<Subspace, SubspaceError> {
    let n = domain.ambient_dim();
    if let Some(f0) = maps.first() {
        for (i, f) in maps.iter().enumerate() {
            if f.ncols() != n || f.nrows() != f0.nrows() {
                return Err(SubspaceError::ShapeMismatch(format!(
                    "map {i} is {}x{}, expected {}x{}",
                    f.nrows(),
                    f.ncols(),
                    f0.nrows(),
                    n
                )));
            }
        }
    }
    if maps.len() <= 1 || domain.dim() == 0 {
        return Ok(domain.clone().with_tol(tol));
    }
    let rows = maps[0].nrows();
    let k = domain.dim();
    let mut stacked = DMatrix::zeros(rows * (maps.len() - 1), k);
    for i in 0..maps.len() - 1 {
        let diff = (&maps[i] - &maps[i + 1]) * domain.basis();
        stacked.rows_mut(i * rows, rows).copy_from(&diff);
    }
    let scale = maps.iter().map(|f| f.norm()).fold(0.0, f64::max);
    let coeffs = kernel_derived(&stacked, tol, scale);
    Ok(within(domain, &coeffs, tol))
}

/// `{x ∈ domain : m x = 0}`, with rank decided relative to `scale`.
pub fn kernel_within(
    domain: &Subspace,
    m: &LinMap,
    tol: Tol,
    scale: f64,
) -> Result<Subspace, SubspaceError> {
    if m.ncols() != domain.ambient_dim() {
        return Err(SubspaceError::ShapeMismatch(format!(
            "map has {} columns but the domain lives in R^{}",
            m.ncols(),
            domain.ambient_dim()
        )));
    }
    if domain.dim() == 0 || m.nrows() == 0 {
        return Ok(domain.clone().with_tol(tol));
    }
    let coeffs = kernel_derived(&(m * domain.basis()), tol, scale);
    Ok(within(domain, &coeffs, tol))
}

/// `{x : m x ∈ w}` as the kernel of `(I - P_w) m`.
pub fn preimage(m: &LinMap, w: &Subspace, tol: Tol) -> Result<Subspace, SubspaceError> {
    if m.nrows() != w.ambient_dim() {
        return Err(SubspaceError::ShapeMismatch(format!(
            "map has {} rows but the target subspace lives in R^{}",
            m.nrows(),
            w.ambient_dim()
        )));
    }
    if w.is_full() {
        return Ok(Subspace::full(m.ncols()).with_tol(tol));
    }
    let r = w.complement_apply(m);
    Ok(kernel_derived(&r, tol, m.norm()))
}

/// `A_p = A_{e_k} ∘ … ∘ A_{e_1}`; the empty path at `v` gives the identity
/// on `dims[v]`.
pub fn compose_path(
    maps: &[LinMap],
    dims: &[usize],
    path: &QuiverPath,
) -> Result<LinMap, SubspaceError> {
    let mut acc = DMatrix::identity(dims[path.source()], dims[path.source()]);
    for &e in path.edges() {
        let a = &maps[e];
        if a.ncols() != acc.nrows() {
            return Err(SubspaceError::ShapeMismatch(format!(
                "edge {e} map is {}x{} but receives a vector of length {}",
                a.nrows(),
                a.ncols(),
                acc.nrows()
            )));
        }
        acc = a * acc;
    }
    Ok(acc)
}

/// Coordinate matrix `codomᵀ · m · dom` of `m` restricted to `dom` with
/// values in `codom`.
pub fn restrict(m: &LinMap, dom: &Subspace, codom: &Subspace) -> Result<LinMap, SubspaceError> {
    if m.ncols() != dom.ambient_dim() || m.nrows() != codom.ambient_dim() {
        return Err(SubspaceError::ShapeMismatch(format!(
            "map is {}x{}, subspaces live in R^{} and R^{}",
            m.nrows(),
            m.ncols(),
            dom.ambient_dim(),
            codom.ambient_dim()
        )));
    }
    let image = m * dom.basis();
    let residual = if image.is_empty() {
        0.0
    } else {
        codom.complement_apply(&image).norm()
    };
    let tol = dom.tol();
    let threshold = tol.residual_threshold(m.nrows(), m.ncols(), m.norm());
    if residual > threshold {
        return Err(SubspaceError::NotInvariant {
            residual,
            threshold,
        });
    }
    Ok(codom.basis().transpose() * image)
}

/// Moore–Penrose pseudo-inverse with tolerance-based rank truncation.
pub fn pinv(m: &LinMap, tol: Tol) -> LinMap {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let thr = tol.rank_threshold(r, c, smax);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > thr && s > 0.0 {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Sine of the largest principal angle between equal-dimensional
/// subspaces; `+inf` when the dimensions differ.
pub fn principal_angle_distance(a: &Subspace, b: &Subspace) -> Result<f64, SubspaceError> {
    check_same_ambient(a, b)?;
    if a.dim() != b.dim() {
        return Ok(f64::INFINITY);
    }
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let r = b.complement_apply(a.basis());
    Ok(spectral_norm(&r).min(1.0))
}
