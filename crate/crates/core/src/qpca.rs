//! Principal components constrained to a space of sections.
//!
//! With `F` an `n × d` embedding of the sections and `S` the sample
//! covariance, the top quiver principal components are `F u_1, …, F u_r`
//! where `u_i` are the leading generalised eigenvectors of the symmetric
//! definite pencil `FᵀSF - λ FᵀF`. The pencil is solved by Cholesky
//! whitening of `FᵀF` followed by a symmetric eigensolve.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::sections::{BlockLayout, SectionSpace};
use crate::subspace::Subspace;

/// Column means above this (relative to the column's scale) fail the
/// centring check.
pub const CENTRING_TOL: f64 = 1e-12;
/// Absolute tolerance for frame constraints in the objective evaluators.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Relative gap below which neighbouring eigenvalues count as tied.
pub const TIE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcaError {
    #[error("data is not mean-centred (largest relative column mean {max_mean:.3e})")]
    NotCentred { max_mean: f64 },
    #[error("data has {found} columns but the representation has total dimension {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("the space of sections is trivial")]
    ZeroSections,
    #[error("{requested} components requested but only {available} are available")]
    TooManyComponents { requested: usize, available: usize },
    #[error("matrix is not positive definite (condition estimate {condition:.3e})")]
    NotPositiveDefinite { condition: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("infeasible frame: {constraint} violated by {violation:.3e}")]
    Infeasible {
        constraint: &'static str,
        violation: f64,
    },
    #[error("zero vector")]
    ZeroVector,
}

/// `m` samples (rows) of an `n`-dimensional total space split into vertex
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: DMatrix<f64>,
    layout: BlockLayout,
    centred: bool,
}

impl Dataset {
    pub fn new(data: DMatrix<f64>, layout: BlockLayout) -> Result<Self, PcaError> {
        if data.ncols() != layout.total() {
            return Err(PcaError::WidthMismatch {
                expected: layout.total(),
                found: data.ncols(),
            });
        }
        Ok(Dataset {
            data,
            layout,
            centred: false,
        })
    }

    /// One block holding every column.
    pub fn unstructured(data: DMatrix<f64>) -> Self {
        let layout = BlockLayout::new(&[data.ncols()]);
        Dataset {
            data,
            layout,
            centred: false,
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_centred(&self) -> bool {
        self.centred
    }

    pub fn means(&self) -> DVector<f64> {
        let m = self.data.nrows().max(1) as f64;
        DVector::from_iterator(
            self.data.ncols(),
            self.data.column_iter().map(|c| c.sum() / m),
        )
    }

    /// Subtract the column means.
    pub fn centred(mut self) -> Self {
        let mu = self.means();
        for (j, mut col) in self.data.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mu[j]);
        }
        self.centred = true;
        self
    }

    /// Accept the data as already centred after checking the column means.
    pub fn assume_centred(mut self) -> Result<Self, PcaError> {
        let mu = self.means();
        let mut worst: f64 = 0.0;
        for (j, col) in self.data.column_iter().enumerate() {
            let scale = col.amax().max(f64::MIN_POSITIVE);
            worst = worst.max(mu[j].abs() / scale);
        }
        if worst > CENTRING_TOL {
            return Err(PcaError::NotCentred { max_mean: worst });
        }
        self.centred = true;
        Ok(self)
    }

    /// Rows of block `v`: the `m × dim A_v` matrix `Y_v`.
    pub fn block(&self, v: usize) -> DMatrix<f64> {
        self.data
            .columns(self.layout.offset(v), self.layout.dim(v))
            .into_owned()
    }
}

/// Symmetric sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    s: DMatrix<f64>,
}

impl Covariance {
    /// Wrap a square matrix, symmetrising away roundoff above `1e-12`
    /// relative asymmetry.
    pub fn new(s: DMatrix<f64>) -> Result<Self, PcaError> {
        if !s.is_square() {
            return Err(PcaError::ShapeMismatch(format!(
                "covariance must be square, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let asym = (&s - s.transpose()).amax();
        if asym > 1e-12 * s.amax().max(1.0) {
            return Err(PcaError::ShapeMismatch(format!(
                "covariance is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        Ok(Covariance {
            s: (&s + s.transpose()) * 0.5,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

/// `S = (1/m) Σ y_i y_iᵀ = MᵀM` with rows of `M` equal to `y_i / √m`.
pub fn covariance(d: &Dataset) -> Result<Covariance, PcaError> {
    if !d.centred {
        let checked = d.clone().assume_centred()?;
        return covariance(&checked);
    }
    let m = d.n_samples().max(1) as f64;
    let s = d.data.transpose() * &d.data / m;
    Ok(Covariance {
        s: (&s + s.transpose()) * 0.5,
    })
}

/// Leading eigenpairs, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Principal {
    pub values: Vec<f64>,
    /// Orthonormal directions as columns.
    pub directions: DMatrix<f64>,
    /// `ties[i]` marks a value within tolerance of a neighbour.
    pub ties: Vec<bool>,
}

fn tie_flags(values: &[f64]) -> Vec<bool> {
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let close = |a: f64, b: f64| (a - b).abs() <= TIE_TOL * scale;
    (0..values.len())
        .map(|i| {
            (i > 0 && close(values[i - 1], values[i]))
                || (i + 1 < values.len() && close(values[i], values[i + 1]))
        })
        .collect()
}

// First coordinate of significant magnitude is made positive.
fn fix_sign(mut v: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in v.column_iter_mut() {
        let big = col.amax();
        if let Some(x) = col.iter().copied().find(|x| x.abs() > 1e-8 * big) {
            if x < 0.0 {
                col.neg_mut();
            }
        }
    }
    v
}

fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &idx.iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Top-`r` eigenpairs of `S`.
pub fn ordinary_pca(s: &Covariance, r: usize) -> Result<Principal, PcaError> {
    let n = s.dim();
    if r > n {
        return Err(PcaError::TooManyComponents {
            requested: r,
            available: n,
        });
    }
    let (values, vectors) = sorted_eigen(&s.s);
    let ties = tie_flags(&values);
    Ok(Principal {
        values: values[..r].to_vec(),
        directions: fix_sign(vectors.columns(0, r).into_owned()),
        ties: ties[..r].to_vec(),
    })
}

/// Generalised eigendecomposition of `a - λ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilResult {
    /// Descending.
    pub values: Vec<f64>,
    /// `b`-orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    pub ties: Vec<bool>,
    /// Ratio of extreme eigenvalues of `b`.
    pub condition: f64,
}

fn condition_estimate(b: &DMatrix<f64>) -> f64 {
    if b.is_empty() {
        return 1.0;
    }
    let ev = SymmetricEigen::new((b + b.transpose()) * 0.5).eigenvalues;
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `a u = λ b u` for symmetric `a` and symmetric positive definite
/// `b`: with `b = L Lᵀ`, the eigenvectors `w` of `L⁻¹ a L⁻ᵀ` give
/// `u = L⁻ᵀ w`.
pub fn solve_pencil(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PencilResult, PcaError> {
    let n = a.nrows();
    if !a.is_square() || b.shape() != (n, n) {
        return Err(PcaError::ShapeMismatch(format!(
            "pencil needs square matrices of one size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let condition = condition_estimate(b);
    if !condition.is_finite() || condition * f64::EPSILON >= 1.0 {
        return Err(PcaError::NotPositiveDefinite { condition });
    }
    let sym_b = (b + b.transpose()) * 0.5;
    let chol = Cholesky::new(sym_b).ok_or(PcaError::NotPositiveDefinite { condition })?;
    let l = chol.l();
    // c = L⁻¹ a L⁻ᵀ
    let left = l
        .solve_lower_triangular(a)
        .expect("Cholesky factor is invertible");
    let c = l
        .solve_lower_triangular(&left.transpose())
        .expect("Cholesky factor is invertible");
    let (values, w) = sorted_eigen(&c);
    let u = l
        .transpose()
        .solve_upper_triangular(&w)
        .expect("Cholesky factor is invertible");
    let ties = tie_flags(&values);
    Ok(PencilResult {
        values,
        vectors: fix_sign(u),
        ties,
        condition,
    })
}

/// Top quiver principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct QuiverPCs {
    /// Orthonormal directions `F u_i` in the total space.
    pub directions: DMatrix<f64>,
    /// Coefficients `u_i` in the section parametrisation.
    pub coefficients: DMatrix<f64>,
    pub values: Vec<f64>,
    pub ties: Vec<bool>,
    /// `tr(Xᵀ S X)` for the returned frame.
    pub objective: f64,
    pub pencil: PencilResult,
}

/// The pencil `(FᵀSF, FᵀF)`.
pub fn section_pencil(f: &DMatrix<f64>, s: &Covariance) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = f.transpose() * s.matrix() * f;
    let b = f.transpose() * f;
    ((&a + a.transpose()) * 0.5, (&b + b.transpose()) * 0.5)
}

/// Top-`r` principal components of `data` inside the space of sections.
/// The data is centred first unless already flagged as centred.
pub fn quiver_pca(data: &Dataset, sec: &SectionSpace, r: usize) -> Result<QuiverPCs, PcaError> {
    if sec.dim() == 0 {
        return Err(PcaError::ZeroSections);
    }
    if data.n_features() != sec.total_dim() {
        return Err(PcaError::WidthMismatch {
            expected: sec.total_dim(),
            found: data.n_features(),
        });
    }
    let s = if data.is_centred() {
        covariance(data)?
    } else {
        covariance(&data.clone().centred())?
    };
    pca_in_span(&s, sec.embedding(), r)
}

/// Quiver PCA given the covariance and any full-column-rank `F`.
pub fn pca_in_span(s: &Covariance, f: &DMatrix<f64>, r: usize) -> Result<QuiverPCs, PcaError> {
    let d = f.ncols();
    if f.nrows() != s.dim() {
        return Err(PcaError::WidthMismatch {
            expected: f.nrows(),
            found: s.dim(),
        });
    }
    if d == 0 {
        return Err(PcaError::ZeroSections);
    }
    if r > d {
        return Err(PcaError::TooManyComponents {
            requested: r,
            available: d,
        });
    }
    let (a, b) = section_pencil(f, s);
    let pencil = solve_pencil(&a, &b)?;
    let coefficients = pencil.vectors.columns(0, r).into_owned();
    let mut directions = f * &coefficients;
    for mut col in directions.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let objective = (directions.transpose() * s.matrix() * &directions).trace();
    Ok(QuiverPCs {
        directions,
        coefficients,
        values: pencil.values[..r].to_vec(),
        ties: pencil.ties[..r].to_vec(),
        objective,
        pencil,
    })
}

fn identity_violation(g: &DMatrix<f64>) -> f64 {
    let r = g.nrows();
    (g - DMatrix::identity(r, r)).amax()
}

fn check_rows(m: &DMatrix<f64>, n: usize, what: &str) -> Result<(), PcaError> {
    if m.nrows() != n {
        return Err(PcaError::ShapeMismatch(format!(
            "{what} has {} rows, expected {n}",
            m.nrows()
        )));
    }
    Ok(())
}

/// `tr(Xᵀ S X)` subject to `XᵀX = I` and every column of `X` lying in the
/// column span of `f`.
pub fn objective_implicit(
    x: &DMatrix<f64>,
    f: &DMatrix<f64>,
    s: &Covariance,
) -> Result<f64, PcaError> {
    check_rows(x, s.dim(), "X")?;
    check_rows(f, s.dim(), "F")?;
    if x.ncols() == 0 {
        return Ok(0.0);
    }
    let v = identity_violation(&(x.transpose() * x));
    if v > FEASIBILITY_TOL {
        return Err(PcaError::Infeasible {
            constraint: "XᵀX = I",
            violation: v,
        });
    }
    let span = Subspace::span(f, Default::default());
    let outside = span.complement_apply(x).amax();
    if outside > FEASIBILITY_TOL {
        return Err(PcaError::Infeasible {
            constraint: "columns of X are sections",
            violation: outside,
        });
    }
    Ok((x.transpose() * s.matrix() * x).trace())
}

/// `tr(Yᵀ FᵀSF Y)` subject to `Yᵀ FᵀF Y = I`.
pub fn objective_param(
    y: &DMatrix<f64>,
    f: &DMatrix<f64>,
    s: &Covariance,
) -> Result<f64, PcaError> {
    check_rows(f, s.dim(), "F")?;
    check_rows(y, f.ncols(), "Y")?;
    if y.ncols() == 0 {
        return Ok(0.0);
    }
    let fy = f * y;
    let v = identity_violation(&(fy.transpose() * &fy));
    if v > FEASIBILITY_TOL {
        return Err(PcaError::Infeasible {
            constraint: "Yᵀ(FᵀF)Y = I",
            violation: v,
        });
    }
    Ok((fy.transpose() * s.matrix() * &fy).trace())
}

/// `tr(Zᵀ S_B Z)` with `B = FFᵀ`, `S_B = BSB`, subject to `Zᵀ B² Z = I`.
pub fn objective_projected(
    z: &DMatrix<f64>,
    f: &DMatrix<f64>,
    s: &Covariance,
) -> Result<f64, PcaError> {
    check_rows(f, s.dim(), "F")?;
    check_rows(z, s.dim(), "Z")?;
    if z.ncols() == 0 {
        return Ok(0.0);
    }
    let bz = f * (f.transpose() * z);
    let v = identity_violation(&(bz.transpose() * &bz));
    if v > FEASIBILITY_TOL {
        return Err(PcaError::Infeasible {
            constraint: "Zᵀ B² Z = I",
            violation: v,
        });
    }
    Ok((bz.transpose() * s.matrix() * &bz).trace())
}

/// `uᵀ FᵀSF u / uᵀ FᵀF u`.
pub fn rayleigh(u: &DVector<f64>, f: &DMatrix<f64>, s: &Covariance) -> Result<f64, PcaError> {
    check_rows(f, s.dim(), "F")?;
    if u.len() != f.ncols() {
        return Err(PcaError::ShapeMismatch(format!(
            "u has length {}, expected {}",
            u.len(),
            f.ncols()
        )));
    }
    let fu = f * u;
    let den = fu.norm_squared();
    if den == 0.0 {
        return Err(PcaError::ZeroVector);
    }
    Ok(fu.dot(&(s.matrix() * &fu)) / den)
}

/// Pencil of the one-arrow quiver `u → v` with map `J`, sections
/// parametrised by `x ↦ (x, Jx)`:
/// `A = S_uu + JᵀS_vu + S_uv J + JᵀS_vv J`, `B = I + JᵀJ`.
/// `s` is the covariance over `(u, v)` with `dim u = j.ncols()`.
pub fn one_arrow_pencil(
    s: &DMatrix<f64>,
    j: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), PcaError> {
    let (q, p) = j.shape();
    if s.shape() != (p + q, p + q) {
        return Err(PcaError::ShapeMismatch(format!(
            "covariance is {}x{}, expected {}x{} for a {q}x{p} map",
            s.nrows(),
            s.ncols(),
            p + q,
            p + q
        )));
    }
    let suu = s.view((0, 0), (p, p));
    let suv = s.view((0, p), (p, q));
    let svu = s.view((p, 0), (q, p));
    let svv = s.view((p, p), (q, q));
    let jt = j.transpose();
    let a = suu + &jt * svu + suv * j + &jt * svv * j;
    let b = DMatrix::identity(p, p) + &jt * j;
    Ok((a, b))
}
