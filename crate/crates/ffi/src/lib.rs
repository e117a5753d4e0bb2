//! C ABI over `qsec`.
//!
//! Handles are opaque and owned by the caller, who releases each with its
//! `_free` function. Every fallible call returns a [`QsecStatus`]; on failure
//! [`qsec_last_error_message`] describes the most recent error on the calling
//! thread. Matrices cross the boundary as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use qsec::graph::Quiver;
use qsec::qpca::{quiver_pca, Dataset, PcaError, QuiverPCs};
use qsec::sections::{dimension_lower_bound, sections, Representation, SectionSpace, SectionsError};
use qsec::subspace::Tol;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    TrivialSections = 4,
    Numerical = 5,
    Panic = 6,
}

/// A quiver with dimensions and edge maps, filled in edge by edge.
pub struct QsecRepresentation {
    quiver: Quiver,
    dims: Vec<usize>,
    maps: Vec<DMatrix<f64>>,
}

pub struct QsecSectionSpace {
    space: SectionSpace,
}

pub struct QsecPca {
    pcs: QuiverPCs,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(QsecStatus, String);

impl From<SectionsError> for Failure {
    fn from(e: SectionsError) -> Self {
        let status = match e {
            SectionsError::ShapeMismatch(_) | SectionsError::Subspace(_) => QsecStatus::ShapeMismatch,
            SectionsError::NonFinite { .. } => QsecStatus::InvalidArgument,
            SectionsError::Graph(_) => QsecStatus::InvalidArgument,
            SectionsError::PathCountOverflow { .. } => QsecStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<PcaError> for Failure {
    fn from(e: PcaError) -> Self {
        let status = match e {
            PcaError::ZeroSections => QsecStatus::TrivialSections,
            PcaError::WidthMismatch { .. } | PcaError::ShapeMismatch(_) => {
                QsecStatus::ShapeMismatch
            }
            PcaError::NotPositiveDefinite { .. } => QsecStatus::Numerical,
            _ => QsecStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(QsecStatus::InvalidArgument, message.into())
}

/// Run `f`, recording any error or panic for `qsec_last_error_message`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QsecStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QsecStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal error: {message}"));
            QsecStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(QsecStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` is null only when `len == 0`, otherwise valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// As [`slice`], for writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_row_major(m: &DMatrix<f64>, out: &mut [f64]) -> Result<(), Failure> {
    let (r, c) = m.shape();
    if out.len() != r * c {
        return Err(Failure(
            QsecStatus::ShapeMismatch,
            format!("output buffer has {} entries, expected {r}x{c}", out.len()),
        ));
    }
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Negative or NaN selects the automatic tolerance.
fn tol_of(tol: f64) -> Tol {
    if tol.is_nan() || tol < 0.0 {
        Tol::Auto
    } else {
        Tol::Relative(tol)
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qsec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qsec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New representation with zero maps. Edge `e` runs from `sources[e]` to
/// `targets[e]`.
///
/// # Safety
/// `dims` holds `n_vertices` entries, `sources` and `targets` hold `n_edges`
/// entries each, and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qsec_representation_new(
    n_vertices: usize,
    dims: *const usize,
    n_edges: usize,
    sources: *const usize,
    targets: *const usize,
    out: *mut *mut QsecRepresentation,
) -> QsecStatus {
    guard(|| {
        non_null(out, "out")?;
        let dims = slice(dims, n_vertices, "dims")?.to_vec();
        let s = slice(sources, n_edges, "sources")?;
        let t = slice(targets, n_edges, "targets")?;
        let edges: Vec<(usize, usize)> = s.iter().copied().zip(t.iter().copied()).collect();
        let quiver = Quiver::new(n_vertices, edges).map_err(|e| invalid(e.to_string()))?;
        let maps = quiver
            .edges()
            .iter()
            .map(|&(s, t)| DMatrix::zeros(dims[t], dims[s]))
            .collect();
        *out = Box::into_raw(Box::new(QsecRepresentation { quiver, dims, maps }));
        Ok(())
    })
}

/// Set the map of edge `edge` from `rows * cols` row-major entries; the
/// shape must be `dim(target) x dim(source)`.
///
/// # Safety
/// `rep` comes from [`qsec_representation_new`]; `data` holds
/// `rows * cols` entries.
#[no_mangle]
pub unsafe extern "C" fn qsec_representation_set_map(
    rep: *mut QsecRepresentation,
    edge: usize,
    rows: usize,
    cols: usize,
    data: *const f64,
) -> QsecStatus {
    guard(|| {
        non_null(rep, "representation")?;
        let rep = &mut *rep;
        let &(s, t) = rep
            .quiver
            .edges()
            .get(edge)
            .ok_or_else(|| invalid(format!("edge {edge} out of range")))?;
        if (rows, cols) != (rep.dims[t], rep.dims[s]) {
            return Err(Failure(
                QsecStatus::ShapeMismatch,
                format!(
                    "edge {edge} needs a {}x{} map, got {rows}x{cols}",
                    rep.dims[t], rep.dims[s]
                ),
            ));
        }
        let values = slice(data, rows * cols, "data")?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(invalid(format!("edge {edge} has a non-finite entry")));
        }
        rep.maps[edge] = DMatrix::from_row_slice(rows, cols, values);
        Ok(())
    })
}

/// # Safety
/// `rep` is null or comes from [`qsec_representation_new`] and is not used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn qsec_representation_free(rep: *mut QsecRepresentation) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

fn build(rep: &QsecRepresentation) -> Result<Representation, Failure> {
    Ok(Representation::new(
        rep.quiver.clone(),
        rep.dims.clone(),
        rep.maps.clone(),
    )?)
}

/// Space of sections of `rep`. A negative `tol` selects the automatic
/// tolerance.
///
/// # Safety
/// `rep` comes from [`qsec_representation_new`]; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qsec_sections(
    rep: *const QsecRepresentation,
    tol: f64,
    out: *mut *mut QsecSectionSpace,
) -> QsecStatus {
    guard(|| {
        non_null(rep, "representation")?;
        non_null(out, "out")?;
        let (space, _) = sections(&build(&*rep)?, tol_of(tol))?;
        *out = Box::into_raw(Box::new(QsecSectionSpace { space }));
        Ok(())
    })
}

/// Path-count lower bound on the dimension of the sections of an acyclic
/// representation.
///
/// # Safety
/// `rep` comes from [`qsec_representation_new`]; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qsec_dimension_lower_bound(
    rep: *const QsecRepresentation,
    out: *mut i64,
) -> QsecStatus {
    guard(|| {
        non_null(rep, "representation")?;
        non_null(out, "out")?;
        *out = dimension_lower_bound(&build(&*rep)?)?;
        Ok(())
    })
}

/// Dimension `d` of the space of sections; 0 for a null handle.
///
/// # Safety
/// `space` is null or comes from [`qsec_sections`].
#[no_mangle]
pub unsafe extern "C" fn qsec_section_space_dim(space: *const QsecSectionSpace) -> usize {
    space.as_ref().map_or(0, |s| s.space.dim())
}

/// Dimension `n` of the total space; 0 for a null handle.
///
/// # Safety
/// `space` is null or comes from [`qsec_sections`].
#[no_mangle]
pub unsafe extern "C" fn qsec_section_space_total_dim(space: *const QsecSectionSpace) -> usize {
    space.as_ref().map_or(0, |s| s.space.total_dim())
}

/// Copy the `n x d` embedding `F` into `out` (row-major, `len == n * d`).
///
/// # Safety
/// `space` comes from [`qsec_sections`]; `out` holds `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn qsec_section_space_embedding(
    space: *const QsecSectionSpace,
    out: *mut f64,
    len: usize,
) -> QsecStatus {
    guard(|| {
        non_null(space, "section space")?;
        copy_row_major((*space).space.embedding(), slice_mut(out, len, "out")?)
    })
}

/// Largest `‖γ_t - A_e γ_s‖` relative residual of the embedding columns
/// against `rep`; negative on error.
///
/// # Safety
/// Both handles come from this library.
#[no_mangle]
pub unsafe extern "C" fn qsec_section_space_residual(
    space: *const QsecSectionSpace,
    rep: *const QsecRepresentation,
) -> f64 {
    let mut value = -1.0;
    let status = guard(|| {
        non_null(space, "section space")?;
        non_null(rep, "representation")?;
        let rep = build(&*rep)?;
        if rep.total_dim() != (*space).space.total_dim() {
            return Err(Failure(
                QsecStatus::ShapeMismatch,
                "representation and section space differ in total dimension".into(),
            ));
        }
        value = (*space).space.compatibility_residual(&rep);
        Ok(())
    });
    if status == QsecStatus::Ok {
        value
    } else {
        -1.0
    }
}

/// # Safety
/// `space` is null or comes from [`qsec_sections`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qsec_section_space_free(space: *mut QsecSectionSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Top-`r` principal components of `n_samples x n_features` row-major data
/// inside the space of sections. With `centre` false the data must already
/// be centred.
///
/// # Safety
/// `space` comes from [`qsec_sections`]; `data` holds
/// `n_samples * n_features` entries; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qsec_quiver_pca(
    space: *const QsecSectionSpace,
    data: *const f64,
    n_samples: usize,
    n_features: usize,
    r: usize,
    centre: bool,
    out: *mut *mut QsecPca,
) -> QsecStatus {
    guard(|| {
        non_null(space, "section space")?;
        non_null(out, "out")?;
        let space = &(*space).space;
        let values = slice(data, n_samples * n_features, "data")?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(invalid("data has a non-finite entry"));
        }
        let m = DMatrix::from_row_slice(n_samples, n_features, values);
        let ds = Dataset::new(m, space.layout().clone())?;
        let ds = if centre { ds.centred() } else { ds.assume_centred()? };
        let pcs = quiver_pca(&ds, space, r)?;
        *out = Box::into_raw(Box::new(QsecPca { pcs }));
        Ok(())
    })
}

/// Number of components `r`; 0 for a null handle.
///
/// # Safety
/// `pca` is null or comes from [`qsec_quiver_pca`].
#[no_mangle]
pub unsafe extern "C" fn qsec_pca_components(pca: *const QsecPca) -> usize {
    pca.as_ref().map_or(0, |p| p.pcs.values.len())
}

/// Copy the `r` eigenvalues, descending.
///
/// # Safety
/// `pca` comes from [`qsec_quiver_pca`]; `out` holds `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn qsec_pca_eigenvalues(
    pca: *const QsecPca,
    out: *mut f64,
    len: usize,
) -> QsecStatus {
    guard(|| {
        non_null(pca, "pca")?;
        let v = &(*pca).pcs.values;
        let out = slice_mut(out, len, "out")?;
        if out.len() != v.len() {
            return Err(Failure(
                QsecStatus::ShapeMismatch,
                format!("output buffer has {} entries, expected {}", out.len(), v.len()),
            ));
        }
        out.copy_from_slice(v);
        Ok(())
    })
}

/// Copy the `n x r` unit directions (row-major).
///
/// # Safety
/// `pca` comes from [`qsec_quiver_pca`]; `out` holds `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn qsec_pca_directions(
    pca: *const QsecPca,
    out: *mut f64,
    len: usize,
) -> QsecStatus {
    guard(|| {
        non_null(pca, "pca")?;
        copy_row_major(&(*pca).pcs.directions, slice_mut(out, len, "out")?)
    })
}

/// `tr(Xᵀ S X)` at the returned directions; NaN for a null handle.
///
/// # Safety
/// `pca` is null or comes from [`qsec_quiver_pca`].
#[no_mangle]
pub unsafe extern "C" fn qsec_pca_objective(pca: *const QsecPca) -> f64 {
    pca.as_ref().map_or(f64::NAN, |p| p.pcs.objective)
}

/// # Safety
/// `pca` is null or comes from [`qsec_quiver_pca`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qsec_pca_free(pca: *mut QsecPca) {
    if !pca.is_null() {
        drop(Box::from_raw(pca));
    }
}
