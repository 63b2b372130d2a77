//! C interface. Objects are opaque handles created and freed by this library;
//! every fallible call returns a status code and stores a message retrievable
//! with `wb_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use wbary::barycenter::{empirical_barycenter_1d, empirical_barycenter_fixed_support, FixedSupportOptions};
use wbary::duality::closed_form_check;
use wbary::experiments::population_law;
use wbary::measures::io::load_measure_auto;
use wbary::models::{load_family, DeformableFamily, MemberScheme};
use wbary::transport1d::w2sq_1d;
use wbary::transport_exact::w2sq_lp;
use wbary::{DiscreteMeasure, DomainBox, Error};

pub const WB_OK: i32 = 0;
pub const WB_ERR_PARSE: i32 = 1;
pub const WB_ERR_INVARIANT: i32 = 2;
pub const WB_ERR_DIMENSION: i32 = 3;
pub const WB_ERR_RANGE: i32 = 4;
pub const WB_ERR_ABS_CONTINUITY: i32 = 5;
pub const WB_ERR_SIZE: i32 = 6;
pub const WB_ERR_INFEASIBLE: i32 = 7;
pub const WB_ERR_SOLVER: i32 = 8;
pub const WB_ERR_ORACLE_SCOPE: i32 = 9;
pub const WB_ERR_SCALE: i32 = 10;
pub const WB_ERR_CONSTRAINT: i32 = 11;
pub const WB_ERR_FAMILY: i32 = 12;
pub const WB_ERR_EFFICIENCY: i32 = 13;
pub const WB_ERR_DOMAIN: i32 = 14;
pub const WB_ERR_GRID_MISMATCH: i32 = 15;
pub const WB_ERR_NO_DECREASE: i32 = 16;
pub const WB_ERR_INSUFFICIENT_DATA: i32 = 17;
pub const WB_ERR_USAGE: i32 = 18;
pub const WB_ERR_IO: i32 = 19;
/// A required pointer argument was null.
pub const WB_ERR_NULL: i32 = 100;
/// A string argument was not valid UTF-8.
pub const WB_ERR_UTF8: i32 = 101;
/// The library panicked; the handle arguments should be considered unusable.
pub const WB_ERR_PANIC: i32 = 102;
/// A caller buffer is too small.
pub const WB_ERR_BUFFER: i32 = 103;

/// Discrete probability measure.
pub struct WbMeasure(DiscreteMeasure);

/// Affine deformation family.
pub struct WbFamily(DeformableFamily);

/// Objectives at the population barycenter.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WbDualityReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|e| {
        let mut v = e.into_vec();
        v.retain(|&b| b != 0);
        CString::new(v).unwrap_or_default()
    });
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Fail {
    Core(Error),
    Code(i32, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WB_OK,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            e.code()
        }
        Ok(Err(Fail::Code(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            WB_ERR_PANIC
        }
    }
}

fn null(name: &str) -> Fail {
    Fail::Code(WB_ERR_NULL, format!("{name} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| Fail::Code(WB_ERR_UTF8, format!("path is not UTF-8: {e}")))?;
    Ok(Path::new(s))
}

unsafe fn measures<'a>(items: *const *const WbMeasure, count: usize) -> Result<Vec<&'a DiscreteMeasure>, Fail> {
    let ptrs = unsafe { slice(items, count, "measures")? };
    ptrs.iter().map(|&p| unsafe { as_ref(p, "measure") }.map(|m| &m.0)).collect()
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn wb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a measure from `n` points in row-major order (`n * dim` values)
/// and `n` weights. `lo` and `hi` give the domain box (`dim` values each);
/// when both are null the bounding box of the points is used.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_new(
    dim: usize,
    points: *const f64,
    weights: *const f64,
    n: usize,
    lo: *const f64,
    hi: *const f64,
    out: *mut *mut WbMeasure,
) -> i32 {
    guard(|| {
        let pts = unsafe { slice(points, n * dim, "points")? }.to_vec();
        let w = unsafe { slice(weights, n, "weights")? }.to_vec();
        let domain = if lo.is_null() && hi.is_null() {
            DomainBox::bounding(&pts, dim)?
        } else {
            let lo = unsafe { slice(lo, dim, "lo")? }.to_vec();
            let hi = unsafe { slice(hi, dim, "hi")? }.to_vec();
            DomainBox::new(lo, hi)?
        };
        store(out, WbMeasure(DiscreteMeasure::new(domain, pts, w)?))
    })
}

/// Loads a measure from a JSON or CSV file; grid densities become cell-center atoms.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_load(path: *const c_char, out: *mut *mut WbMeasure) -> i32 {
    guard(|| {
        let m = load_measure_auto(unsafe { self::path(path)? })?.to_discrete()?;
        store(out, WbMeasure(m))
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_free(m: *mut WbMeasure) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Number of atoms, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_len(m: *const WbMeasure) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.len())
}

/// Dimension, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_dim(m: *const WbMeasure) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.dim())
}

/// Copies the `len * dim` point coordinates (row-major) into `buf`.
///
/// # Safety
/// `buf` must be writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_points(m: *const WbMeasure, buf: *mut f64, cap: usize) -> i32 {
    guard(|| copy_out(unsafe { as_ref(m, "measure")? }.0.points(), buf, cap))
}

/// Copies the `len` weights into `buf`.
///
/// # Safety
/// `buf` must be writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn wb_measure_weights(m: *const WbMeasure, buf: *mut f64, cap: usize) -> i32 {
    guard(|| copy_out(unsafe { as_ref(m, "measure")? }.0.weights(), buf, cap))
}

fn copy_out(src: &[f64], buf: *mut f64, cap: usize) -> Result<(), Fail> {
    if cap < src.len() {
        return Err(Fail::Code(WB_ERR_BUFFER, format!("buffer holds {cap} values, need {}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Squared 2-Wasserstein distance by exact linear programming. Both measures
/// must declare the same domain box.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_w2sq(a: *const WbMeasure, b: *const WbMeasure, out: *mut f64) -> i32 {
    guard(|| {
        let cost = w2sq_lp(unsafe { &as_ref(a, "a")?.0 }, unsafe { &as_ref(b, "b")?.0 })?.cost;
        write(out, cost)
    })
}

/// Squared 2-Wasserstein distance of two 1D measures via quantile functions.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_w2sq_1d(a: *const WbMeasure, b: *const WbMeasure, out: *mut f64) -> i32 {
    guard(|| {
        let v = w2sq_1d(unsafe { &as_ref(a, "a")?.0 }, unsafe { &as_ref(b, "b")?.0 })?;
        write(out, v)
    })
}

fn write<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = v };
    Ok(())
}

/// Equal-weight barycenter of `count` 1D measures.
///
/// # Safety
/// `items` must hold `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_barycenter_1d(
    items: *const *const WbMeasure,
    count: usize,
    out: *mut *mut WbMeasure,
) -> i32 {
    guard(|| {
        let ms: Vec<DiscreteMeasure> = unsafe { measures(items, count)? }.into_iter().cloned().collect();
        store(out, WbMeasure(empirical_barycenter_1d(&ms)?))
    })
}

/// Free-support fixed-point barycenter, seeded from the first input's atoms.
/// All inputs must declare the same domain box.
/// `tol <= 0` selects the default tolerance. `iterations` may be null.
///
/// # Safety
/// `items` must hold `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_barycenter_fixed_support(
    items: *const *const WbMeasure,
    count: usize,
    max_iter: usize,
    tol: f64,
    out: *mut *mut WbMeasure,
    iterations: *mut usize,
) -> i32 {
    guard(|| {
        let ms: Vec<DiscreteMeasure> = unsafe { measures(items, count)? }.into_iter().cloned().collect();
        let opts = FixedSupportOptions { max_iter, tol: (tol > 0.0).then_some(tol) };
        let res = empirical_barycenter_fixed_support(&ms, None, &opts)?;
        if !iterations.is_null() {
            unsafe { *iterations = res.iterations };
        }
        store(out, WbMeasure(res.measure))
    })
}

/// Loads a family description file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_family_load(path: *const c_char, out: *mut *mut WbFamily) -> i32 {
    guard(|| {
        let f = load_family(unsafe { self::path(path)? })?;
        store(out, WbFamily(f))
    })
}

/// # Safety
/// `f` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wb_family_free(f: *mut WbFamily) {
    if !f.is_null() {
        drop(unsafe { Box::from_raw(f) });
    }
}

/// Primal and dual objectives on `nodes` quadrature nodes per parameter axis
/// and a dual grid of `cells` cells per axis; members use the same grid.
///
/// # Safety
/// `f` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_duality_check(
    f: *const WbFamily,
    nodes: usize,
    cells: usize,
    out: *mut WbDualityReport,
) -> i32 {
    guard(|| {
        let fam = unsafe { &as_ref(f, "family")?.0 };
        let law = population_law(fam, nodes)?;
        let geom = fam.omega_grid(&vec![cells; fam.dim()])?;
        let c = closed_form_check(fam, &law, &geom, &MemberScheme::Grid(geom.clone()))?;
        write(out, WbDualityReport { primal: c.primal, dual: c.dual, gap: c.gap(), relative_gap: c.relative_gap() })
    })
}
