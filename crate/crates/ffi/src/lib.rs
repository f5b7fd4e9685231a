//! C interface to hfanova.
//!
//! Objects are opaque handles created by `hf_*_new`/`hf_*_from_*` and
//! released with the matching `hf_*_free`. Every fallible function returns
//! an `HfStatus`; on failure a description is available from
//! `hf_last_error_message` on the same thread. Panics never cross the
//! boundary, they are reported as `HF_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hfanova::{
    bootstrap_matrix, build_contrasts, gph_statistic, ingest_csv, mct_from_matrix, BootstrapConfig,
    ContrastKind, Dataset, Error, FunctionalSample, Grid, HypothesisFamily, MctResult,
};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidDesign = 3,
    InvalidHypothesis = 4,
    Numeric = 5,
    Io = 6,
    Ingest = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfContrast {
    Centering = 0,
    Dunnett = 1,
    Tukey = 2,
}

/// Opaque dataset handle.
pub struct HfDataset(Dataset);

/// Opaque hypothesis family handle.
pub struct HfFamily(HypothesisFamily);

/// Opaque mGPH result handle.
pub struct HfMctResult(MctResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HfGlobalTest {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HfMctBlock {
    pub statistic: f64,
    pub critical_value: f64,
    pub adjusted_p: f64,
    pub reject: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HfStatus {
    match e {
        Error::InvalidDesign(_) | Error::InvalidGrid(_) | Error::InsufficientSample { .. } => {
            HfStatus::InvalidDesign
        }
        Error::InvalidHypothesis(_) => HfStatus::InvalidHypothesis,
        Error::Numeric(_) | Error::NotPsd { .. } => HfStatus::Numeric,
        Error::Io { .. } => HfStatus::Io,
        Error::Ingest { .. } => HfStatus::Ingest,
        Error::Config(_) | Error::Json(_) => HfStatus::InvalidArgument,
    }
}

struct Failure(HfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HfStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            HfStatus::Internal
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn config(replicates: usize, alpha: f64, seed: u64) -> Result<BootstrapConfig, Failure> {
    Ok(BootstrapConfig::new(replicates, alpha, seed)?)
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset of `k` groups on `m` grid points. `values` holds the
/// curves row-major, group 1's `sizes[0]` curves first.
///
/// # Safety
/// `sizes` must point to `k` values, `grid` to `m`, `values` to
/// `m·Σ sizes`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_dataset_new(
    k: usize,
    sizes: *const usize,
    m: usize,
    grid: *const f64,
    values: *const f64,
    out: *mut *mut HfDataset,
) -> HfStatus {
    guard(|| {
        let sizes = slice(sizes, k, "sizes")?;
        let grid = Grid::new(slice(grid, m, "grid")?.to_vec())?;
        let total: usize = sizes.iter().sum();
        let values = slice(values, total * m, "values")?;
        let mut offset = 0;
        let mut samples = Vec::with_capacity(k);
        for (i, &n) in sizes.iter().enumerate() {
            let v = &values[offset * m..(offset + n) * m];
            samples.push(FunctionalSample::new(i + 1, DMatrix::from_row_slice(n, m, v))?);
            offset += n;
        }
        let data = Dataset::new(grid, samples)?;
        write_out(out, Box::into_raw(Box::new(HfDataset(data))), "out")
    })
}

/// Reads a dataset from a CSV file (header `group,t1,...,tm`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_dataset_from_csv(path: *const c_char, out: *mut *mut HfDataset) -> HfStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(HfStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let data = ingest_csv(path)?;
        write_out(out, Box::into_raw(Box::new(HfDataset(data))), "out")
    })
}

/// # Safety
/// `data` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_dataset_free(data: *mut HfDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Number of groups, 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_dataset_num_groups(data: *const HfDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.num_groups())
}

/// Number of grid points, 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_dataset_grid_len(data: *const HfDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.grid_len())
}

/// Standard contrast family for `k` groups; `kind` is an `HfContrast`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_family_contrasts(kind: i32, k: usize, out: *mut *mut HfFamily) -> HfStatus {
    guard(|| {
        let kind = match kind {
            x if x == HfContrast::Centering as i32 => ContrastKind::Centering,
            x if x == HfContrast::Dunnett as i32 => ContrastKind::Dunnett,
            x if x == HfContrast::Tukey as i32 => ContrastKind::Tukey,
            other => {
                return Err(Failure(HfStatus::InvalidArgument, format!("unknown contrast kind {other}")));
            }
        };
        let family = build_contrasts(kind, k)?;
        write_out(out, Box::into_raw(Box::new(HfFamily(family))), "out")
    })
}

/// Family of `num_blocks` blocks; block `l` has `rows[l]` rows of `k`
/// coefficients, all stored row-major one after another in `coefficients`.
/// Blocks are labeled "1", "2", ….
///
/// # Safety
/// `rows` must point to `num_blocks` values and `coefficients` to
/// `k·Σ rows`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_family_new(
    num_blocks: usize,
    rows: *const usize,
    k: usize,
    coefficients: *const f64,
    out: *mut *mut HfFamily,
) -> HfStatus {
    guard(|| {
        let rows = slice(rows, num_blocks, "rows")?;
        let total: usize = rows.iter().sum();
        let coefficients = slice(coefficients, total * k, "coefficients")?;
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(num_blocks);
        for &r in rows {
            blocks.push(DMatrix::from_row_slice(r, k, &coefficients[offset * k..(offset + r) * k]));
            offset += r;
        }
        let labels = (1..=num_blocks).map(|l| l.to_string()).collect();
        let family = HypothesisFamily::new(blocks, labels)?;
        write_out(out, Box::into_raw(Box::new(HfFamily(family))), "out")
    })
}

/// # Safety
/// `family` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_family_free(family: *mut HfFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// Number of blocks, 0 for NULL.
///
/// # Safety
/// `family` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_family_num_blocks(family: *const HfFamily) -> usize {
    family.as_ref().map_or(0, |f| f.0.num_blocks())
}

/// Writes the GPH statistic of every block to `out[0..len]`; `len` must
/// equal the number of blocks.
///
/// # Safety
/// Handles must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_gph_statistic(
    data: *const HfDataset,
    family: *const HfFamily,
    out: *mut f64,
    len: usize,
) -> HfStatus {
    guard(|| {
        let data = &reference(data, "data")?.0;
        let family = &reference(family, "family")?.0;
        if len != family.num_blocks() {
            return Err(Failure(
                HfStatus::InvalidArgument,
                format!("output has {len} slots for {} blocks", family.num_blocks()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let stat = gph_statistic(data, family)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&stat.per_block);
        Ok(())
    })
}

/// Global parametric bootstrap GPH test; all blocks of `family` are stacked
/// into one hypothesis.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_global_test(
    data: *const HfDataset,
    family: *const HfFamily,
    replicates: usize,
    alpha: f64,
    seed: u64,
    out: *mut HfGlobalTest,
) -> HfStatus {
    guard(|| {
        let data = &reference(data, "data")?.0;
        let family = reference(family, "family")?.0.collapsed();
        let r = hfanova::global_test(data, &family, &config(replicates, alpha, seed)?)?;
        write_out(
            out,
            HfGlobalTest {
                statistic: r.statistic,
                critical_value: r.critical_value,
                p_value: r.p_value,
                reject: r.reject,
            },
            "out",
        )
    })
}

/// mGPH multiple contrast test.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_mct(
    data: *const HfDataset,
    family: *const HfFamily,
    replicates: usize,
    alpha: f64,
    seed: u64,
    out: *mut *mut HfMctResult,
) -> HfStatus {
    guard(|| {
        let data = &reference(data, "data")?.0;
        let family = &reference(family, "family")?.0;
        let config = config(replicates, alpha, seed)?;
        let observed = gph_statistic(data, family)?.per_block;
        let matrix = bootstrap_matrix(data, family, &config)?;
        let result = mct_from_matrix(&observed, &matrix, alpha)?;
        write_out(out, Box::into_raw(Box::new(HfMctResult(result))), "out")
    })
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_mct_free(result: *mut HfMctResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_mct_num_blocks(result: *const HfMctResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.observed.len())
}

/// Calibrated level β̃, NaN for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_mct_beta_tilde(result: *const HfMctResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.beta_tilde)
}

/// Whether any block was rejected; false for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_mct_global_reject(result: *const HfMctResult) -> bool {
    result.as_ref().is_some_and(|r| r.0.global_reject)
}

/// Decision for block `l`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_mct_block(result: *const HfMctResult, l: usize, out: *mut HfMctBlock) -> HfStatus {
    guard(|| {
        let r = &reference(result, "result")?.0;
        if l >= r.observed.len() {
            return Err(Failure(
                HfStatus::InvalidArgument,
                format!("block {l} out of range ({} blocks)", r.observed.len()),
            ));
        }
        write_out(
            out,
            HfMctBlock {
                statistic: r.observed[l],
                critical_value: r.critical[l],
                adjusted_p: r.adjusted_p[l],
                reject: r.local_reject[l],
            },
            "out",
        )
    })
}
