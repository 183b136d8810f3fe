//! C interface to the `cprt` scorer.
//!
//! Every fallible function returns a [`CprtStatus`] and writes results through
//! out-pointers. On failure a description is available from
//! [`cprt_last_error`] on the same thread until the next failing call.
//! Severity levels cross the boundary as integers: 1..=4 for L1..L4 and 0 for
//! an image with no attributes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cprt::dataset_io::{parse_model_response, ResponseError};
use cprt::metrics::{pearson, spearman, MetricsError};
use cprt::scoring::{
    bucketize, counts_from_vector, severity_score, LevelCounts, ScoringError, SeverityScore,
};
use cprt::taxonomy::{
    classify_attribute, minimal_valid_weights, SeverityLevel, TaxonomyError, TaxonomyRegistry,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CprtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    IoError = 5,
    OutOfRange = 6,
    Internal = 7,
}

/// Opaque taxonomy handle. Create with one of the `cprt_registry_*`
/// constructors and release with [`cprt_registry_free`].
pub struct CprtRegistry {
    inner: TaxonomyRegistry,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: CprtStatus, message: impl Into<String>) -> CprtStatus {
    set_error(message);
    status
}

/// Runs `f`, turning panics into `Internal`.
fn guard(f: impl FnOnce() -> CprtStatus) -> CprtStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(CprtStatus::Internal, "internal panic"))
}

fn taxonomy_status(e: TaxonomyError) -> CprtStatus {
    let status = match e {
        TaxonomyError::Parse(_) | TaxonomyError::BadLevel(_) => CprtStatus::ParseError,
        TaxonomyError::Io { .. } => CprtStatus::IoError,
        TaxonomyError::AllNegative => CprtStatus::InvalidArgument,
        _ => CprtStatus::ValidationError,
    };
    fail(status, e.to_string())
}

fn scoring_status(e: ScoringError) -> CprtStatus {
    let status = match e {
        ScoringError::OutOfRange(_) => CprtStatus::OutOfRange,
        _ => CprtStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn metrics_status(e: MetricsError) -> CprtStatus {
    fail(CprtStatus::InvalidArgument, e.to_string())
}

fn level_code(level: Option<SeverityLevel>) -> i32 {
    level.map_or(0, |l| i32::from(l.number()))
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, CprtStatus> {
    if s.is_null() {
        return Err(fail(CprtStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(CprtStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn slice<'a, T>(data: *const T, len: usize) -> Result<&'a [T], CprtStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(CprtStatus::NullPointer, "null array"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn write_score(score: SeverityScore, out_score: *mut f64, out_level: *mut i32) {
    // SAFETY: callers check `out_score` for null; `out_level` is optional.
    unsafe {
        *out_score = score.value;
        if !out_level.is_null() {
            *out_level = level_code(score.determined_level);
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cprt_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cprt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// The built-in 22-attribute taxonomy. Never returns null.
#[no_mangle]
pub extern "C" fn cprt_registry_canonical() -> *mut CprtRegistry {
    Box::into_raw(Box::new(CprtRegistry {
        inner: TaxonomyRegistry::canonical(),
    }))
}

/// Parses and validates a taxonomy from JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cprt_registry_from_json(
    json: *const c_char,
    out: *mut *mut CprtRegistry,
) -> CprtStatus {
    guard(|| {
        if out.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match c_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match TaxonomyRegistry::from_json_str(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CprtRegistry { inner }));
                CprtStatus::Ok
            }
            Err(e) => taxonomy_status(e),
        }
    })
}

/// Loads and validates a taxonomy file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cprt_registry_load(
    path: *const c_char,
    out: *mut *mut CprtRegistry,
) -> CprtStatus {
    guard(|| {
        if out.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let path = match c_str(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match TaxonomyRegistry::load(path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CprtRegistry { inner }));
                CprtStatus::Ok
            }
            Err(e) => taxonomy_status(e),
        }
    })
}

/// Releases a registry. Null is ignored.
///
/// # Safety
/// `registry` must come from a `cprt_registry_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cprt_registry_free(registry: *mut CprtRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// Number of attributes in the registry, or 0 for null.
///
/// # Safety
/// `registry` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cprt_registry_attribute_count(registry: *const CprtRegistry) -> usize {
    registry.as_ref().map_or(0, |r| r.inner.len())
}

/// Scores per-level attribute counts. `out_level` may be null.
///
/// # Safety
/// `registry` must be a live handle, `counts` must point to 4 values and
/// `out_score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_score_counts(
    registry: *const CprtRegistry,
    counts: *const u64,
    out_score: *mut f64,
    out_level: *mut i32,
) -> CprtStatus {
    guard(|| {
        let Some(reg) = registry.as_ref() else {
            return fail(CprtStatus::NullPointer, "null registry");
        };
        if counts.is_null() || out_score.is_null() {
            return fail(CprtStatus::NullPointer, "null argument");
        }
        let c = std::slice::from_raw_parts(counts, 4);
        match severity_score(&LevelCounts::new(c[0], c[1], c[2], c[3]), &reg.inner) {
            Ok(s) => {
                write_score(s, out_score, out_level);
                CprtStatus::Ok
            }
            Err(e) => scoring_status(e),
        }
    })
}

/// Scores a binary attribute vector in registry order. `out_level` may be
/// null.
///
/// # Safety
/// `registry` must be a live handle, `vector` must point to `len` bytes and
/// `out_score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_score_vector(
    registry: *const CprtRegistry,
    vector: *const u8,
    len: usize,
    out_score: *mut f64,
    out_level: *mut i32,
) -> CprtStatus {
    guard(|| {
        let Some(reg) = registry.as_ref() else {
            return fail(CprtStatus::NullPointer, "null registry");
        };
        if out_score.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        let v = match slice(vector, len) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let result = counts_from_vector(v, &reg.inner).and_then(|c| severity_score(&c, &reg.inner));
        match result {
            Ok(s) => {
                write_score(s, out_score, out_level);
                CprtStatus::Ok
            }
            Err(e) => scoring_status(e),
        }
    })
}

/// Level (1..=4) of the registry interval containing `score`.
///
/// # Safety
/// `registry` must be a live handle and `out_level` valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_bucketize(
    registry: *const CprtRegistry,
    score: f64,
    out_level: *mut i32,
) -> CprtStatus {
    guard(|| {
        let Some(reg) = registry.as_ref() else {
            return fail(CprtStatus::NullPointer, "null registry");
        };
        if out_level.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        match bucketize(score, reg.inner.boundaries()) {
            Ok(l) => {
                *out_level = level_code(Some(l));
                CprtStatus::Ok
            }
            Err(e) => scoring_status(e),
        }
    })
}

/// Level (1..=4) from the four decision answers, taken in order.
///
/// # Safety
/// `answers` must point to 4 values and `out_level` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_classify(answers: *const bool, out_level: *mut i32) -> CprtStatus {
    guard(|| {
        if answers.is_null() || out_level.is_null() {
            return fail(CprtStatus::NullPointer, "null argument");
        }
        let a = std::slice::from_raw_parts(answers, 4);
        match classify_attribute([a[0], a[1], a[2], a[3]]) {
            Ok(l) => {
                *out_level = level_code(Some(l));
                CprtStatus::Ok
            }
            Err(e) => taxonomy_status(e),
        }
    })
}

/// Smallest weights satisfying the dominance constraint for the given
/// per-level cardinalities.
///
/// # Safety
/// `cardinalities` and `out_weights` must each point to 4 values.
#[no_mangle]
pub unsafe extern "C" fn cprt_minimal_weights(
    cardinalities: *const u64,
    out_weights: *mut u64,
) -> CprtStatus {
    guard(|| {
        if cardinalities.is_null() || out_weights.is_null() {
            return fail(CprtStatus::NullPointer, "null argument");
        }
        let c = std::slice::from_raw_parts(cardinalities, 4);
        let w = minimal_valid_weights(&[c[0], c[1], c[2], c[3]]);
        std::slice::from_raw_parts_mut(out_weights, 4).copy_from_slice(&w);
        CprtStatus::Ok
    })
}

/// Extracts a score in [0, 1] from free-form model output.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out_score` valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_parse_response(
    text: *const c_char,
    out_score: *mut f64,
) -> CprtStatus {
    guard(|| {
        if out_score.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        let text = match c_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_model_response(text) {
            Ok(v) => {
                *out_score = v;
                CprtStatus::Ok
            }
            Err(e @ ResponseError::OutOfRange(_)) => fail(CprtStatus::OutOfRange, e.to_string()),
            Err(e) => fail(CprtStatus::ParseError, e.to_string()),
        }
    })
}

unsafe fn correlation(
    f: fn(&[f64], &[f64]) -> Result<f64, MetricsError>,
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> CprtStatus {
    guard(|| {
        if out.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        let (x, y) = match (slice(x, len), slice(y, len)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match f(x, y) {
            Ok(v) => {
                *out = v;
                CprtStatus::Ok
            }
            Err(e) => metrics_status(e),
        }
    })
}

/// Pearson correlation of two arrays of length `len`.
///
/// # Safety
/// `x` and `y` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_pearson(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> CprtStatus {
    correlation(pearson, x, y, len, out)
}

/// Spearman correlation (average ranks for ties).
///
/// # Safety
/// `x` and `y` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_spearman(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> CprtStatus {
    correlation(spearman, x, y, len, out)
}

/// Cohen's kappa of two binary label arrays. `out_degenerate` (optional) is
/// set when kappa is undefined and reported as 0.
///
/// # Safety
/// `a` and `b` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cprt_kappa(
    a: *const u8,
    b: *const u8,
    len: usize,
    out: *mut f64,
    out_degenerate: *mut bool,
) -> CprtStatus {
    guard(|| {
        if out.is_null() {
            return fail(CprtStatus::NullPointer, "null output pointer");
        }
        let (a, b) = match (slice(a, len), slice(b, len)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cprt::annotation::cohen_kappa(a, b) {
            Ok(k) => {
                *out = k.value;
                if !out_degenerate.is_null() {
                    *out_degenerate = k.degenerate;
                }
                CprtStatus::Ok
            }
            Err(e) => fail(CprtStatus::InvalidArgument, e.to_string()),
        }
    })
}
