//! C ABI over `conelab`.
//!
//! Objects cross the boundary as opaque handles created by `*_from_json`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`ConelabStatus`]; the message of the last failure on the calling thread
//! is available from [`conelab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use conelab::cli::{preset_cone, run_config, ConeInput, FiberInput};
use conelab::cone::{GeneralizedCone, GridPoint};
use conelab::metricspace::{gh_distance, FiniteMetricSpace, GhMode};
use conelab::model2d::tcbb_verify;
use conelab::Verdict;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConelabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    /// The computation itself failed; see `conelab_last_error`.
    Compute = 5,
    Panic = 6,
}

/// Verdict of a checker, numbered like the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConelabVerdict {
    Pass = 0,
    Fail = 2,
    Inconclusive = 3,
}

impl From<Verdict> for ConelabVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => ConelabVerdict::Pass,
            Verdict::Fail => ConelabVerdict::Fail,
            Verdict::Inconclusive => ConelabVerdict::Inconclusive,
        }
    }
}

/// Opaque cone handle.
pub struct ConelabCone {
    inner: GeneralizedCone,
}

/// Opaque finite metric space handle.
pub struct ConelabSpace {
    inner: FiniteMetricSpace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: ConelabStatus, msg: impl Into<String>) -> ConelabStatus {
    set_error(msg.into());
    status
}

fn core_error(e: conelab::Error) -> ConelabStatus {
    let status = match e {
        conelab::Error::Json(_) => ConelabStatus::Parse,
        conelab::Error::InvalidInput(_) | conelab::Error::GridTooCoarse(_) | conelab::Error::SizeLimit { .. } => {
            ConelabStatus::InvalidInput
        }
        _ => ConelabStatus::Compute,
    };
    fail(status, format!("{}: {e}", e.code()))
}

fn guard(f: impl FnOnce() -> ConelabStatus) -> ConelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == ConelabStatus::Ok {
                set_error(String::new());
            }
            s
        }
        Err(_) => fail(ConelabStatus::Panic, "PANIC: internal error"),
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, ConelabStatus> {
    if s.is_null() {
        return Err(fail(ConelabStatus::NullPointer, "NULL_POINTER: string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(ConelabStatus::InvalidUtf8, "INVALID_UTF8: string argument is not UTF-8"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread (empty after a success).
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn conelab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn conelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a cone from a cone spec JSON document or `preset:NAME`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conelab_cone_from_json(json: *const c_char, out: *mut *mut ConelabCone) -> ConelabStatus {
    guard(|| {
        if out.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: out is null");
        }
        let text = tri!(read_str(json));
        let spec = match text.strip_prefix("preset:") {
            Some(name) => tri!(preset_cone(name).map_err(core_error)),
            None => {
                let input: ConeInput =
                    tri!(serde_json::from_str(text).map_err(|e| fail(ConelabStatus::Parse, format!("PARSE: {e}"))));
                tri!(input.spec().map_err(core_error))
            }
        };
        let cone = tri!(GeneralizedCone::new(spec).map_err(core_error));
        *out = Box::into_raw(Box::new(ConelabCone { inner: cone }));
        ConelabStatus::Ok
    })
}

/// Releases a cone. Null is ignored.
///
/// # Safety
/// `cone` must come from `conelab_cone_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn conelab_cone_free(cone: *mut ConelabCone) {
    if !cone.is_null() {
        drop(Box::from_raw(cone));
    }
}

/// Number of time rows and fiber points.
///
/// # Safety
/// `cone` must be a live handle; `nt` and `nx` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conelab_cone_dims(cone: *const ConelabCone, nt: *mut usize, nx: *mut usize) -> ConelabStatus {
    guard(|| {
        if cone.is_null() || nt.is_null() || nx.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: argument is null");
        }
        let c = &(*cone).inner;
        *nt = c.nt();
        *nx = c.fiber().n();
        ConelabStatus::Ok
    })
}

/// Lower and upper time separation from `(t0, x0)` to `(t1, x1)`; both are
/// `-INFINITY` for non-causal pairs.
///
/// # Safety
/// `cone` must be a live handle; `lo` and `hi` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conelab_cone_tau(
    cone: *const ConelabCone,
    t0: usize,
    x0: usize,
    t1: usize,
    x1: usize,
    lo: *mut f64,
    hi: *mut f64,
) -> ConelabStatus {
    guard(|| {
        if cone.is_null() || lo.is_null() || hi.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: argument is null");
        }
        let c = &(*cone).inner;
        if t0.max(t1) >= c.nt() || x0.max(x1) >= c.fiber().n() {
            return fail(ConelabStatus::InvalidInput, "INVALID_INPUT: point outside the grid");
        }
        let (p, q) = (GridPoint::new(t0, x0), GridPoint::new(t1, x1));
        *lo = c.signed_separation(p, q);
        *hi = c.signed_separation_hi(p, q);
        ConelabStatus::Ok
    })
}

/// Four-point comparison check on `samples` seeded configurations.
///
/// # Safety
/// `cone` must be a live handle; `worst_margin` and `verdict` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conelab_cone_tcbb(
    cone: *const ConelabCone,
    k: f64,
    samples: usize,
    tol: f64,
    seed: u64,
    worst_margin: *mut f64,
    verdict: *mut ConelabVerdict,
) -> ConelabStatus {
    guard(|| {
        if cone.is_null() || worst_margin.is_null() || verdict.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: argument is null");
        }
        let r = tri!(tcbb_verify(&(*cone).inner, k, samples, tol, seed).map_err(core_error));
        *worst_margin = r.worst_margin;
        *verdict = r.verdict.into();
        ConelabStatus::Ok
    })
}

/// Builds a finite metric space from `{n, base, dist}`, `{"segment": ...}`
/// or `{"circleArc": ...}` JSON.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conelab_space_from_json(json: *const c_char, out: *mut *mut ConelabSpace) -> ConelabStatus {
    guard(|| {
        if out.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: out is null");
        }
        let text = tri!(read_str(json));
        let input: FiberInput =
            tri!(serde_json::from_str(text).map_err(|e| fail(ConelabStatus::Parse, format!("PARSE: {e}"))));
        let space = tri!(input.build().map_err(core_error));
        *out = Box::into_raw(Box::new(ConelabSpace { inner: space }));
        ConelabStatus::Ok
    })
}

/// Releases a metric space. Null is ignored.
///
/// # Safety
/// `space` must come from `conelab_space_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn conelab_space_free(space: *mut ConelabSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Gromov-Hausdorff bracket; `exact` selects exhaustive search (small
/// spaces only) over the heuristic.
///
/// # Safety
/// `a` and `b` must be live handles; `lower` and `upper` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conelab_gh(
    a: *const ConelabSpace,
    b: *const ConelabSpace,
    exact: bool,
    lower: *mut f64,
    upper: *mut f64,
) -> ConelabStatus {
    guard(|| {
        if a.is_null() || b.is_null() || lower.is_null() || upper.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: argument is null");
        }
        let mode = if exact { GhMode::Exact } else { GhMode::Heuristic };
        let r = tri!(gh_distance(&(*a).inner, &(*b).inner, mode).map_err(core_error));
        *lower = r.lower;
        *upper = r.upper;
        ConelabStatus::Ok
    })
}

/// Runs an experiment config (the JSON accepted by `conelab run`) and hands
/// back the report as a newly allocated JSON string. Relative paths resolve
/// against the current directory. `exit_code` receives the CLI exit code
/// (0, 2 or 3). Release the report with `conelab_string_free`.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string; `report` and
/// `exit_code` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn conelab_run_json(
    config_json: *const c_char,
    report: *mut *mut c_char,
    exit_code: *mut i32,
) -> ConelabStatus {
    guard(|| {
        if report.is_null() || exit_code.is_null() {
            return fail(ConelabStatus::NullPointer, "NULL_POINTER: argument is null");
        }
        let text = tri!(read_str(config_json));
        let value: serde_json::Value =
            tri!(serde_json::from_str(text).map_err(|e| fail(ConelabStatus::Parse, format!("PARSE: {e}"))));
        let outcome = tri!(run_config(&value, Path::new("")).map_err(|f| {
            let status = match f.code.as_str() {
                "CONFIG" | "USAGE" | "INVALID_INPUT" => ConelabStatus::InvalidInput,
                "PARSE" | "JSON" => ConelabStatus::Parse,
                _ => ConelabStatus::Compute,
            };
            fail(status, format!("{}: {}", f.code, f.message))
        }));
        let body = outcome.report.to_string();
        *report = CString::new(body).unwrap_or_default().into_raw();
        *exit_code = outcome.exit_code();
        ConelabStatus::Ok
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn conelab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
