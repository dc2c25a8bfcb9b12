//! C interface to `higgs-torus`.
//!
//! Data and metrics live behind opaque handles created by this library and
//! released with the matching `*_free` function. Every fallible call returns
//! an [`HtStatus`]; on failure [`ht_last_error`] describes what went wrong.
//! Strings returned through `char **` are owned by the caller and released
//! with [`ht_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use higgs_torus::model::{gen_planted, io, HiggsDatum};
use higgs_torus::polystability::{check_polystable, Verdict};
use higgs_torus::yang_mills::{
    construct_ym_metric, flow_solve, parse_metric, serialize_metric, ym_residual, FlowOptions, FlowVerdict,
    MetricDatum,
};
use higgs_torus::{Error, Tolerances};

/// Status codes; the first four match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HtStatus {
    Ok = 0,
    Negative = 1,
    InvalidInput = 2,
    Numerical = 3,
    NullPointer = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HtFlowVerdict {
    Converged = 0,
    Degenerating = 1,
    BudgetExhausted = 2,
}

/// Numerical thresholds; see `ht_tolerances_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HtTolerances {
    pub tau_commute: f64,
    pub tau_rank: f64,
    pub tau_cluster: f64,
    pub kappa_max: f64,
}

/// Opaque Higgs datum.
pub struct HtDatum(HiggsDatum);

/// Opaque per-block metric.
pub struct HtMetric(MetricDatum);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> HtStatus {
    match err {
        e if e.is_numerical() => HtStatus::Numerical,
        Error::Precondition(_) => HtStatus::Negative,
        _ => HtStatus::InvalidInput,
    }
}

fn fail(err: Error) -> HtStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> HtStatus {
    set_error(format!("null pointer: {what}"));
    HtStatus::NullPointer
}

/// Runs `body`, converting panics into `HtStatus::Panic`.
fn guard(body: impl FnOnce() -> HtStatus) -> HtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HtStatus::Panic
        }
    }
}

fn tolerances(tol: *const HtTolerances) -> Result<Tolerances, Error> {
    let t = if tol.is_null() {
        Tolerances::default()
    } else {
        // SAFETY: caller passes a valid pointer or null.
        let t = unsafe { *tol };
        Tolerances { tau_commute: t.tau_commute, tau_rank: t.tau_rank, tau_cluster: t.tau_cluster, kappa_max: t.kappa_max }
    };
    t.check()?;
    Ok(t)
}

fn give_string(bytes: Vec<u8>, out: *mut *mut c_char) -> HtStatus {
    match CString::new(bytes) {
        Ok(s) => {
            // SAFETY: checked non-null by callers.
            unsafe { *out = s.into_raw() };
            HtStatus::Ok
        }
        Err(_) => {
            set_error("output contains an interior NUL");
            HtStatus::InvalidInput
        }
    }
}

/// # Safety
/// `bytes` must point to `len` readable bytes.
unsafe fn slice<'a>(bytes: *const u8, len: usize) -> &'a [u8] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(bytes, len)
    }
}

#[no_mangle]
pub extern "C" fn ht_tolerances_default() -> HtTolerances {
    let t = Tolerances::default();
    HtTolerances { tau_commute: t.tau_commute, tau_rank: t.tau_rank, tau_cluster: t.tau_cluster, kappa_max: t.kappa_max }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ht_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a datum from JSON bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes; `tol` may be null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_datum_from_json(
    json: *const u8,
    len: usize,
    tol: *const HtTolerances,
    out: *mut *mut HtDatum,
) -> HtStatus {
    guard(|| {
        if json.is_null() && len > 0 {
            return null("json");
        }
        if out.is_null() {
            return null("out");
        }
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match io::parse(slice(json, len), &tol) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(HtDatum(d)));
                HtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes a datum as NUL-terminated JSON.
///
/// # Safety
/// `datum` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_datum_to_json(datum: *const HtDatum, out: *mut *mut c_char) -> HtStatus {
    guard(|| {
        let (Some(d), false) = (datum.as_ref(), out.is_null()) else {
            return null("datum or out");
        };
        give_string(io::serialize(&d.0), out)
    })
}

/// Draws a planted polystable datum with `nblocks` blocks of the given sizes.
///
/// # Safety
/// `sizes` must point to `nblocks` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_gen_planted(
    dim: usize,
    sizes: *const usize,
    nblocks: usize,
    seed: u64,
    out: *mut *mut HtDatum,
) -> HtStatus {
    guard(|| {
        if sizes.is_null() || out.is_null() {
            return null("sizes or out");
        }
        let sizes = std::slice::from_raw_parts(sizes, nblocks);
        match gen_planted(dim, sizes, None, seed) {
            Ok((d, _)) => {
                *out = Box::into_raw(Box::new(HtDatum(d)));
                HtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Decides polystability. Returns `HT_STATUS_OK` when polystable and
/// `HT_STATUS_NEGATIVE` otherwise; `report` (nullable) receives the JSON report.
///
/// # Safety
/// `datum` must be a live handle; `tol` and `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn ht_check_polystable(
    datum: *const HtDatum,
    tol: *const HtTolerances,
    report: *mut *mut c_char,
) -> HtStatus {
    guard(|| {
        let Some(d) = datum.as_ref() else {
            return null("datum");
        };
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match check_polystable(&d.0, &tol) {
            Ok(r) => {
                if !report.is_null() {
                    let status = give_string(io::to_json(&r), report);
                    if status != HtStatus::Ok {
                        return status;
                    }
                }
                if r.verdict == Verdict::Polystable {
                    HtStatus::Ok
                } else {
                    set_error(r.verdict.as_str());
                    HtStatus::Negative
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes the Levi type (multiplicities, descending) into `out[0..cap]` and
/// its full length into `len`. Returns `HT_STATUS_NEGATIVE` when the datum is
/// not polystable.
///
/// # Safety
/// `datum` must be a live handle; `out` must hold `cap` values (may be null
/// when `cap` is 0); `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_levi_type(
    datum: *const HtDatum,
    tol: *const HtTolerances,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> HtStatus {
    guard(|| {
        let Some(d) = datum.as_ref() else {
            return null("datum");
        };
        if len.is_null() || (out.is_null() && cap > 0) {
            return null("out or len");
        }
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match check_polystable(&d.0, &tol) {
            Ok(r) => match r.levi_type() {
                Some(levi) => {
                    *len = levi.len();
                    for (k, m) in levi.iter().take(cap).enumerate() {
                        *out.add(k) = *m;
                    }
                    HtStatus::Ok
                }
                None => {
                    *len = 0;
                    set_error(r.verdict.as_str());
                    HtStatus::Negative
                }
            },
            Err(e) => fail(e),
        }
    })
}

/// Builds the Yang–Mills metric of a polystable datum directly.
///
/// # Safety
/// `datum` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_construct_metric(
    datum: *const HtDatum,
    tol: *const HtTolerances,
    out: *mut *mut HtMetric,
) -> HtStatus {
    guard(|| {
        let (Some(d), false) = (datum.as_ref(), out.is_null()) else {
            return null("datum or out");
        };
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match construct_ym_metric(&d.0, &tol) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(HtMetric(m)));
                HtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the gradient flow from the identity metric. The final metric is
/// returned whatever the verdict; `steps` may be null.
///
/// # Safety
/// `datum` must be a live handle; `out` and `verdict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_flow_solve(
    datum: *const HtDatum,
    tol: *const HtTolerances,
    max_steps: usize,
    out: *mut *mut HtMetric,
    verdict: *mut HtFlowVerdict,
    steps: *mut usize,
) -> HtStatus {
    guard(|| {
        let (Some(d), false, false) = (datum.as_ref(), out.is_null(), verdict.is_null()) else {
            return null("datum, out or verdict");
        };
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let opts = FlowOptions { max_steps, step_size: None, tol };
        match flow_solve(&d.0, None, &opts) {
            Ok(r) => {
                *verdict = match r.verdict {
                    FlowVerdict::Converged => HtFlowVerdict::Converged,
                    FlowVerdict::Degenerating => HtFlowVerdict::Degenerating,
                    FlowVerdict::BudgetExhausted => HtFlowVerdict::BudgetExhausted,
                };
                if !steps.is_null() {
                    *steps = r.steps;
                }
                *out = Box::into_raw(Box::new(HtMetric(r.metric)));
                HtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Yang–Mills and flatness residuals of a metric; `ym` and `flatness` may be null.
///
/// # Safety
/// `datum` and `metric` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn ht_ym_residual(
    datum: *const HtDatum,
    metric: *const HtMetric,
    tol: *const HtTolerances,
    ym: *mut f64,
    flatness: *mut f64,
) -> HtStatus {
    guard(|| {
        let (Some(d), Some(m)) = (datum.as_ref(), metric.as_ref()) else {
            return null("datum or metric");
        };
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match ym_residual(&d.0, &m.0, &tol) {
            Ok(r) => {
                if !ym.is_null() {
                    *ym = r.ym_residual;
                }
                if !flatness.is_null() {
                    *flatness = r.flatness_residual;
                }
                HtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses and validates a metric from JSON bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_metric_from_json(
    json: *const u8,
    len: usize,
    tol: *const HtTolerances,
    out: *mut *mut HtMetric,
) -> HtStatus {
    guard(|| {
        if (json.is_null() && len > 0) || out.is_null() {
            return null("json or out");
        }
        let tol = match tolerances(tol) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        match parse_metric(slice(json, len), &tol) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(HtMetric(m)));
                HtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes a metric as NUL-terminated JSON.
///
/// # Safety
/// `metric` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ht_metric_to_json(metric: *const HtMetric, out: *mut *mut c_char) -> HtStatus {
    guard(|| {
        let (Some(m), false) = (metric.as_ref(), out.is_null()) else {
            return null("metric or out");
        };
        give_string(serialize_metric(&m.0), out)
    })
}

/// # Safety
/// `datum` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_datum_free(datum: *mut HtDatum) {
    if !datum.is_null() {
        drop(Box::from_raw(datum));
    }
}

/// # Safety
/// `metric` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_metric_free(metric: *mut HtMetric) {
    if !metric.is_null() {
        drop(Box::from_raw(metric));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ht_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies the last error message, for callers in safe Rust.
pub fn last_error_message() -> Option<String> {
    let p = ht_last_error();
    if p.is_null() {
        None
    } else {
        // SAFETY: points into the thread-local CString.
        Some(unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
    }
}
