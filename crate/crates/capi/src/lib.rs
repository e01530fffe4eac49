//! C ABI over the scoring and filtering primitives so other languages can
//! bind without reimplementing the metrics.
//!
//! Conventions: functions return [`CscStatus`]; results go through out
//! pointers; manifests are opaque handles freed with
//! `cscurate_manifest_free`; strings returned by this library are freed with
//! `cscurate_string_free`. A per-thread message for the last error is
//! available via `cscurate_last_error_message`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::PathBuf;

use libc::{c_char, c_double};

use cscurate::filter::hypo_mer;
use cscurate::manifest::{read_manifest, total_duration, Manifest};
use cscurate::metrics::{error_rate, MetricMode};
use cscurate::textnorm::normalize;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let cstring = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CscStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    InvalidData = 4,
}

/// Metric selector, mirroring the scoring modes of the core library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CscMetric {
    Cer = 0,
    Wer = 1,
    Mer = 2,
}

impl From<CscMetric> for MetricMode {
    fn from(metric: CscMetric) -> Self {
        match metric {
            CscMetric::Cer => MetricMode::Cer,
            CscMetric::Wer => MetricMode::Wer,
            CscMetric::Mer => MetricMode::Mer,
        }
    }
}

/// Error-rate result with raw counts.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CscErrorRate {
    pub errors: usize,
    pub ref_len: usize,
    pub rate: c_double,
}

/// Opaque manifest handle.
pub struct CscManifest {
    inner: Manifest,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, CscStatus> {
    if ptr.is_null() {
        return Err(CscStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8".into());
        CscStatus::InvalidUtf8
    })
}

/// Message for the most recent error on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn cscurate_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

/// Scores `hyp_text` against `ref_text` in the given metric and writes the
/// result to `out`.
///
/// # Safety
/// `ref_text` and `hyp_text` must be NUL-terminated strings; `out` must point
/// to a writable `CscErrorRate`.
#[no_mangle]
pub unsafe extern "C" fn cscurate_error_rate(
    ref_text: *const c_char,
    hyp_text: *const c_char,
    metric: CscMetric,
    out: *mut CscErrorRate,
) -> CscStatus {
    if out.is_null() {
        return CscStatus::NullArgument;
    }
    let reference = match cstr_arg(ref_text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let hypothesis = match cstr_arg(hyp_text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let rate = error_rate(reference, hypothesis, metric.into());
    *out = CscErrorRate {
        errors: rate.errors,
        ref_len: rate.ref_len,
        rate: rate.rate,
    };
    CscStatus::Ok
}

/// Greedy-vs-corrected discrepancy (corrected text as reference).
///
/// # Safety
/// Both texts must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cscurate_hypo_mer(
    greedy_text: *const c_char,
    corrected_text: *const c_char,
    metric: CscMetric,
    out: *mut c_double,
) -> CscStatus {
    if out.is_null() {
        return CscStatus::NullArgument;
    }
    let greedy = match cstr_arg(greedy_text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let corrected = match cstr_arg(corrected_text) {
        Ok(s) => s,
        Err(status) => return status,
    };
    *out = hypo_mer(greedy, corrected, metric.into());
    CscStatus::Ok
}

/// Scoring normalization of `text`. The returned string must be freed with
/// `cscurate_string_free`; returns NULL on invalid input.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cscurate_normalize(text: *const c_char) -> *mut c_char {
    let Ok(text) = cstr_arg(text) else {
        return std::ptr::null_mut();
    };
    CString::new(normalize(text)).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must originate from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn cscurate_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a manifest file into an opaque handle written to `out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable. The
/// handle must be released with `cscurate_manifest_free`.
#[no_mangle]
pub unsafe extern "C" fn cscurate_manifest_read(
    path: *const c_char,
    out: *mut *mut CscManifest,
) -> CscStatus {
    if out.is_null() {
        return CscStatus::NullArgument;
    }
    let path = match cstr_arg(path) {
        Ok(s) => PathBuf::from(s),
        Err(status) => return status,
    };
    match read_manifest(&path) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(CscManifest { inner }));
            CscStatus::Ok
        }
        Err(err) => {
            set_last_error(err.to_string());
            match err {
                cscurate::Error::Io { .. } => CscStatus::IoError,
                _ => CscStatus::InvalidData,
            }
        }
    }
}

/// Number of entries in a manifest handle; 0 for NULL.
///
/// # Safety
/// `manifest` must be a live handle from `cscurate_manifest_read` or NULL.
#[no_mangle]
pub unsafe extern "C" fn cscurate_manifest_len(manifest: *const CscManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.inner.len())
}

/// Total duration in seconds of all entries; 0 for NULL.
///
/// # Safety
/// `manifest` must be a live handle from `cscurate_manifest_read` or NULL.
#[no_mangle]
pub unsafe extern "C" fn cscurate_manifest_total_duration_s(
    manifest: *const CscManifest,
) -> c_double {
    manifest.as_ref().map_or(0.0, |m| total_duration(&m.inner.entries))
}

/// Releases a manifest handle. NULL is a no-op.
///
/// # Safety
/// `manifest` must originate from `cscurate_manifest_read` and not already
/// be freed.
#[no_mangle]
pub unsafe extern "C" fn cscurate_manifest_free(manifest: *mut CscManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}
