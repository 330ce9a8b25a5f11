//! C ABI over the fairness-verification toolkit: opaque model handles,
//! integer status codes, a thread-local last-error message, and JSON strings
//! for the structured inputs/outputs. All entry points are panic-safe.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use polyfair::density::DensityError;
use polyfair::geometry::GeometryError;
use polyfair::metrics::{build_report, MetricsError, ReportConfig};
use polyfair::model_io::{load_model, Dataset, FeatureSchema, FeedForwardNetwork};
use polyfair::reach::ReachError;

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyfairStatus {
    Ok = 0,
    /// A pointer argument was null or otherwise unusable.
    InvalidArgument = 1,
    /// Malformed input: JSON, schema, or model structure.
    Parse = 2,
    /// Problem size exceeds a configured ceiling (grid cells, branches,
    /// categorical assignments).
    Infeasible = 3,
    /// LP/geometry breakdown or divergent computation.
    Numerical = 4,
    /// A panic was caught at the boundary.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message for the most recent error on this thread, or null if the last call
/// succeeded. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn polyfair_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null(), |c| c.as_ptr())
    })
}

fn status_of_metrics(e: &MetricsError) -> PolyfairStatus {
    match e {
        MetricsError::Reach(r) => status_of_reach(r),
        MetricsError::Density(d) => status_of_density(d),
        MetricsError::Geometry(g) => status_of_geometry(g),
        _ => PolyfairStatus::Parse,
    }
}

fn status_of_reach(e: &ReachError) -> PolyfairStatus {
    match e {
        ReachError::BranchCeiling { .. } | ReachError::AssignmentCeiling { .. } => {
            PolyfairStatus::Infeasible
        }
        ReachError::Geometry(g) => status_of_geometry(g),
        _ => PolyfairStatus::Parse,
    }
}

fn status_of_density(e: &DensityError) -> PolyfairStatus {
    match e {
        DensityError::TooManyCells { .. } => PolyfairStatus::Infeasible,
        DensityError::Geometry(g) => status_of_geometry(g),
        _ => PolyfairStatus::Parse,
    }
}

fn status_of_geometry(e: &GeometryError) -> PolyfairStatus {
    match e {
        GeometryError::NumericalFailure(_) | GeometryError::Unbounded => PolyfairStatus::Numerical,
        _ => PolyfairStatus::Parse,
    }
}

/// Opaque handle to a loaded model (network + feature schema).
pub struct PolyfairModel {
    net: FeedForwardNetwork,
    schema: FeatureSchema,
}

fn guarded<F: FnOnce() -> PolyfairStatus>(f: F) -> PolyfairStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            PolyfairStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

/// Loads a model document (JSON with `schema` and `layers`) into a handle.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polyfair_model_load_json(
    json: *const c_char,
    out: *mut *mut PolyfairModel,
) -> PolyfairStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null".into());
            return PolyfairStatus::InvalidArgument;
        }
        let Some(text) = (unsafe { cstr(json) }) else {
            set_error("json pointer is null or not UTF-8".into());
            return PolyfairStatus::InvalidArgument;
        };
        match load_model(text) {
            Ok((net, schema)) => {
                clear_error();
                let handle = Box::new(PolyfairModel { net, schema });
                unsafe { *out = Box::into_raw(handle) };
                PolyfairStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                PolyfairStatus::Parse
            }
        }
    })
}

/// Loads a model document from a file path.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polyfair_model_load_file(
    path: *const c_char,
    out: *mut *mut PolyfairModel,
) -> PolyfairStatus {
    guarded(|| {
        let Some(p) = (unsafe { cstr(path) }) else {
            set_error("path pointer is null or not UTF-8".into());
            return PolyfairStatus::InvalidArgument;
        };
        match std::fs::read_to_string(p) {
            Ok(text) => {
                let c = CString::new(text).unwrap();
                unsafe { polyfair_model_load_json(c.as_ptr(), out) }
            }
            Err(e) => {
                set_error(format!("cannot read {p}: {e}"));
                PolyfairStatus::InvalidArgument
            }
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from a load call and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn polyfair_model_free(model: *mut PolyfairModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Encoded input width the model expects.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polyfair_model_input_dim(
    model: *const PolyfairModel,
    out: *mut usize,
) -> PolyfairStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            set_error("null pointer".into());
            return PolyfairStatus::InvalidArgument;
        }
        unsafe { *out = (*model).schema.input_dim() };
        clear_error();
        PolyfairStatus::Ok
    })
}

/// Raw logit of the model on an encoded input of length `len`.
///
/// # Safety
/// `model` must be a live handle, `x` must point to `len` doubles, and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polyfair_model_forward(
    model: *const PolyfairModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> PolyfairStatus {
    guarded(|| {
        if model.is_null() || x.is_null() || out.is_null() {
            set_error("null pointer".into());
            return PolyfairStatus::InvalidArgument;
        }
        let m = unsafe { &*model };
        let input = unsafe { std::slice::from_raw_parts(x, len) };
        match m.net.forward(input) {
            Ok(v) => {
                unsafe { *out = v };
                clear_error();
                PolyfairStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                PolyfairStatus::Parse
            }
        }
    })
}

/// Binary decision (1 = accept) on an encoded input of length `len`.
///
/// # Safety
/// As for `polyfair_model_forward`.
#[no_mangle]
pub unsafe extern "C" fn polyfair_model_decide(
    model: *const PolyfairModel,
    x: *const f64,
    len: usize,
    out: *mut u8,
) -> PolyfairStatus {
    guarded(|| {
        if model.is_null() || x.is_null() || out.is_null() {
            set_error("null pointer".into());
            return PolyfairStatus::InvalidArgument;
        }
        let m = unsafe { &*model };
        let input = unsafe { std::slice::from_raw_parts(x, len) };
        match m.net.decide(input) {
            Ok(v) => {
                unsafe { *out = v };
                clear_error();
                PolyfairStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                PolyfairStatus::Parse
            }
        }
    })
}

/// Runs the full exact verification pipeline against a dataset document
/// (JSON) and returns the fairness report as a newly allocated JSON string in
/// `out_json`; free it with `polyfair_string_free`.
///
/// # Safety
/// `model` must be a live handle, `dataset_json` a valid NUL-terminated
/// string, and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polyfair_verify(
    model: *const PolyfairModel,
    dataset_json: *const c_char,
    grid_bins: usize,
    out_json: *mut *mut c_char,
) -> PolyfairStatus {
    guarded(|| {
        if model.is_null() || out_json.is_null() {
            set_error("null pointer".into());
            return PolyfairStatus::InvalidArgument;
        }
        let Some(text) = (unsafe { cstr(dataset_json) }) else {
            set_error("dataset json is null or not UTF-8".into());
            return PolyfairStatus::InvalidArgument;
        };
        let m = unsafe { &*model };
        let dataset: Dataset = match serde_json::from_str::<serde_json::Value>(text)
            .map_err(|e| e.to_string())
            .and_then(|v| {
                let inner = v.get("dataset").cloned().unwrap_or(v);
                serde_json::from_value(inner).map_err(|e| e.to_string())
            }) {
            Ok(d) => d,
            Err(e) => {
                set_error(e);
                return PolyfairStatus::Parse;
            }
        };
        if dataset.schema != m.schema {
            set_error("model schema and dataset schema differ".into());
            return PolyfairStatus::Parse;
        }
        let config = ReportConfig {
            grid_bins: if grid_bins == 0 { 10 } else { grid_bins },
            ..ReportConfig::default()
        };
        match build_report(&m.net, &m.schema, &dataset, &config) {
            Ok(report) => {
                let json = serde_json::to_string_pretty(&report).unwrap();
                let c = CString::new(json).unwrap();
                unsafe { *out_json = c.into_raw() };
                clear_error();
                PolyfairStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of_metrics(&e)
            }
        }
    })
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn polyfair_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
