//! C ABI over the rrnginar library.
//!
//! Conventions: every function returns an [`RrnStatus`]; outputs come back
//! through out-pointers. Structured values (model documents, method
//! parameters, fit results) travel as JSON strings in the same schemas the
//! CLI uses. Handles (`RrnModel`, `RrnSeries`) are opaque; free them with
//! their matching `_free` function, and free returned strings with
//! [`rrn_string_free`]. On any non-zero status, [`rrn_last_error_message`]
//! holds a thread-local description of the failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rrnginar::cluster::{baseline_states, renes_states};
use rrnginar::io::ModelConfig;
use rrnginar::likelihood::{cml_fit, forecast, predict, rms, FitResult};
use rrnginar::model::{CountSeries, EnvSequence, OrderRule, Variant};
use rrnginar::preestimate::RenesConfig;
use rrnginar::sampling::{simulate, EnvSource, SimOutput};
use rrnginar::Error;

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrnStatus {
    RrnOk = 0,
    /// A pointer argument was null or an enum value was out of range.
    RrnErrInvalidArg = 1,
    /// JSON or CSV input failed to parse.
    RrnErrParse = 2,
    /// The model or method configuration violates an invariant.
    RrnErrModel = 3,
    /// A numeric routine failed (infeasible parameters, degenerate data).
    RrnErrNumeric = 4,
    RrnErrIo = 5,
    /// An internal panic was caught at the boundary.
    RrnErrPanic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> RrnStatus {
    match err {
        Error::Json(_) | Error::Csv(_) | Error::CsvParse { .. } | Error::MissingColumn(_) => {
            RrnStatus::RrnErrParse
        }
        Error::InvalidModel(_) => RrnStatus::RrnErrModel,
        Error::Io(_) => RrnStatus::RrnErrIo,
        _ => RrnStatus::RrnErrNumeric,
    }
}

fn fail(err: Error) -> RrnStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn invalid(msg: &str) -> RrnStatus {
    set_error(msg);
    RrnStatus::RrnErrInvalidArg
}

fn guard<F: FnOnce() -> RrnStatus>(f: F) -> RrnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            RrnStatus::RrnErrPanic
        }
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn order_rule_from(raw: i32) -> Option<OrderRule> {
    match raw {
        0 => Some(OrderRule::Min),
        1 => Some(OrderRule::LiteralMax),
        _ => None,
    }
}

fn variant_from(raw: i32) -> Option<Variant> {
    match raw {
        0 => Some(Variant::Max),
        1 => Some(Variant::One),
        _ => None,
    }
}

/// Opaque model document: parameters plus environment chain.
pub struct RrnModel {
    config: ModelConfig,
}

/// Opaque simulated trajectory.
pub struct RrnSeries {
    sim: SimOutput,
}

/// Library version string; static storage, do not free.
#[no_mangle]
pub extern "C" fn rrn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn rrn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned through an out-pointer.
///
/// # Safety
/// `ptr` must have been produced by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn rrn_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Parses a JSON model document (keys `variant`, `r`, `M`, `A`, `P`, `phi`,
/// `p_vec`, `p_mat`) and validates it.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn rrn_model_from_json(
    json: *const c_char,
    out: *mut *mut RrnModel,
) -> RrnStatus {
    guard(|| {
        let (Some(text), false) = (cstr(json), out.is_null()) else {
            return invalid("null or non-UTF8 argument");
        };
        let config: ModelConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(Error::Json(e)),
        };
        let violations = rrnginar::validate_model(&config.params(), &config.env());
        if !violations.is_empty() {
            return fail(Error::InvalidModel(violations.join("; ")));
        }
        *out = Box::into_raw(Box::new(RrnModel { config }));
        RrnStatus::RrnOk
    })
}

/// Serializes the model document back to JSON.
///
/// # Safety
/// `model` must be a live handle from [`rrn_model_from_json`]; `out` non-null.
#[no_mangle]
pub unsafe extern "C" fn rrn_model_to_json(
    model: *const RrnModel,
    out: *mut *mut c_char,
) -> RrnStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return invalid("null argument");
        }
        let json = serde_json::to_string(&(*model).config).expect("serializable config");
        *out = CString::new(json).unwrap().into_raw();
        RrnStatus::RrnOk
    })
}

/// # Safety
/// `model` must come from [`rrn_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rrn_model_free(model: *mut RrnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates `n` steps. `order_rule`: 0 = min, 1 = literal max.
///
/// # Safety
/// `model` must be a live handle; `out` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn rrn_simulate(
    model: *const RrnModel,
    n: usize,
    order_rule: i32,
    seed: u64,
    out: *mut *mut RrnSeries,
) -> RrnStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return invalid("null argument");
        }
        let Some(rule) = order_rule_from(order_rule) else {
            return invalid("order_rule must be 0 (min) or 1 (literal max)");
        };
        let config = &(*model).config;
        let params = config.params();
        let env = config.env();
        match simulate(&params, EnvSource::Chain(&env), n, rule, seed) {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(RrnSeries { sim }));
                RrnStatus::RrnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `series` must be a live handle (null returns 0).
#[no_mangle]
pub unsafe extern "C" fn rrn_series_len(series: *const RrnSeries) -> usize {
    if series.is_null() {
        0
    } else {
        (*series).sim.x.len()
    }
}

/// Copies counts, states, working orders and chosen lags into caller
/// buffers. Any buffer pointer may be null to skip that column; non-null
/// buffers must hold `rrn_series_len` elements.
///
/// # Safety
/// Non-null buffers must be valid for `rrn_series_len(series)` writes.
#[no_mangle]
pub unsafe extern "C" fn rrn_series_copy(
    series: *const RrnSeries,
    x_out: *mut u64,
    z_out: *mut u32,
    p_out: *mut u32,
    lag_out: *mut u32,
) -> RrnStatus {
    guard(|| {
        if series.is_null() {
            return invalid("null series");
        }
        let sim = &(*series).sim;
        let n = sim.x.len();
        if !x_out.is_null() {
            std::ptr::copy_nonoverlapping(sim.x.x.as_ptr(), x_out, n);
        }
        for (buf, data) in [
            (z_out, &sim.z.z),
            (p_out, &sim.pn.pn),
            (lag_out, &sim.chosen_lag),
        ] {
            if !buf.is_null() {
                for (i, &v) in data.iter().enumerate() {
                    *buf.add(i) = v as u32;
                }
            }
        }
        RrnStatus::RrnOk
    })
}

/// # Safety
/// `series` must come from [`rrn_simulate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rrn_series_free(series: *mut RrnSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

unsafe fn counts_from(x: *const u64, n: usize) -> Option<CountSeries> {
    if x.is_null() || n == 0 {
        return None;
    }
    Some(CountSeries::new(std::slice::from_raw_parts(x, n).to_vec()))
}

/// Estimates environment states by K-means on the raw values. `states_out`
/// receives `n` labels in `1..=r`.
///
/// # Safety
/// `x` must hold `n` readable elements and `states_out` `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn rrn_states_kmeans(
    x: *const u64,
    n: usize,
    r: usize,
    seed: u64,
    states_out: *mut u32,
) -> RrnStatus {
    guard(|| {
        let (Some(series), false) = (counts_from(x, n), states_out.is_null()) else {
            return invalid("null or empty input");
        };
        match baseline_states(&series, r, seed) {
            Ok(states) => {
                for (i, &s) in states.z.iter().enumerate() {
                    *states_out.add(i) = s as u32;
                }
                RrnStatus::RrnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Estimates environment states with the transformation-then-cluster
/// method. `renes_json` carries the method parameters (keys `d_p`, `c_m`,
/// `c_a`, `c_p`, `C_m`, `C_a`, `C_p`).
///
/// # Safety
/// `x` must hold `n` readable elements, `states_out` `n` writable ones, and
/// `renes_json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rrn_states_renes(
    x: *const u64,
    n: usize,
    renes_json: *const c_char,
    r: usize,
    p_max: usize,
    seed: u64,
    states_out: *mut u32,
) -> RrnStatus {
    guard(|| {
        let (Some(series), Some(cfg_text), false) =
            (counts_from(x, n), cstr(renes_json), states_out.is_null())
        else {
            return invalid("null or empty input");
        };
        let cfg: RenesConfig = match serde_json::from_str(cfg_text) {
            Ok(c) => c,
            Err(e) => return fail(Error::Json(e)),
        };
        match renes_states(&series, &cfg, r, p_max, seed) {
            Ok(states) => {
                for (i, &s) in states.z.iter().enumerate() {
                    *states_out.add(i) = s as u32;
                }
                RrnStatus::RrnOk
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn states_from(states: *const u32, n: usize) -> Option<EnvSequence> {
    if states.is_null() || n == 0 {
        return None;
    }
    Some(EnvSequence::new(
        std::slice::from_raw_parts(states, n).iter().map(|&s| s as usize).collect(),
    ))
}

/// Fits `(M, A, phi)` by conditional maximum likelihood given states.
/// `p` holds the `r` per-state maximal orders; `variant`: 0 = max, 1 = one.
/// On success `fit_json_out` receives the fit document (model schema plus
/// `loglik`, `rms`, `converged`); free it with [`rrn_string_free`].
///
/// # Safety
/// `x` and `states` must hold `n` readable elements, `p` must hold `r`
/// readable elements, and `fit_json_out` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn rrn_cml_fit(
    x: *const u64,
    states: *const u32,
    n: usize,
    variant: i32,
    p: *const u32,
    r: usize,
    order_rule: i32,
    seed: u64,
    fit_json_out: *mut *mut c_char,
) -> RrnStatus {
    guard(|| {
        let (Some(series), Some(z)) = (counts_from(x, n), states_from(states, n)) else {
            return invalid("null or empty input");
        };
        if p.is_null() || r == 0 || fit_json_out.is_null() {
            return invalid("null orders or output");
        }
        let (Some(variant), Some(rule)) = (variant_from(variant), order_rule_from(order_rule))
        else {
            return invalid("variant must be 0 (max) or 1 (one); order_rule 0 or 1");
        };
        let orders: Vec<usize> = std::slice::from_raw_parts(p, r).iter().map(|&v| v as usize).collect();
        match cml_fit(&series, &z, variant, &orders, rule, seed) {
            Ok(fit) => {
                let json = serde_json::to_string(&fit).expect("serializable fit");
                *fit_json_out = CString::new(json).unwrap().into_raw();
                RrnStatus::RrnOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Scores one-step predictions of a fitted model over a series.
/// `kind`: 0 = in-sample conditional mean, 1 = one-step-ahead forecast
/// (previous state propagated). `fit_json` accepts either a fit document or
/// a plain model document.
///
/// # Safety
/// `x` and `states` must hold `n` readable elements; `fit_json` must be a
/// valid NUL-terminated string; `rms_out` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn rrn_eval_rms(
    x: *const u64,
    states: *const u32,
    n: usize,
    fit_json: *const c_char,
    order_rule: i32,
    kind: i32,
    rms_out: *mut f64,
) -> RrnStatus {
    guard(|| {
        let (Some(series), Some(z), Some(text)) =
            (counts_from(x, n), states_from(states, n), cstr(fit_json))
        else {
            return invalid("null or empty input");
        };
        if rms_out.is_null() {
            return invalid("null output");
        }
        let Some(rule) = order_rule_from(order_rule) else {
            return invalid("order_rule must be 0 or 1");
        };
        let params = match serde_json::from_str::<FitResult>(text) {
            Ok(fit) => fit.params,
            Err(_) => match serde_json::from_str::<rrnginar::ModelParams>(text) {
                Ok(p) => p,
                Err(e) => return fail(Error::Json(e)),
            },
        };
        let pred = match kind {
            0 => predict(&series, &z, &params, rule),
            1 => forecast(&series, &z, &params, rule),
            _ => return invalid("kind must be 0 (predict) or 1 (forecast)"),
        };
        match pred.and_then(|p| rms(&series, &p)) {
            Ok(score) => {
                *rms_out = score;
                RrnStatus::RrnOk
            }
            Err(e) => fail(e),
        }
    })
}
