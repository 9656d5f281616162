//! C ABI over the offeropt engine.
//!
//! Every function returns an [`OoStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be fetched
//! with [`oo_last_error_message`]. Problems and solutions are opaque handles
//! owned by the caller and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use offeropt::elasticity::{self, ElasticityError};
use offeropt::ingest::ConsumerItemKey;
use offeropt::optimizer::{solve_category, CategorySolution, OfferItem, OptimizationProblem, OptimizeError};
use offeropt::pipeline::{self, PipelineError, Stage};
use offeropt::tcn::causal_dilated_conv;
use offeropt::threshold::maximize_threshold;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A required upstream stage is missing or stale.
    Dependency = 3,
    Schema = 4,
    Training = 5,
    /// The retention floor is not met; the solution is still returned.
    Infeasible = 6,
    Fit = 7,
    Io = 8,
    Internal = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let mut m = message.into();
    m.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(m).expect("nul bytes removed")));
}

fn fail(status: OoStatus, message: impl Into<String>) -> OoStatus {
    set_error(message);
    status
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, turning a panic into [`OoStatus::Internal`].
fn guard(f: impl FnOnce() -> OoStatus) -> OoStatus {
    clear_error();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(OoStatus::Internal, "panic inside offeropt"),
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn string(ptr: *const c_char) -> Result<String, OoStatus> {
    if ptr.is_null() {
        return Err(fail(OoStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_string)
        .map_err(|_| fail(OoStatus::InvalidArgument, "string argument is not UTF-8"))
}

/// Message of the last failure on this thread, or null. The caller owns the
/// string and frees it with [`oo_string_free`].
#[no_mangle]
pub extern "C" fn oo_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|m| m.clone().into_raw()).unwrap_or(std::ptr::null_mut()))
}

/// # Safety
/// `s` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn oo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn oo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// F1-maximizing cut-off of one consumer's predictions.
///
/// # Safety
/// `actuals` and `probabilities` must point to `n` readable values; the out
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn oo_maximize_threshold(
    actuals: *const u8,
    probabilities: *const f64,
    n: usize,
    cutoff_out: *mut f64,
    f1_out: *mut f64,
) -> OoStatus {
    guard(|| {
        let (Some(a), Some(p)) = (slice(actuals, n), slice(probabilities, n)) else {
            return fail(OoStatus::NullPointer, "input array is null");
        };
        if cutoff_out.is_null() || f1_out.is_null() {
            return fail(OoStatus::NullPointer, "output pointer is null");
        }
        if let Some(x) = a.iter().find(|&&x| x > 1) {
            return fail(OoStatus::InvalidArgument, format!("label {x} is not 0 or 1"));
        }
        match maximize_threshold(a, p) {
            Ok(r) => {
                *cutoff_out = r.cutoff;
                *f1_out = r.f1;
                OoStatus::Ok
            }
            Err(e) => fail(OoStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Least-squares sigmoid through `(offers[i], probabilities[i])`.
///
/// # Safety
/// Both arrays must hold `n` values; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn oo_fit_sigmoid(
    offers: *const f64,
    probabilities: *const f64,
    n: usize,
    a_out: *mut f64,
    b_out: *mut f64,
    r_squared_out: *mut f64,
) -> OoStatus {
    guard(|| {
        let (Some(x), Some(y)) = (slice(offers, n), slice(probabilities, n)) else {
            return fail(OoStatus::NullPointer, "input array is null");
        };
        if a_out.is_null() || b_out.is_null() || r_squared_out.is_null() {
            return fail(OoStatus::NullPointer, "output pointer is null");
        }
        let points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        match elasticity::fit_sigmoid(&points) {
            Ok(fit) => {
                *a_out = fit.a;
                *b_out = fit.b;
                *r_squared_out = fit.r_squared;
                OoStatus::Ok
            }
            Err(e @ (ElasticityError::TooFewPoints(_) | ElasticityError::NonFinite)) => {
                fail(OoStatus::InvalidArgument, e.to_string())
            }
            Err(e) => fail(OoStatus::Fit, e.to_string()),
        }
    })
}

/// Offer elasticity `a * k * (1 - f_k)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oo_elasticity(a: f64, k: f64, f_k: f64, out: *mut f64) -> OoStatus {
    guard(|| {
        if out.is_null() {
            return fail(OoStatus::NullPointer, "output pointer is null");
        }
        if !(a.is_finite() && k > 0.0 && k.is_finite() && (0.0..=1.0).contains(&f_k)) {
            return fail(OoStatus::InvalidArgument, "need finite a, k > 0 and f_k in [0, 1]");
        }
        *out = elasticity::elasticity(a, k, f_k);
        OoStatus::Ok
    })
}

/// Causal dilated convolution; `out` receives `x_len` values.
///
/// # Safety
/// `x` holds `x_len` values, `filter` holds `filter_len`, `out` has room for
/// `x_len`.
#[no_mangle]
pub unsafe extern "C" fn oo_causal_dilated_conv(
    x: *const f64,
    x_len: usize,
    filter: *const f64,
    filter_len: usize,
    dilation: usize,
    out: *mut f64,
) -> OoStatus {
    guard(|| {
        let (Some(x), Some(f)) = (slice(x, x_len), slice(filter, filter_len)) else {
            return fail(OoStatus::NullPointer, "input array is null");
        };
        if out.is_null() && x_len > 0 {
            return fail(OoStatus::NullPointer, "output pointer is null");
        }
        if dilation == 0 || filter_len == 0 {
            return fail(OoStatus::InvalidArgument, "dilation and filter length must be positive");
        }
        let y = causal_dilated_conv(x, f, dilation);
        std::ptr::copy_nonoverlapping(y.as_ptr(), out, y.len());
        OoStatus::Ok
    })
}

/// Opaque offer-assignment problem for one category.
pub struct OoProblem(OptimizationProblem);

/// Opaque solved category.
pub struct OoSolution(CategorySolution);

/// New empty problem. `offer_low < offer_high` bound the new offers.
///
/// # Safety
/// `category` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oo_problem_new(
    category: *const c_char,
    retention_floor: f64,
    offer_low: f64,
    offer_high: f64,
    out: *mut *mut OoProblem,
) -> OoStatus {
    guard(|| {
        if out.is_null() {
            return fail(OoStatus::NullPointer, "output pointer is null");
        }
        let category = match string(category) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let problem = OptimizationProblem {
            category,
            items: Vec::new(),
            retention_floor,
            offer_range: (offer_low, offer_high),
        };
        if let Err(e) = problem.validate() {
            return fail(OoStatus::InvalidArgument, e.to_string());
        }
        *out = Box::into_raw(Box::new(OoProblem(problem)));
        OoStatus::Ok
    })
}

/// Appends one consumer-item pair.
///
/// # Safety
/// `problem` must come from [`oo_problem_new`]; the ids must be
/// NUL-terminated strings.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn oo_problem_add_item(
    problem: *mut OoProblem,
    consumer_id: *const c_char,
    item_id: *const c_char,
    price: f64,
    k: f64,
    f_k: f64,
    epsilon: f64,
    cutoff: f64,
) -> OoStatus {
    guard(|| {
        let Some(p) = problem.as_mut() else {
            return fail(OoStatus::NullPointer, "problem is null");
        };
        let (consumer_id, item_id) = match (string(consumer_id), string(item_id)) {
            (Ok(c), Ok(i)) => (c, i),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let key = ConsumerItemKey { consumer_id, item_id, category: p.0.category.clone() };
        p.0.items.push(OfferItem { key, price, k, f_k, epsilon, cutoff });
        if let Err(e) = p.0.validate() {
            p.0.items.pop();
            return fail(OoStatus::InvalidArgument, e.to_string());
        }
        OoStatus::Ok
    })
}

/// # Safety
/// `problem` must be null or come from [`oo_problem_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn oo_problem_free(problem: *mut OoProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves the problem. On [`OoStatus::Infeasible`] `out` still receives the
/// best assignment found.
///
/// # Safety
/// `problem` must come from [`oo_problem_new`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oo_problem_solve(problem: *const OoProblem, out: *mut *mut OoSolution) -> OoStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return fail(OoStatus::NullPointer, "problem is null");
        };
        if out.is_null() {
            return fail(OoStatus::NullPointer, "output pointer is null");
        }
        match solve_category(&p.0) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(OoSolution(s)));
                OoStatus::Ok
            }
            Err(OptimizeError::Infeasible { solution, achieved, required, .. }) => {
                *out = Box::into_raw(Box::new(OoSolution(*solution)));
                fail(OoStatus::Infeasible, format!("retention {achieved:.4} below floor {required:.4}"))
            }
            Err(e) => fail(OoStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of decisions, one per added item in insertion order.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oo_solution_len(solution: *const OoSolution) -> usize {
    solution.as_ref().map(|s| s.0.decisions.len()).unwrap_or(0)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oo_solution_total_revenue(solution: *const OoSolution) -> f64 {
    solution.as_ref().map(|s| s.0.total_revenue).unwrap_or(f64::NAN)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oo_solution_retention(solution: *const OoSolution) -> f64 {
    solution.as_ref().map(|s| s.0.retention).unwrap_or(f64::NAN)
}

/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oo_solution_weighted_offer(solution: *const OoSolution) -> f64 {
    solution.as_ref().map(|s| s.0.weighted_offer).unwrap_or(f64::NAN)
}

/// Decision `index`: multiplier change, new offer, adjusted probability and
/// revenue. Any out pointer may be null.
///
/// # Safety
/// `solution` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn oo_solution_decision(
    solution: *const OoSolution,
    index: usize,
    eta_out: *mut f64,
    new_offer_out: *mut f64,
    adjusted_prob_out: *mut f64,
    revenue_out: *mut f64,
) -> OoStatus {
    guard(|| {
        let Some(s) = solution.as_ref() else {
            return fail(OoStatus::NullPointer, "solution is null");
        };
        let Some(d) = s.0.decisions.get(index) else {
            return fail(OoStatus::InvalidArgument, format!("index {index} out of {}", s.0.decisions.len()));
        };
        for (ptr, v) in [(eta_out, d.eta), (new_offer_out, d.new_offer), (adjusted_prob_out, d.adjusted_prob), (revenue_out, d.revenue)] {
            if let Some(p) = ptr.as_mut() {
                *p = v;
            }
        }
        OoStatus::Ok
    })
}

/// # Safety
/// `solution` must be null or come from [`oo_problem_solve`], freed once.
#[no_mangle]
pub unsafe extern "C" fn oo_solution_free(solution: *mut OoSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

impl From<&PipelineError> for OoStatus {
    fn from(e: &PipelineError) -> Self {
        match e {
            PipelineError::Usage(_) | PipelineError::Config(_) => OoStatus::InvalidArgument,
            PipelineError::Dependency { .. } | PipelineError::Stale { .. } => OoStatus::Dependency,
            PipelineError::Schema(_) => OoStatus::Schema,
            PipelineError::Training(_) => OoStatus::Training,
            PipelineError::Infeasible { .. } => OoStatus::Infeasible,
            PipelineError::Io { .. } => OoStatus::Io,
            PipelineError::Internal(_) => OoStatus::Internal,
        }
    }
}

/// Runs one pipeline stage (`"ingest"` .. `"report"`), or all of them for
/// `"all"`, in an initialized workspace.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn oo_run_stage(workspace: *const c_char, stage: *const c_char) -> OoStatus {
    guard(|| {
        let (ws, name) = match (string(workspace), string(stage)) {
            (Ok(w), Ok(s)) => (w, s),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let result = if name == "all" {
            pipeline::run_all(Path::new(&ws))
        } else {
            match Stage::parse(&name) {
                Some(s) => pipeline::run_stage(Path::new(&ws), s),
                None => return fail(OoStatus::InvalidArgument, format!("unknown stage `{name}`")),
            }
        };
        match result {
            Ok(()) => OoStatus::Ok,
            Err(e) => fail(OoStatus::from(&e), e.to_string()),
        }
    })
}
