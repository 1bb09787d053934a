//! C ABI over `zerostealth`.
//!
//! Objects are opaque handles created by the `zs_scenario_*` constructors
//! or `zs_synthesize` and released with the matching `_free`. Every fallible
//! call returns a [`ZsStatus`]; on failure a message is available from
//! [`zs_last_error`] on the same thread. Strings returned through `char **`
//! must be released with [`zs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use zerostealth::attack::AttackPlan;
use zerostealth::numlin::{mat_exp, Matrix};
use zerostealth::scenario::{Prepared, Scenario};
use zerostealth::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Infeasible = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Verification summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZsVerification {
    pub stealthy: bool,
    pub disruptive: bool,
    pub max_sampled_residual: f64,
    /// Smallest `‖x̃(t_k)‖ − H_k` over clusters; NaN when there are none.
    pub min_margin: f64,
    pub samples: usize,
    pub clusters: usize,
}

/// Validated scenario with its lifted model.
pub struct ZsScenario {
    scenario: Scenario,
    prep: Prepared,
}

/// Synthesized attack plan.
pub struct ZsPlan {
    plan: AttackPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> ZsStatus {
    match err {
        Error::Infeasible(_)
        | Error::NoRedundancy
        | Error::InfeasibleEta
        | Error::RankDeficientBd { .. } => ZsStatus::Infeasible,
        Error::InconsistentSystem { .. } | Error::DegenerateDisruption(_) | Error::NonFinite(_) => {
            ZsStatus::Numerical
        }
        Error::ProbeOutOfSpan { .. } => ZsStatus::OutOfRange,
        Error::Io(_) => ZsStatus::Io,
        _ => ZsStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (ZsStatus, String)>) -> ZsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ZsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ZsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (ZsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ZsStatus, String) {
    (ZsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ZsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ZsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .unwrap_or_default()
        .into_raw()
}

unsafe fn store_scenario(
    sc: Scenario,
    out: *mut *mut ZsScenario,
) -> Result<(), (ZsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let prep = sc.prepare().map_err(lib_err)?;
    *out = Box::into_raw(Box::new(ZsScenario { scenario: sc, prep }));
    Ok(())
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn zs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn zs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_scenario_from_json(
    json: *const c_char,
    out: *mut *mut ZsScenario,
) -> ZsStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let sc = Scenario::from_json(text).map_err(lib_err)?;
        store_scenario(sc, out)
    })
}

/// Loads a built-in scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_scenario_demo(
    name: *const c_char,
    out: *mut *mut ZsScenario,
) -> ZsStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let sc = Scenario::demo(name).map_err(lib_err)?;
        store_scenario(sc, out)
    })
}

/// # Safety
/// `sc` must come from a scenario constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn zs_scenario_free(sc: *mut ZsScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Redundancy report as a JSON string. Succeeds for infeasible scenarios
/// too; inspect the report.
///
/// # Safety
/// `sc` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_analyze_json(
    sc: *const ZsScenario,
    out_json: *mut *mut c_char,
) -> ZsStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let report = sc.scenario.analyze(&sc.prep).map_err(lib_err)?;
        let json = serde_json::to_string(&report).map_err(|e| lib_err(e.into()))?;
        *out_json = into_c_string(json);
        Ok(())
    })
}

/// Synthesizes the attack plan. Returns `ZS_STATUS_INFEASIBLE` when the
/// redundancy conditions fail.
///
/// # Safety
/// `sc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_synthesize(sc: *const ZsScenario, out: *mut *mut ZsPlan) -> ZsStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (_, plan) = sc.scenario.synthesize(&sc.prep).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(ZsPlan { plan }));
        Ok(())
    })
}

/// # Safety
/// `plan` must come from [`zs_synthesize`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn zs_plan_free(plan: *mut ZsPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Number of holds and inputs per hold.
///
/// # Safety
/// `plan` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_plan_dims(
    plan: *const ZsPlan,
    holds: *mut usize,
    inputs: *mut usize,
) -> ZsStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        if holds.is_null() || inputs.is_null() {
            return Err(null("out"));
        }
        *holds = plan.plan.holds.len();
        *inputs = plan.plan.p;
        Ok(())
    })
}

/// Copies hold `i` (`p` values) into `out`, which has room for `len`.
///
/// # Safety
/// `plan` must be a live handle; `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_plan_hold(
    plan: *const ZsPlan,
    i: usize,
    out: *mut f64,
    len: usize,
) -> ZsStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let hold = plan.plan.holds.get(i).ok_or_else(|| {
            (
                ZsStatus::OutOfRange,
                format!("hold {i} out of range ({} holds)", plan.plan.holds.len()),
            )
        })?;
        if len < hold.len() {
            return Err((
                ZsStatus::OutOfRange,
                format!("buffer holds {len} values, need {}", hold.len()),
            ));
        }
        ptr::copy_nonoverlapping(hold.as_ptr(), out, hold.len());
        Ok(())
    })
}

/// Full plan as a JSON string.
///
/// # Safety
/// `plan` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_plan_to_json(
    plan: *const ZsPlan,
    out_json: *mut *mut c_char,
) -> ZsStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let json = serde_json::to_string(&plan.plan).map_err(|e| lib_err(e.into()))?;
        *out_json = into_c_string(json);
        Ok(())
    })
}

/// Simulates `plan` on the scenario's true clock and verifies it.
///
/// # Safety
/// `sc` and `plan` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn zs_verify(
    sc: *const ZsScenario,
    plan: *const ZsPlan,
    out: *mut ZsVerification,
) -> ZsStatus {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let trace = sc
            .scenario
            .simulate(&sc.prep, &plan.plan)
            .map_err(lib_err)?;
        let v = sc.scenario.verify(&trace, &plan.plan);
        let min_margin = v
            .clusters
            .iter()
            .map(|c| c.margin)
            .reduce(f64::min)
            .unwrap_or(f64::NAN);
        *out = ZsVerification {
            stealthy: v.stealthy,
            disruptive: v.disruptive,
            max_sampled_residual: v.max_sampled_residual,
            min_margin,
            samples: v.samples,
            clusters: v.clusters.len(),
        };
        Ok(())
    })
}

/// `out = exp(a t)` for a row-major `n x n` matrix.
///
/// # Safety
/// `a` and `out` must each point to `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn zs_mat_exp(a: *const f64, n: usize, t: f64, out: *mut f64) -> ZsStatus {
    guard(|| {
        if a.is_null() || out.is_null() {
            return Err(null("matrix"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| (ZsStatus::InvalidInput, "n too large".into()))?;
        let m = Matrix::from_row_slice(n, n, std::slice::from_raw_parts(a, len));
        let e = mat_exp(&m, t).map_err(lib_err)?;
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (i, row) in e.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dst[i * n + j] = *v;
            }
        }
        Ok(())
    })
}
