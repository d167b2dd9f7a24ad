//! C ABI over `riskdp`.
//!
//! Distributions and MDPs cross the boundary as opaque handles owned by the
//! caller and released with the matching `*_free` function. Every entry
//! point returns a [`RiskdpStatus`]; on failure a message is kept per thread
//! and read back with [`riskdp_last_error_message`]. Risk values are plain
//! doubles, with `±INFINITY` standing for the extended values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

use riskdp::decomp::{decompose, DecompError, OuterSearch, Scheme};
use riskdp::document::{parse_mdp, DocumentError};
use riskdp::mdp::{DeterministicPolicy, Policy};
use riskdp::risk::{cvar, evar, lower_quantile, var};
use riskdp::{oracle, FiniteDistribution, Mdp, MdpError, Measure, RiskError, RiskLevel};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    ExplosionGuard = 5,
    NumericFailure = 6,
    Panic = 7,
}

/// Values accepted by the `measure` arguments.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskdpMeasure {
    Var = 0,
    Cvar = 1,
    Evar = 2,
    Quantile = 3,
}

/// Finite discrete distribution.
pub struct RiskdpDistribution(FiniteDistribution);

/// Validated MDP.
pub struct RiskdpMdp(Mdp);

struct Failure {
    status: RiskdpStatus,
    message: String,
}

impl Failure {
    fn new(status: RiskdpStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Self::new(RiskdpStatus::NullPointer, format!("{name} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(RiskdpStatus::InvalidArgument, message)
    }
}

impl From<RiskError> for Failure {
    fn from(e: RiskError) -> Self {
        let status = match e {
            RiskError::BracketFailure { .. } | RiskError::IndeterminateSum => RiskdpStatus::NumericFailure,
            _ => RiskdpStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<MdpError> for Failure {
    fn from(e: MdpError) -> Self {
        let status = match &e {
            MdpError::Risk(r) => return r.clone().into(),
            MdpError::Invalid(_) => RiskdpStatus::ValidationError,
            MdpError::ExplosionGuard { .. } => RiskdpStatus::ExplosionGuard,
            _ => RiskdpStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<DecompError> for Failure {
    fn from(e: DecompError) -> Self {
        let status = match e {
            DecompError::Mdp(m) => return m.into(),
            DecompError::Risk(r) => return r.into(),
            DecompError::LatticeTooLarge { .. } => RiskdpStatus::ExplosionGuard,
            DecompError::EmptyFeasibleSet | DecompError::GridTooCoarse { .. } => RiskdpStatus::NumericFailure,
            _ => RiskdpStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<DocumentError> for Failure {
    fn from(e: DocumentError) -> Self {
        let status = match e {
            DocumentError::Syntax { .. } => RiskdpStatus::ParseError,
            _ => RiskdpStatus::ValidationError,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard<F>(f: F) -> RiskdpStatus
where
    F: FnOnce() -> Result<(), Failure> + UnwindSafe,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(f) {
        Ok(Ok(())) => RiskdpStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            RiskdpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| Failure::null(name))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure::null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure::invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        unsafe { text(p, name) }.map(Some)
    }
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::invalid("result contains a nul byte"))
}

fn measure(code: i32) -> Result<Measure, Failure> {
    match code {
        0 => Ok(Measure::Var),
        1 => Ok(Measure::Cvar),
        2 => Ok(Measure::Evar),
        3 => Ok(Measure::Quantile),
        _ => Err(Failure::invalid(format!("unknown measure code {code}"))),
    }
}

fn level(alpha: f64) -> Result<RiskLevel, Failure> {
    Ok(RiskLevel::new(alpha)?)
}

fn parse_policy(m: &Mdp, text: Option<&str>) -> Result<DeterministicPolicy, Failure> {
    match text {
        Some(t) => Ok(DeterministicPolicy::parse(m, t)?),
        None => Ok(DeterministicPolicy::new(
            (0..m.num_states()).map(|s| m.available(s)[0]).collect(),
        )),
    }
}

/// Builds a distribution from `len` outcomes and probabilities. The
/// probabilities must sum to one.
///
/// # Safety
/// `outcomes` and `probabilities` point to `len` readable doubles and `out`
/// to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn riskdp_distribution_new(
    outcomes: *const f64,
    probabilities: *const f64,
    len: usize,
    out: *mut *mut RiskdpDistribution,
) -> RiskdpStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        if outcomes.is_null() || probabilities.is_null() {
            return Err(Failure::null("outcomes or probabilities"));
        }
        let xs = unsafe { std::slice::from_raw_parts(outcomes, len) }.to_vec();
        let ps = unsafe { std::slice::from_raw_parts(probabilities, len) }.to_vec();
        let d = FiniteDistribution::new(xs, ps)?;
        *out = Box::into_raw(Box::new(RiskdpDistribution(d)));
        Ok(())
    })
}

/// Releases a distribution. Null is ignored.
///
/// # Safety
/// `d` is null or a handle from [`riskdp_distribution_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn riskdp_distribution_free(d: *mut RiskdpDistribution) {
    if !d.is_null() {
        drop(unsafe { Box::from_raw(d) });
    }
}

unsafe fn apply(
    d: *const RiskdpDistribution,
    alpha: f64,
    out: *mut f64,
    f: impl FnOnce(&FiniteDistribution, RiskLevel) -> Result<f64, Failure> + UnwindSafe,
) -> RiskdpStatus {
    guard(move || {
        let d = unsafe { borrow(d, "distribution") }?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = f(&d.0, level(alpha)?)?;
        Ok(())
    })
}

/// Upper quantile `sup { z : P(X < z) <= alpha }`.
///
/// # Safety
/// `d` is a live distribution handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskdp_var(d: *const RiskdpDistribution, alpha: f64, out: *mut f64) -> RiskdpStatus {
    unsafe { apply(d, alpha, out, |d, a| Ok(var(d, a).as_f64())) }
}

/// Lower quantile `inf { z : P(X <= z) >= alpha }`.
///
/// # Safety
/// `d` is a live distribution handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskdp_lower_quantile(
    d: *const RiskdpDistribution,
    alpha: f64,
    out: *mut f64,
) -> RiskdpStatus {
    unsafe { apply(d, alpha, out, |d, a| Ok(lower_quantile(d, a).as_f64())) }
}

/// Mean of the worst `alpha` fraction of outcomes.
///
/// # Safety
/// `d` is a live distribution handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskdp_cvar(
    d: *const RiskdpDistribution,
    alpha: f64,
    out: *mut f64,
) -> RiskdpStatus {
    unsafe { apply(d, alpha, out, |d, a| Ok(cvar(d, a).as_f64())) }
}

/// Entropic value at risk.
///
/// # Safety
/// `d` is a live distribution handle and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskdp_evar(
    d: *const RiskdpDistribution,
    alpha: f64,
    out: *mut f64,
) -> RiskdpStatus {
    unsafe { apply(d, alpha, out, |d, a| Ok(evar(d, a)?.as_f64())) }
}

/// Parses and validates an MDP document.
///
/// # Safety
/// `json` is a nul-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn riskdp_mdp_from_json(json: *const c_char, out: *mut *mut RiskdpMdp) -> RiskdpStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let m = parse_mdp(unsafe { text(json, "json") }?)?;
        *out = Box::into_raw(Box::new(RiskdpMdp(m)));
        Ok(())
    })
}

/// Releases an MDP. Null is ignored.
///
/// # Safety
/// `m` is null or a handle from [`riskdp_mdp_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn riskdp_mdp_free(m: *mut RiskdpMdp) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `m` is null or a live MDP handle.
#[no_mangle]
pub unsafe extern "C" fn riskdp_mdp_num_states(m: *const RiskdpMdp) -> usize {
    unsafe { m.as_ref() }.map_or(0, |m| m.0.num_states())
}

/// Risk of the return under a Markov policy written `"s1=a1,s2=a2"`. A
/// null `policy` plays the first available action everywhere.
///
/// # Safety
/// `m` is a live MDP handle, `policy` null or a nul-terminated string and
/// `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn riskdp_evaluate(
    m: *const RiskdpMdp,
    policy: *const c_char,
    measure_code: i32,
    alpha: f64,
    out: *mut f64,
) -> RiskdpStatus {
    guard(|| {
        let m = &unsafe { borrow(m, "mdp") }?.0;
        let out = unsafe { out_ref(out, "out") }?;
        let pi = parse_policy(m, unsafe { optional_text(policy, "policy") }?)?;
        *out = oracle::evaluate(m, &pi, measure(measure_code)?, level(alpha)?)?.as_f64();
        Ok(())
    })
}

/// Best deterministic policy by enumeration. On success `value` holds its
/// risk and, when `policy_out` is not null, `*policy_out` a description to
/// release with [`riskdp_string_free`].
///
/// # Safety
/// `m` is a live MDP handle, `value` a writable double and `policy_out`
/// null or a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn riskdp_optimize(
    m: *const RiskdpMdp,
    measure_code: i32,
    alpha: f64,
    value: *mut f64,
    policy_out: *mut *mut c_char,
) -> RiskdpStatus {
    guard(|| {
        let m = &unsafe { borrow(m, "mdp") }?.0;
        let value = unsafe { out_ref(value, "value") }?;
        let best = oracle::optimize(m, measure(measure_code)?, level(alpha)?)?;
        if let Some(slot) = unsafe { policy_out.as_mut() } {
            *slot = owned_string(best.best_policy.describe(m))?;
        }
        *value = best.value.as_f64();
        Ok(())
    })
}

/// Runs a decomposition scheme (`"cvar-eval"`, `"cvar-opt"`, `"evar-ni"`,
/// `"evar-corrected"`, `"var"`, `"var-opt"`, `"quantile-opt"`) and writes
/// the report as JSON to `*json_out`, to release with
/// [`riskdp_string_free`]. A positive `h` selects a lattice of that step;
/// otherwise CVaR schemes search breakpoints exactly and EVaR schemes use
/// their default step. `policy` is required by the evaluation schemes.
///
/// # Safety
/// `m` is a live MDP handle, `scheme` a nul-terminated string, `policy`
/// null or a nul-terminated string and `json_out` a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn riskdp_decompose_json(
    m: *const RiskdpMdp,
    scheme: *const c_char,
    alpha: f64,
    policy: *const c_char,
    h: f64,
    json_out: *mut *mut c_char,
) -> RiskdpStatus {
    guard(|| {
        let m = &unsafe { borrow(m, "mdp") }?.0;
        let slot = unsafe { out_ref(json_out, "json_out") }?;
        let scheme: Scheme = unsafe { text(scheme, "scheme") }?
            .parse()
            .map_err(Failure::invalid)?;
        let pi = unsafe { optional_text(policy, "policy") }?
            .map(|t| parse_policy(m, Some(t)))
            .transpose()?;
        let search = if h > 0.0 {
            OuterSearch::lattice(h)
        } else if matches!(scheme, Scheme::EvarNi | Scheme::EvarCorrected) {
            OuterSearch::refined(scheme.default_step())
        } else {
            OuterSearch::Breakpoints
        };
        let report = decompose(
            m,
            scheme,
            level(alpha)?,
            pi.as_ref().map(|p| p as &dyn Policy),
            search,
        )?;
        let json = serde_json::to_string(&report).map_err(|e| Failure::invalid(e.to_string()))?;
        *slot = owned_string(json)?;
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn riskdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn riskdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
