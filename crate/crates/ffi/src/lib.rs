//! C ABI over the `dopf` solver.
//!
//! Cases and reports are opaque heap handles owned by the caller and released
//! with their `_free` function. Every fallible call returns a [`DopfStatus`];
//! on anything other than `DOPF_STATUS_OK` the calling thread's
//! [`dopf_last_error_message`] describes what went wrong. Panics never cross
//! the boundary, they come back as `DOPF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dopf::admm::TraceRow;
use dopf::case_io::{parse_matpower, parse_structured};
use dopf::{
    build_layout, build_network, read_case, AlgorithmConfig, CaseData, CaseError, ConsensusLayout, Engine, EngineError,
    Network, Scheme, SolveReport,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    /// The case parsed but cannot be turned into a network.
    Validation = 5,
    InvalidConfig = 6,
    /// A subproblem failed, for example an infeasible branch.
    Solver = 7,
    /// The run hit its iteration cap. The report is still produced.
    NotConverged = 8,
    Panic = 9,
    /// An index past the end of a report's trace.
    OutOfRange = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopfScheme {
    Vanilla = 0,
    OverRelaxed = 1,
    Fast = 2,
    Adaptive = 3,
    OverRelaxedAdaptive = 4,
    FastAdaptive = 5,
}

impl From<DopfScheme> for Scheme {
    fn from(s: DopfScheme) -> Self {
        match s {
            DopfScheme::Vanilla => Scheme::Vanilla,
            DopfScheme::OverRelaxed => Scheme::OverRelaxed,
            DopfScheme::Fast => Scheme::Fast,
            DopfScheme::Adaptive => Scheme::Adaptive,
            DopfScheme::OverRelaxedAdaptive => Scheme::OverRelaxedAdaptive,
            DopfScheme::FastAdaptive => Scheme::FastAdaptive,
        }
    }
}

impl From<Scheme> for DopfScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Vanilla => DopfScheme::Vanilla,
            Scheme::OverRelaxed => DopfScheme::OverRelaxed,
            Scheme::Fast => DopfScheme::Fast,
            Scheme::Adaptive => DopfScheme::Adaptive,
            Scheme::OverRelaxedAdaptive => DopfScheme::OverRelaxedAdaptive,
            Scheme::FastAdaptive => DopfScheme::FastAdaptive,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopfCaseFormat {
    /// MATPOWER `.m` subset.
    Matpower = 0,
    /// Line-oriented `bus ...`, `gen ...` records.
    Structured = 1,
}

/// Algorithm settings. Start from [`dopf_config_default`] and override
/// fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopfConfig {
    pub scheme: DopfScheme,
    pub alpha: f64,
    pub eta: f64,
    pub rho_power: f64,
    pub rho_voltage: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    pub mu_incr: f64,
    pub mu_decr: f64,
    pub k_f: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub freeze_rho_between_restarts: bool,
    /// 0 lets the solver pick.
    pub threads: usize,
}

impl From<&AlgorithmConfig> for DopfConfig {
    fn from(c: &AlgorithmConfig) -> Self {
        DopfConfig {
            scheme: c.scheme.into(),
            alpha: c.alpha,
            eta: c.eta,
            rho_power: c.rho_power,
            rho_voltage: c.rho_voltage,
            tau_incr: c.tau_incr,
            tau_decr: c.tau_decr,
            mu_incr: c.mu_incr,
            mu_decr: c.mu_decr,
            k_f: c.k_f,
            eps_abs: c.eps_abs,
            eps_rel: c.eps_rel,
            max_iter: c.max_iter,
            rho_min: c.rho_min,
            rho_max: c.rho_max,
            freeze_rho_between_restarts: c.freeze_rho_between_restarts,
            threads: c.threads,
        }
    }
}

impl From<&DopfConfig> for AlgorithmConfig {
    fn from(c: &DopfConfig) -> Self {
        AlgorithmConfig {
            scheme: c.scheme.into(),
            alpha: c.alpha,
            eta: c.eta,
            rho_power: c.rho_power,
            rho_voltage: c.rho_voltage,
            tau_incr: c.tau_incr,
            tau_decr: c.tau_decr,
            mu_incr: c.mu_incr,
            mu_decr: c.mu_decr,
            k_f: c.k_f,
            eps_abs: c.eps_abs,
            eps_rel: c.eps_rel,
            max_iter: c.max_iter,
            rho_min: c.rho_min,
            rho_max: c.rho_max,
            freeze_rho_between_restarts: c.freeze_rho_between_restarts,
            threads: c.threads,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DopfCaseCounts {
    pub buses: usize,
    pub generators: usize,
    pub branches: usize,
    /// Length of the component-side vectors (x, lambda, rho).
    pub consensus_constraints: usize,
    /// Length of the bus-side vector z.
    pub bus_variables: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DopfSummary {
    pub converged: bool,
    pub iterations: usize,
    /// $/h at the final dispatch.
    pub objective: f64,
    pub max_abs_r: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DopfTraceRow {
    pub iter: usize,
    pub r_norm: f64,
    pub s_norm: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub objective: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub restart: bool,
}

impl From<&TraceRow> for DopfTraceRow {
    fn from(t: &TraceRow) -> Self {
        DopfTraceRow {
            iter: t.iter,
            r_norm: t.r_norm,
            s_norm: t.s_norm,
            eps_pri: t.eps_pri,
            eps_dual: t.eps_dual,
            objective: t.objective,
            rho_min: t.rho_min,
            rho_max: t.rho_max,
            restart: t.restart,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopfVector {
    X = 0,
    Z = 1,
    Lambda = 2,
    Rho = 3,
}

/// A parsed and validated case. Opaque.
pub struct DopfCase {
    net: Network,
    layout: ConsensusLayout,
}

/// The outcome of one run. Opaque.
pub struct DopfReport {
    report: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the message on the C side anyway.
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(DopfStatus, String);

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Self {
        let status = match e {
            CaseError::Io { .. } => DopfStatus::Io,
            _ => DopfStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::InvalidConfig(_) => DopfStatus::InvalidConfig,
            _ => DopfStatus::Solver,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DopfStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records its error message and converts panics.
fn guard(f: impl FnOnce() -> Result<DopfStatus, Failure>) -> DopfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            DopfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(DopfStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

fn into_case(data: CaseData) -> Result<*mut DopfCase, Failure> {
    let net = build_network(&data).map_err(|e| Failure(DopfStatus::Validation, e.to_string()))?;
    let layout = build_layout(&net);
    Ok(Box::into_raw(Box::new(DopfCase { net, layout })))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dopf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL if the last call
/// succeeded. Valid until the next `dopf_` call on the same thread.
#[no_mangle]
pub extern "C" fn dopf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Reads a case file. Files ending in `.m` are parsed as MATPOWER, anything
/// else as the structured format.
///
/// # Safety
/// `path` must be NULL or a NUL-terminated string; `out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_case_load(path: *const c_char, out: *mut *mut DopfCase) -> DopfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        *out = into_case(read_case(path)?)?;
        Ok(DopfStatus::Ok)
    })
}

/// Parses a case from memory.
///
/// # Safety
/// `text` must be NULL or a NUL-terminated string; `out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_case_parse(
    text: *const c_char,
    format: DopfCaseFormat,
    out: *mut *mut DopfCase,
) -> DopfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let data = match format {
            DopfCaseFormat::Matpower => parse_matpower(text)?,
            DopfCaseFormat::Structured => parse_structured(text)?,
        };
        *out = into_case(data)?;
        Ok(DopfStatus::Ok)
    })
}

/// # Safety
/// `case` must be NULL or a handle from `dopf_case_load`/`dopf_case_parse`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn dopf_case_free(case: *mut DopfCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// # Safety
/// `case` must be NULL or a live case handle; `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_case_counts(case: *const DopfCase, out: *mut DopfCaseCounts) -> DopfStatus {
    guard(|| {
        let case = case.as_ref().ok_or_else(|| null("case"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DopfCaseCounts {
            buses: case.net.buses.len(),
            generators: case.net.gens.len(),
            branches: case.net.branches.len(),
            consensus_constraints: case.layout.n_lambda,
            bus_variables: case.layout.n_z,
        };
        Ok(DopfStatus::Ok)
    })
}

/// Default settings for `scheme`.
#[no_mangle]
pub extern "C" fn dopf_config_default(scheme: DopfScheme) -> DopfConfig {
    DopfConfig::from(&AlgorithmConfig::with_scheme(scheme.into()))
}

/// Runs ADMM on `case`. On `DOPF_STATUS_OK` and `DOPF_STATUS_NOT_CONVERGED`
/// `*out` receives a report the caller frees with `dopf_report_free`; on any
/// other status it is set to NULL.
///
/// # Safety
/// `case` must be NULL or a live case handle, `config` NULL or readable, and
/// `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_solve(
    case: *const DopfCase,
    config: *const DopfConfig,
    out: *mut *mut DopfReport,
) -> DopfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let case = case.as_ref().ok_or_else(|| null("case"))?;
        let config = AlgorithmConfig::from(config.as_ref().ok_or_else(|| null("config"))?);
        let engine = Engine::new(&case.net, &case.layout, config)?;
        let report = engine.run()?;
        let status = if report.converged {
            DopfStatus::Ok
        } else {
            set_last_error(format!("not converged after {} iterations", report.iterations));
            DopfStatus::NotConverged
        };
        *out = Box::into_raw(Box::new(DopfReport { report }));
        Ok(status)
    })
}

/// # Safety
/// `report` must be NULL or a handle from `dopf_solve` that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn dopf_report_free(report: *mut DopfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be NULL or a live report handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_report_summary(report: *const DopfReport, out: *mut DopfSummary) -> DopfStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.report;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DopfSummary {
            converged: r.converged,
            iterations: r.iterations,
            objective: r.objective,
            max_abs_r: r.max_abs_r,
        };
        Ok(DopfStatus::Ok)
    })
}

/// Number of trace rows, one per iteration. Zero for a NULL report.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn dopf_report_trace_len(report: *const DopfReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.trace.len())
}

/// Copies trace row `index` into `*out`.
///
/// # Safety
/// `report` must be NULL or a live report handle; `out` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_report_trace_row(
    report: *const DopfReport,
    index: usize,
    out: *mut DopfTraceRow,
) -> DopfStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.report;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let row = r.trace.get(index).ok_or_else(|| {
            Failure(DopfStatus::OutOfRange, format!("trace row {index} out of range ({} rows)", r.trace.len()))
        })?;
        *out = row.into();
        Ok(DopfStatus::Ok)
    })
}

/// Copies one final iterate vector into `buf`. `*len` always receives the
/// full length; nothing is copied when `capacity` is smaller, which makes a
/// call with `buf = NULL, capacity = 0` a size query.
///
/// # Safety
/// `report` must be NULL or a live report handle, `buf` NULL or valid for
/// `capacity` writes, and `len` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn dopf_report_vector(
    report: *const DopfReport,
    which: DopfVector,
    buf: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> DopfStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.report;
        let len = len.as_mut().ok_or_else(|| null("len"))?;
        let v = match which {
            DopfVector::X => &r.x,
            DopfVector::Z => &r.z,
            DopfVector::Lambda => &r.lambda,
            DopfVector::Rho => &r.rho,
        };
        *len = v.len();
        if capacity >= v.len() && !v.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        }
        Ok(DopfStatus::Ok)
    })
}
