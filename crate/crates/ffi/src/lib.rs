//! C ABI over the robuststop solver.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns an
//! [`RsStatus`] and, on failure, stores a message retrievable with
//! [`rs_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use robuststop::cli::{cmd_oracle, cmd_verify, Config};
use robuststop::envelope::{robust_envelope, EnvelopeSolution};
use robuststop::model::ScenarioTree;
use robuststop::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    SizeLimit = 4,
    Internal = 5,
}

/// A parsed configuration together with its scenario tree.
pub struct RsSolver {
    config: Config,
    tree: ScenarioTree,
}

/// Robust envelope on a solver's tree.
pub struct RsSolution {
    sol: EnvelopeSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> RsStatus {
    match err {
        Error::SizeLimit { .. } => RsStatus::SizeLimit,
        Error::Config(_) | Error::Usage(_) | Error::InvalidInput(_) | Error::Json(_) => {
            RsStatus::InvalidConfig
        }
        Error::IncompleteStrategy(_) | Error::Io(_) => RsStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (RsStatus, String)>) -> RsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            RsStatus::Internal
        }
    }
}

fn lift<T>(r: robuststop::Result<T>) -> Result<T, (RsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (RsStatus, String) {
    (RsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (RsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (RsStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, (RsStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| (RsStatus::Internal, e.to_string()))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a JSON configuration and builds its scenario tree.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rs_solver_new(
    config_json: *const c_char,
    out: *mut *mut RsSolver,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(config_json, "config_json")?;
        let config = lift(Config::from_json(text))?;
        let tree = lift(config.tree())?;
        *out = Box::into_raw(Box::new(RsSolver { config, tree }));
        Ok(())
    })
}

/// Number of nodes in the solver's tree, or 0 for a null handle.
///
/// # Safety
/// `solver` must be null or a live handle from [`rs_solver_new`].
#[no_mangle]
pub unsafe extern "C" fn rs_solver_node_count(solver: *const RsSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.tree.n_nodes())
}

/// Solves for the robust envelope with the configured stop band.
///
/// # Safety
/// `solver` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_solver_solve(
    solver: *const RsSolver,
    out: *mut *mut RsSolution,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        let reward = lift(s.config.reward())?;
        let sol = lift(robust_envelope(&s.tree, &reward, s.config.solver.delta))?;
        *out = Box::into_raw(Box::new(RsSolution { sol }));
        Ok(())
    })
}

/// Envelope value at the root.
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_solution_root_value(
    solution: *const RsSolution,
    out: *mut f64,
) -> RsStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.sol.root_value();
        Ok(())
    })
}

/// Copies the per-node envelope values (breadth-first order) into `buf`.
///
/// At most `len` values are written; `written` receives the full node count
/// so a caller can size the buffer with a first call passing `len = 0`.
///
/// # Safety
/// `buf` must point to `len` writable doubles (may be null when `len` is 0)
/// and `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_solution_copy_values(
    solution: *const RsSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> RsStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        let z = &s.sol.z;
        let n = z.len().min(len);
        if n > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(z.as_ptr(), buf, n);
        }
        *written = z.len();
        Ok(())
    })
}

/// Game values by full enumeration, as a JSON report.
///
/// # Safety
/// `solver` must be a live handle and `out` a valid pointer. The returned
/// string must be released with [`rs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rs_solver_oracle_json(
    solver: *const RsSolver,
    out: *mut *mut c_char,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        let report = lift(cmd_oracle(&s.config))?;
        let json =
            serde_json::to_string(&report).map_err(|e| (RsStatus::Internal, e.to_string()))?;
        *out = to_c_string(json)?;
        Ok(())
    })
}

/// Runs the verification suite and returns its JSON report.
///
/// `suite` is a comma-separated list of check names, or null for the
/// configured suite. A failing check is reported in the JSON with status
/// `RS_STATUS_OK`; only setup errors produce a non-zero status.
///
/// # Safety
/// `solver` must be a live handle, `suite` null or a valid string, and `out`
/// a valid pointer. Release the string with [`rs_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rs_solver_verify_json(
    solver: *const RsSolver,
    suite: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> RsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        let names: Option<Vec<String>> = if suite.is_null() {
            None
        } else {
            Some(
                read_str(suite, "suite")?
                    .split(',')
                    .map(str::to_string)
                    .collect(),
            )
        };
        let report = lift(cmd_verify(&s.config, names.as_deref(), Some(seed), false))?;
        let json =
            serde_json::to_string(&report).map_err(|e| (RsStatus::Internal, e.to_string()))?;
        *out = to_c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `solver` must be null or a handle from [`rs_solver_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rs_solver_free(solver: *mut RsSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// # Safety
/// `solution` must be null or a handle from [`rs_solver_solve`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rs_solution_free(solution: *mut RsSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}
