//! C interface for the observer library.
//!
//! Systems and realizations are opaque handles created and destroyed here;
//! every function returns a status code and leaves a human-readable
//! explanation for the last failure in thread-local storage. The header is
//! generated at build time into include/descobs.h.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use descobs::error::Error;
use descobs::io;
use descobs::model::{DescriptorSystem, ScalarSignal, Signal, TolerancePolicy};
use descobs::numkit::Vector;
use descobs::reduction::{reduce, staircase};
use descobs::simulation::{matched_initial_w, simulate, SimulationConfig};
use descobs::synthesis::{synthesize, verify_observer, ObserverRealization};

/// Result of every call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescobsStatus {
    /// Call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Malformed file, string, or dimension disagreement.
    InvalidInput = 2,
    /// A solvability condition or certificate failed.
    ConditionFailed = 3,
    /// The run was infeasible or dynamically inconsistent.
    SimulationFailed = 4,
    /// Unexpected internal failure.
    Internal = 5,
}

/// Opaque system handle.
pub struct DescobsSystem {
    inner: DescriptorSystem,
}

/// Opaque realization handle (keeps the policy it was built under).
pub struct DescobsObserver {
    inner: ObserverRealization,
    policy: TolerancePolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg
        .chars()
        .map(|c| if c == '\0' { ' ' } else { c })
        .collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> DescobsStatus {
    match err {
        Error::NonFinite
        | Error::DimensionMismatch(_)
        | Error::DimensionError(_)
        | Error::ParseError(_)
        | Error::Io(_)
        | Error::TooLarge { .. } => DescobsStatus::InvalidInput,
        Error::H1Failed { .. }
        | Error::H2Failed { .. }
        | Error::NotDetectable { .. }
        | Error::PreconditionViolated(_)
        | Error::ResidualTooLarge { .. }
        | Error::Unstable { .. }
        | Error::PlacementFailed(_)
        | Error::NoConvergence(_) => DescobsStatus::ConditionFailed,
        Error::Infeasible { .. } | Error::InconsistentDynamics { .. } => {
            DescobsStatus::SimulationFailed
        }
    }
}

fn fail(err: &Error) -> DescobsStatus {
    set_last_error(&err.to_string());
    status_for(err)
}

/// # Safety
/// `path` must be a valid NUL-terminated string; returns None on null.
unsafe fn path_from(path: *const c_char) -> Option<&'static Path> {
    if path.is_null() {
        return None;
    }
    match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => Some(Path::new(s)),
        Err(_) => None,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn descobs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Explanation of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn descobs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a system description from a JSON file into a new handle.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn descobs_system_load(
    path: *const c_char,
    out: *mut *mut DescobsSystem,
) -> DescobsStatus {
    if out.is_null() {
        set_last_error("output pointer is null");
        return DescobsStatus::NullPointer;
    }
    let Some(path) = (unsafe { path_from(path) }) else {
        set_last_error("path is null or not UTF-8");
        return DescobsStatus::NullPointer;
    };
    match io::load_system(path) {
        Ok(sys) => {
            unsafe { *out = Box::into_raw(Box::new(DescobsSystem { inner: sys })) };
            DescobsStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a system handle. Null is ignored.
///
/// # Safety
/// `sys` must be a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn descobs_system_free(sys: *mut DescobsSystem) {
    if !sys.is_null() {
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// Reports the five dimensions of a loaded system. Null outputs are skipped.
///
/// # Safety
/// `sys` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn descobs_system_dims(
    sys: *const DescobsSystem,
    m: *mut usize,
    n: *mut usize,
    l: *mut usize,
    p: *mut usize,
    r: *mut usize,
) -> DescobsStatus {
    if sys.is_null() {
        set_last_error("system handle is null");
        return DescobsStatus::NullPointer;
    }
    let s = unsafe { &(*sys).inner };
    unsafe {
        if !m.is_null() {
            *m = s.m();
        }
        if !n.is_null() {
            *n = s.n();
        }
        if !l.is_null() {
            *l = s.l();
        }
        if !p.is_null() {
            *p = s.p();
        }
        if !r.is_null() {
            *r = s.r();
        }
    }
    DescobsStatus::Ok
}

/// Evaluates the solvability conditions under the default policy and
/// reports the verdicts and the implied observer order.
///
/// # Safety
/// `sys` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn descobs_check(
    sys: *const DescobsSystem,
    h1: *mut bool,
    h2: *mut bool,
    q: *mut usize,
) -> DescobsStatus {
    if sys.is_null() {
        set_last_error("system handle is null");
        return DescobsStatus::NullPointer;
    }
    let s = unsafe { &(*sys).inner };
    let policy = TolerancePolicy::default();
    let result = staircase(&s.e, &s.a, &s.b, &policy)
        .and_then(|dec| reduce(s, &dec))
        .and_then(|red| {
            let split = descobs::reduction::split_functional(&red, &policy)?;
            descobs::existence::check_reduced(&red, &split, &policy)
        });
    match result {
        Ok(report) => {
            unsafe {
                if !h1.is_null() {
                    *h1 = report.h1;
                }
                if !h2.is_null() {
                    *h2 = report.h2;
                }
                if !q.is_null() {
                    *q = report.q;
                }
            }
            DescobsStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Synthesizes an observer under the default policy (Riccati-based free
/// term) and returns a new realization handle.
///
/// # Safety
/// `sys` must be a live handle and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn descobs_synthesize(
    sys: *const DescobsSystem,
    out: *mut *mut DescobsObserver,
) -> DescobsStatus {
    if sys.is_null() || out.is_null() {
        set_last_error("system handle or output pointer is null");
        return DescobsStatus::NullPointer;
    }
    let s = unsafe { &(*sys).inner };
    let policy = TolerancePolicy::default();
    match synthesize(s, &policy, None) {
        Ok(obs) => {
            unsafe { *out = Box::into_raw(Box::new(DescobsObserver { inner: obs, policy })) };
            DescobsStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a realization handle. Null is ignored.
///
/// # Safety
/// `obs` must be a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn descobs_observer_free(obs: *mut DescobsObserver) {
    if !obs.is_null() {
        drop(unsafe { Box::from_raw(obs) });
    }
}

/// Reports the order q of a realization.
///
/// # Safety
/// `obs` must be a live handle; `q` must be writable if non-null.
#[no_mangle]
pub unsafe extern "C" fn descobs_observer_order(
    obs: *const DescobsObserver,
    q: *mut usize,
) -> DescobsStatus {
    if obs.is_null() {
        set_last_error("realization handle is null");
        return DescobsStatus::NullPointer;
    }
    if !q.is_null() {
        unsafe { *q = (*obs).inner.q };
    }
    DescobsStatus::Ok
}

/// Writes a realization to a JSON file.
///
/// # Safety
/// `obs` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn descobs_observer_save(
    obs: *const DescobsObserver,
    path: *const c_char,
) -> DescobsStatus {
    if obs.is_null() {
        set_last_error("realization handle is null");
        return DescobsStatus::NullPointer;
    }
    let Some(path) = (unsafe { path_from(path) }) else {
        set_last_error("path is null or not UTF-8");
        return DescobsStatus::NullPointer;
    };
    let o = unsafe { &*obs };
    match io::save_observer(path, &o.inner, &o.policy) {
        Ok(()) => DescobsStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Loads a realization from a JSON file into a new handle.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn descobs_observer_load(
    path: *const c_char,
    out: *mut *mut DescobsObserver,
) -> DescobsStatus {
    if out.is_null() {
        set_last_error("output pointer is null");
        return DescobsStatus::NullPointer;
    }
    let Some(path) = (unsafe { path_from(path) }) else {
        set_last_error("path is null or not UTF-8");
        return DescobsStatus::NullPointer;
    };
    match io::load_observer(path) {
        Ok((obs, policy)) => {
            unsafe { *out = Box::into_raw(Box::new(DescobsObserver { inner: obs, policy })) };
            DescobsStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Re-checks a realization against a system; `ok` receives the verdict.
/// Returns ConditionFailed when the verdict is negative.
///
/// # Safety
/// `sys` and `obs` must be live handles; `ok` writable if non-null.
#[no_mangle]
pub unsafe extern "C" fn descobs_verify(
    sys: *const DescobsSystem,
    obs: *const DescobsObserver,
    ok: *mut bool,
) -> DescobsStatus {
    if sys.is_null() || obs.is_null() {
        set_last_error("system or realization handle is null");
        return DescobsStatus::NullPointer;
    }
    let s = unsafe { &(*sys).inner };
    let o = unsafe { &*obs };
    match verify_observer(s, &o.inner, &o.policy) {
        Ok(report) => {
            let verdict = report.ok();
            if !ok.is_null() {
                unsafe { *ok = verdict };
            }
            if verdict {
                DescobsStatus::Ok
            } else {
                set_last_error("realization failed verification");
                DescobsStatus::ConditionFailed
            }
        }
        Err(e) => fail(&e),
    }
}

/// Runs plant and observer from zero initial conditions (observer matched
/// when `matched` is set) under unit sine inputs and writes the trace CSV.
///
/// # Safety
/// `sys` and `obs` must be live handles; `out_path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn descobs_simulate_csv(
    sys: *const DescobsSystem,
    obs: *const DescobsObserver,
    horizon: f64,
    dt: f64,
    matched: bool,
    out_path: *const c_char,
) -> DescobsStatus {
    if sys.is_null() || obs.is_null() {
        set_last_error("system or realization handle is null");
        return DescobsStatus::NullPointer;
    }
    let Some(path) = (unsafe { path_from(out_path) }) else {
        set_last_error("output path is null or not UTF-8");
        return DescobsStatus::NullPointer;
    };
    let s = unsafe { &(*sys).inner };
    let o = unsafe { &*obs };

    let run = || -> Result<(), Error> {
        let dec = staircase(&s.e, &s.a, &s.b, &o.policy)?;
        let red = reduce(s, &dec)?;
        let u = if s.l() == 0 {
            Signal::zero(0)
        } else {
            Signal::new(
                (0..s.l())
                    .map(|_| ScalarSignal::Sine { omega: 1.0 })
                    .collect(),
            )
        };
        let x_k0 = descobs::simulation::project_initial_condition(
            &red,
            &Vector::zeros(red.n_k()),
            &u.eval(0.0),
            &o.policy,
        )?;
        let w0 = if matched {
            matched_initial_w(&red, &o.inner, &x_k0)
        } else {
            Vector::zeros(o.inner.q)
        };
        let cfg = SimulationConfig {
            t_end: horizon,
            dt,
            x_k0,
            w0,
            u,
            free_mode: None,
            project_ic: false,
        };
        let res = simulate(&red, &o.inner, &cfg, &o.policy)?;
        let mut file = std::fs::File::create(path)?;
        io::write_simulation_csv(&mut file, &res)?;
        Ok(())
    };
    match run() {
        Ok(()) => DescobsStatus::Ok,
        Err(e) => fail(&e),
    }
}
