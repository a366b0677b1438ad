//! C interface to `sawb-core`.
//!
//! Every function returns a [`SawbStatus`]; outputs go through pointer
//! arguments. Handles are opaque and owned by the caller until passed to
//! the matching `_free` function. On failure a description is available
//! from [`sawb_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_traits::ToPrimitive;
use sawb_core::lattice_enum::{self, BallQuery, EnumError};
use sawb_core::solver::{self, Certificate, SolveConfig, SolveError};
use sawb_core::torus_avoidance;
use sawb_core::GroupSpec;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SawbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    ParseError = 4,
    ConfigRejected = 5,
    StageFailed = 6,
    BudgetExceeded = 7,
    Panic = 8,
}

/// A group model with its congruence level.
pub struct SawbGroup {
    spec: GroupSpec,
}

/// A solver certificate.
pub struct SawbCertificate {
    cert: Certificate,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn guard(f: impl FnOnce() -> Result<(), (SawbStatus, String)>) -> SawbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SawbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SawbStatus::Panic
        }
    }
}

fn null() -> (SawbStatus, String) {
    (SawbStatus::NullPointer, "null pointer argument".into())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (SawbStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|e| (SawbStatus::InvalidUtf8, e.to_string()))
}

fn solve_status(e: &SolveError) -> SawbStatus {
    match e {
        SolveError::Config(_) => SawbStatus::ConfigRejected,
        SolveError::Stage { .. } => SawbStatus::StageFailed,
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sawb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// `SL2` with congruence level `level >= 1`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn sawb_group_new_sl2(level: u64, out: *mut *mut SawbGroup) -> SawbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let spec = GroupSpec::sl2(level).map_err(|e| (SawbStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(SawbGroup { spec }));
        Ok(())
    })
}

/// Norm-one group of the quaternion algebra `(a, b)` with level `level`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn sawb_group_new_quat(a: i64, b: i64, level: u64, out: *mut *mut SawbGroup) -> SawbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let spec = GroupSpec::quat(a, b, level).map_err(|e| (SawbStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(SawbGroup { spec }));
        Ok(())
    })
}

/// # Safety
/// `group` must be null or a handle from a `sawb_group_new_*` call that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn sawb_group_free(group: *mut SawbGroup) {
    if !group.is_null() {
        drop(Box::from_raw(group));
    }
}

/// Number of elements of the level subgroup with height `< height`.
///
/// # Safety
/// `group` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sawb_count_ball(group: *const SawbGroup, height: u64, out: *mut u64) -> SawbStatus {
    guard(|| {
        if group.is_null() || out.is_null() {
            return Err(null());
        }
        let q = BallQuery::gamma((*group).spec, height);
        let n = lattice_enum::count_ball(&q).map_err(|e| match e {
            EnumError::BudgetExceeded { .. } => (SawbStatus::BudgetExceeded, e.to_string()),
            _ => (SawbStatus::InvalidArgument, e.to_string()),
        })?;
        *out = n;
        Ok(())
    })
}

/// Fundamental solution of `u^2 - d v^2 = 1`.
///
/// # Safety
/// `out_u` and `out_v` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sawb_pell_fundamental(d: u64, out_u: *mut u64, out_v: *mut u64) -> SawbStatus {
    guard(|| {
        if out_u.is_null() || out_v.is_null() {
            return Err(null());
        }
        let (u, v) = torus_avoidance::pell_fundamental(d).map_err(|e| (SawbStatus::InvalidArgument, e.to_string()))?;
        match (u.to_u64(), v.to_u64()) {
            (Some(u), Some(v)) => {
                *out_u = u;
                *out_v = v;
                Ok(())
            }
            _ => Err((SawbStatus::InvalidArgument, format!("solution for d = {d} exceeds 64 bits"))),
        }
    })
}

/// Run the solver on a JSON config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sawb_solve_json(config_json: *const c_char, out: *mut *mut SawbCertificate) -> SawbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let text = read_str(config_json)?;
        let cfg = SolveConfig::from_json(text).map_err(|e| (SawbStatus::ParseError, e.to_string()))?;
        let cert = solver::solve_any(&cfg).map_err(|e| (solve_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(SawbCertificate { cert }));
        Ok(())
    })
}

/// Parse a certificate.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sawb_certificate_from_json(json: *const c_char, out: *mut *mut SawbCertificate) -> SawbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cert = Certificate::from_json(read_str(json)?).map_err(|e| (SawbStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SawbCertificate { cert }));
        Ok(())
    })
}

/// Serialize a certificate; free the string with `sawb_string_free`.
///
/// # Safety
/// `cert` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sawb_certificate_to_json(cert: *const SawbCertificate, out: *mut *mut c_char) -> SawbStatus {
    guard(|| {
        if cert.is_null() || out.is_null() {
            return Err(null());
        }
        let s = CString::new((*cert).cert.to_json()).map_err(|e| (SawbStatus::InvalidArgument, e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// Recheck a certificate; `*valid` is set to 1 when every check passes.
///
/// # Safety
/// `cert` must be a live handle and `valid` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn sawb_certificate_verify(cert: *const SawbCertificate, valid: *mut i32) -> SawbStatus {
    guard(|| {
        if cert.is_null() || valid.is_null() {
            return Err(null());
        }
        let report = solver::verify_certificate(&(*cert).cert);
        *valid = report.valid as i32;
        if !report.valid {
            set_error(report.failures.join("; "));
        }
        Ok(())
    })
}

/// # Safety
/// `cert` must be null or a live certificate handle.
#[no_mangle]
pub unsafe extern "C" fn sawb_certificate_free(cert: *mut SawbCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sawb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
