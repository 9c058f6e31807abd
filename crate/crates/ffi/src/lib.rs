//! C ABI over the core crate: opaque handles, integer status codes and a
//! thread-local last-error message. The header is generated by cbindgen at
//! build time into `include/drmdp.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use drmdp::ensemble::{estimate_default_matrix, TransitionMatrix};
use drmdp::lsmdp::{optimal_policy, solve_desirability, Policy, UtilitySchedule};
use drmdp::privacy::{epsilon_guarantee, sample_mechanism, PrivacyParams, SimplexVector};
use drmdp::private_policy::{expected_log_digamma, expected_log_taylor, solve_private};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Result of every fallible call. `Ok` is zero; nonzero codes align with the
/// CLI exit classes, and the message behind a failure is available through
/// `drmdp_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrmdpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    NumericalError = 4,
    BufferTooSmall = 5,
}

/// Expected-log plug-in used by `drmdp_solve_private`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrmdpMethod {
    Taylor = 0,
    Digamma = 1,
}

/// Opaque row-stochastic transition matrix.
pub struct DrmdpMatrix {
    inner: TransitionMatrix,
}

/// Opaque time-varying policy.
pub struct DrmdpPolicy {
    inner: Policy,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &drmdp::Error) -> DrmdpStatus {
    match err {
        drmdp::Error::InvalidParameter(_) => DrmdpStatus::InvalidArgument,
        drmdp::Error::Data(_) => DrmdpStatus::InvalidData,
        drmdp::Error::Numerical(_) => DrmdpStatus::NumericalError,
    }
}

fn guard(body: impl FnOnce() -> DrmdpStatus) -> DrmdpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            DrmdpStatus::NumericalError
        }
    }
}

fn fail(err: drmdp::Error) -> DrmdpStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn drmdp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Parses a transition matrix from its JSON form
/// (`{"n": .., "rows": [[..]], "support_mask": [[..]]}`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drmdp_matrix_from_json(
    json: *const c_char,
    out: *mut *mut DrmdpMatrix,
) -> DrmdpStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("json is not valid UTF-8");
                return DrmdpStatus::InvalidData;
            }
        };
        let matrix: TransitionMatrix = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                set_error(&format!("invalid matrix JSON: {e}"));
                return DrmdpStatus::InvalidData;
            }
        };
        if let Err(e) = matrix.validate() {
            return fail(e);
        }
        unsafe {
            *out = Box::into_raw(Box::new(DrmdpMatrix { inner: matrix }));
        }
        DrmdpStatus::Ok
    })
}

/// Serializes a matrix to JSON. The returned string must be released with
/// `drmdp_string_free`.
///
/// # Safety
/// `matrix` must be a live handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drmdp_matrix_to_json(
    matrix: *const DrmdpMatrix,
    out_json: *mut *mut c_char,
) -> DrmdpStatus {
    guard(|| {
        if matrix.is_null() || out_json.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let m = unsafe { &*matrix };
        let text = serde_json::to_string(&m.inner).expect("matrix serializes");
        unsafe {
            *out_json = CString::new(text).expect("no NUL in JSON").into_raw();
        }
        DrmdpStatus::Ok
    })
}

/// Maximum-likelihood estimate from a state-index path; unvisited states get
/// self-loop rows.
///
/// # Safety
/// `path` must point to `path_len` readable elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn drmdp_matrix_estimate(
    path: *const u32,
    path_len: usize,
    n_states: u32,
    out: *mut *mut DrmdpMatrix,
) -> DrmdpStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let slice = unsafe { std::slice::from_raw_parts(path, path_len) };
        let path: Vec<usize> = slice.iter().map(|&s| s as usize).collect();
        match estimate_default_matrix(&[path], n_states as usize) {
            Ok(matrix) => {
                unsafe {
                    *out = Box::into_raw(Box::new(DrmdpMatrix { inner: matrix }));
                }
                DrmdpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn drmdp_matrix_dim(matrix: *const DrmdpMatrix) -> u32 {
    if matrix.is_null() {
        return 0;
    }
    unsafe { &*matrix }.inner.n as u32
}

/// Copies row `source` (length n) into `out`.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn drmdp_matrix_row(
    matrix: *const DrmdpMatrix,
    source: u32,
    out: *mut f64,
    out_len: usize,
) -> DrmdpStatus {
    guard(|| {
        if matrix.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let m = unsafe { &*matrix };
        let b = source as usize;
        if b >= m.inner.n {
            set_error(&format!("row {b} out of range (n={})", m.inner.n));
            return DrmdpStatus::InvalidArgument;
        }
        if out_len < m.inner.n {
            set_error("output buffer smaller than the state count");
            return DrmdpStatus::BufferTooSmall;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(m.inner.rows[b].as_ptr(), out, m.inner.n);
        }
        DrmdpStatus::Ok
    })
}

/// # Safety
/// `matrix` must be null or an owned live handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn drmdp_matrix_free(matrix: *mut DrmdpMatrix) {
    if !matrix.is_null() {
        drop(unsafe { Box::from_raw(matrix) });
    }
}

unsafe fn utility_from_raw(
    utility: *const f64,
    horizon: u32,
    n: usize,
) -> Result<UtilitySchedule, drmdp::Error> {
    let horizon = horizon as usize;
    let values = unsafe { std::slice::from_raw_parts(utility, horizon * n) };
    UtilitySchedule::new(values.chunks(n).map(|c| c.to_vec()).collect())
}

/// Solves the control problem on the default dynamics. `utility` is a
/// row-major horizon×n array of aggregator utilities.
///
/// # Safety
/// `matrix` must be live; `utility` must hold horizon×n doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn drmdp_solve(
    matrix: *const DrmdpMatrix,
    utility: *const f64,
    horizon: u32,
    gamma: f64,
    out: *mut *mut DrmdpPolicy,
) -> DrmdpStatus {
    guard(|| {
        if matrix.is_null() || utility.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        if horizon < 2 {
            set_error("horizon must be at least 2");
            return DrmdpStatus::InvalidArgument;
        }
        let m = unsafe { &*matrix };
        let u = match unsafe { utility_from_raw(utility, horizon, m.inner.n) } {
            Ok(u) => u,
            Err(e) => return fail(e),
        };
        let solved = solve_desirability(&m.inner, &u, gamma, horizon as usize)
            .and_then(|z| optimal_policy(&m.inner, &z, gamma));
        match solved {
            Ok(policy) => {
                unsafe {
                    *out = Box::into_raw(Box::new(DrmdpPolicy { inner: policy }));
                }
                DrmdpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Solves the privatized problem with the chosen expected-log plug-in at
/// concentration `k`.
///
/// # Safety
/// Same contracts as `drmdp_solve`.
#[no_mangle]
pub unsafe extern "C" fn drmdp_solve_private(
    matrix: *const DrmdpMatrix,
    utility: *const f64,
    horizon: u32,
    gamma: f64,
    k: f64,
    method: DrmdpMethod,
    out: *mut *mut DrmdpPolicy,
) -> DrmdpStatus {
    guard(|| {
        if matrix.is_null() || utility.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        if horizon < 2 {
            set_error("horizon must be at least 2");
            return DrmdpStatus::InvalidArgument;
        }
        let m = unsafe { &*matrix };
        let u = match unsafe { utility_from_raw(utility, horizon, m.inner.n) } {
            Ok(u) => u,
            Err(e) => return fail(e),
        };
        let elog = match method {
            DrmdpMethod::Taylor => expected_log_taylor(&m.inner, k),
            DrmdpMethod::Digamma => expected_log_digamma(&m.inner, k),
        };
        let solved = elog.and_then(|elog| solve_private(&m.inner, &u, gamma, horizon as usize, &elog));
        match solved {
            Ok((policy, _)) => {
                unsafe {
                    *out = Box::into_raw(Box::new(DrmdpPolicy { inner: policy }));
                }
                DrmdpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of transition steps (horizon − 1), or 0 for a null handle.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn drmdp_policy_steps(policy: *const DrmdpPolicy) -> u32 {
    if policy.is_null() {
        return 0;
    }
    unsafe { &*policy }.inner.matrices.len() as u32
}

/// KL penalty weight the policy was solved under.
///
/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn drmdp_policy_gamma(policy: *const DrmdpPolicy) -> f64 {
    if policy.is_null() {
        return f64::NAN;
    }
    unsafe { &*policy }.inner.gamma
}

/// Copies the n×n controlled matrix of step `t` into `out`, row-major.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn drmdp_policy_step(
    policy: *const DrmdpPolicy,
    t: u32,
    out: *mut f64,
    out_len: usize,
) -> DrmdpStatus {
    guard(|| {
        if policy.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let p = unsafe { &*policy };
        let t = t as usize;
        if t >= p.inner.matrices.len() {
            set_error(&format!(
                "step {t} out of range ({} steps)",
                p.inner.matrices.len()
            ));
            return DrmdpStatus::InvalidArgument;
        }
        let m = &p.inner.matrices[t];
        if out_len < m.n * m.n {
            set_error("output buffer smaller than n*n");
            return DrmdpStatus::BufferTooSmall;
        }
        for (b, row) in m.rows.iter().enumerate() {
            unsafe {
                std::ptr::copy_nonoverlapping(row.as_ptr(), out.add(b * m.n), m.n);
            }
        }
        DrmdpStatus::Ok
    })
}

/// Serializes the policy as `{gamma, T, matrices}` JSON; release the string
/// with `drmdp_string_free`.
///
/// # Safety
/// `policy` must be live; `out_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn drmdp_policy_to_json(
    policy: *const DrmdpPolicy,
    out_json: *mut *mut c_char,
) -> DrmdpStatus {
    guard(|| {
        if policy.is_null() || out_json.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let p = unsafe { &*policy };
        let file = drmdp::report::PolicyFile::from_policy(&p.inner);
        let text = serde_json::to_string(&file).expect("policy serializes");
        unsafe {
            *out_json = CString::new(text).expect("no NUL in JSON").into_raw();
        }
        DrmdpStatus::Ok
    })
}

/// # Safety
/// `policy` must be null or an owned live handle; it is consumed.
#[no_mangle]
pub unsafe extern "C" fn drmdp_policy_free(policy: *mut DrmdpPolicy) {
    if !policy.is_null() {
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// One seeded draw of the Dirichlet mechanism over `probs` (length n, summing
/// to one; zeros are preserved). Writes the privatized vector into `out`.
///
/// # Safety
/// `probs` and `out` must point to `n` readable/writable doubles.
#[no_mangle]
pub unsafe extern "C" fn drmdp_dirichlet_sample(
    probs: *const f64,
    n: usize,
    k: f64,
    seed: u64,
    out: *mut f64,
) -> DrmdpStatus {
    guard(|| {
        if probs.is_null() || out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let entries = unsafe { std::slice::from_raw_parts(probs, n) }.to_vec();
        let zeta = match SimplexVector::new(entries) {
            Ok(z) => z,
            Err(e) => return fail(e),
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        match sample_mechanism(&zeta, k, &mut rng) {
            Ok(draw) => {
                unsafe {
                    std::ptr::copy_nonoverlapping(draw.entries.as_ptr(), out, n);
                }
                DrmdpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Privacy loss of the mechanism at the given accounting inputs.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drmdp_epsilon_guarantee(
    k: f64,
    h: f64,
    psi: f64,
    omega: f64,
    omega_bar: f64,
    w_size: u32,
    out: *mut f64,
) -> DrmdpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        let params = match PrivacyParams::new(k, h) {
            Ok(mut p) => {
                p.psi = Some(psi);
                p
            }
            Err(e) => return fail(e),
        };
        match epsilon_guarantee(&params, omega, omega_bar, w_size as usize) {
            Ok(eps) => {
                unsafe {
                    *out = eps;
                }
                DrmdpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Digamma function for x > 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn drmdp_digamma(x: f64, out: *mut f64) -> DrmdpStatus {
    guard(|| {
        if out.is_null() {
            set_error("null argument");
            return DrmdpStatus::NullArgument;
        }
        match drmdp::special::digamma(x) {
            Ok(v) => {
                unsafe {
                    *out = v;
                }
                DrmdpStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a string returned by the `*_to_json` functions.
///
/// # Safety
/// `s` must be null or a pointer produced by this library.
#[no_mangle]
pub unsafe extern "C" fn drmdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
