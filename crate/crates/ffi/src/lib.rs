//! C interface to `omegalab`.
//!
//! Objects cross the boundary as opaque handles created by `ol_*_new` or
//! `ol_*_solve` and released by the matching `ol_*_free`. Every fallible
//! call returns an [`OlStatus`] and writes results through out-pointers;
//! on failure `ol_last_error` describes the problem for the calling thread.
//!
//! Rate functions are passed unshifted (`ρ = 0`); the discount rate `q` is
//! a separate argument.

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use omegalab::control::BarrierSolution;
use omegalab::mc::{simulate_value, Estimator, McConfig};
use omegalab::{optimal_barrier, solve_h, BankruptcyRate, LevyModel, OmegaError, OmegaScale, Piece, ScaleBasis, SolverConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Usage = 3,
    Numeric = 4,
    Validation = 5,
    Panic = 6,
}

pub struct OlModel(LevyModel);
pub struct OlRate(BankruptcyRate);
pub struct OlOmegaScale(OmegaScale);
pub struct OlBarrier(BarrierSolution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &OmegaError) -> OlStatus {
    match e {
        OmegaError::Domain(_) => OlStatus::Domain,
        OmegaError::Usage(_) => OlStatus::Usage,
        OmegaError::Numeric(_) => OlStatus::Numeric,
        OmegaError::Validation(_) => OlStatus::Validation,
    }
}

enum Fail {
    Null(&'static str),
    Err(OmegaError),
}

impl From<OmegaError> for Fail {
    fn from(e: OmegaError) -> Self {
        Fail::Err(e)
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> OlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OlStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            OlStatus::NullPointer
        }
        Ok(Err(Fail::Err(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            OlStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes a handle obtained from this library or null.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the contract, valid for writes.
    unsafe { p.write(v) };
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the contract, points to `n` doubles.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: `p` came from `boxed` and is released once.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ol_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ol_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Model with a hyperexponential jump law of `n_jumps` components.
///
/// # Safety
/// `weights` and `rates` point to `n_jumps` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_model_new(
    mu: f64,
    sigma: f64,
    lambda: f64,
    weights: *const f64,
    rates: *const f64,
    n_jumps: usize,
    out: *mut *mut OlModel,
) -> OlStatus {
    guard(|| {
        let w = unsafe { slice(weights, n_jumps, "weights") }?;
        let r = unsafe { slice(rates, n_jumps, "rates") }?;
        let mix = w
            .iter()
            .zip(r)
            .map(|(&weight, &rate)| omegalab::JumpComponent { weight, rate })
            .collect();
        let m = LevyModel::new(mu, sigma, lambda, mix)?;
        unsafe { write(out, boxed(OlModel(m)), "out") }
    })
}

/// The reference model: μ = 0.075, σ = 0.25, λ = 0.5, exponential jumps
/// with rate 9.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_model_reference(out: *mut *mut OlModel) -> OlStatus {
    guard(|| unsafe { write(out, boxed(OlModel(LevyModel::reference())), "out") })
}

/// # Safety
/// `model` is null or a handle from `ol_model_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ol_model_free(model: *mut OlModel) {
    unsafe { free(model) }
}

/// `Φ(r)`, the largest root of `ψ(θ) = r`.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_model_phi(model: *const OlModel, r: f64, out: *mut f64) -> OlStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let v = m.0.phi(r)?;
        unsafe { write(out, v, "out") }
    })
}

/// Scale function `W_q(x)` or one of its first two derivatives.
///
/// # Safety
/// `model` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_scale_w(model: *const OlModel, q: f64, x: f64, deriv: u8, out: *mut f64) -> OlStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        if deriv > 2 {
            return Err(OmegaError::Usage(format!("derivative order {deriv} not supported")).into());
        }
        let basis = ScaleBasis::new(&m.0, q)?;
        unsafe { write(out, basis.w(x, deriv), "out") }
    })
}

/// Constant rate `phi` on `(−∞, 0)`; `a <= 0` is the left end of the
/// solver grid.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_rate_parisian(a: f64, phi: f64, out: *mut *mut OlRate) -> OlStatus {
    guard(|| {
        let r = BankruptcyRate::parisian_from(a, phi)?;
        unsafe { write(out, boxed(OlRate(r)), "out") }
    })
}

/// Step family with `n` steps on `[a, 0)`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_rate_step(n: usize, a: f64, phi: f64, out: *mut *mut OlRate) -> OlStatus {
    guard(|| {
        let r = BankruptcyRate::step_family(n, a, phi)?;
        unsafe { write(out, boxed(OlRate(r)), "out") }
    })
}

/// Affine family `φ + m(x − a)` on `[a, 0)`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_rate_affine(m: f64, a: f64, phi: f64, out: *mut *mut OlRate) -> OlStatus {
    guard(|| {
        let r = BankruptcyRate::affine_family(m, a, phi)?;
        unsafe { write(out, boxed(OlRate(r)), "out") }
    })
}

/// Piecewise-affine rate. `breakpoints` holds `n_breakpoints` increasing
/// values ending at 0; piece `k` on `[breakpoints[k], breakpoints[k+1])` is
/// `intercepts[k] + slopes[k] · (x − breakpoints[k])`.
///
/// # Safety
/// `breakpoints` points to `n_breakpoints` doubles, `intercepts` and
/// `slopes` to `n_breakpoints − 1` doubles each; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_rate_new(
    breakpoints: *const f64,
    n_breakpoints: usize,
    intercepts: *const f64,
    slopes: *const f64,
    phi: f64,
    out: *mut *mut OlRate,
) -> OlStatus {
    guard(|| {
        let bp = unsafe { slice(breakpoints, n_breakpoints, "breakpoints") }?;
        let n = n_breakpoints.saturating_sub(1);
        let ic = unsafe { slice(intercepts, n, "intercepts") }?;
        let sl = unsafe { slice(slopes, n, "slopes") }?;
        let pieces = ic
            .iter()
            .zip(sl)
            .map(|(&intercept, &slope)| {
                if slope == 0.0 {
                    Piece::Constant { value: intercept }
                } else {
                    Piece::Affine { intercept, slope }
                }
            })
            .collect();
        let r = BankruptcyRate::new(bp.to_vec(), pieces, phi, 0.0)?;
        unsafe { write(out, boxed(OlRate(r)), "out") }
    })
}

/// # Safety
/// `rate` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ol_rate_free(rate: *mut OlRate) {
    unsafe { free(rate) }
}

/// `ω(x)`, right-continuous.
///
/// # Safety
/// `rate` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_rate_eval(rate: *const OlRate, x: f64, out: *mut f64) -> OlStatus {
    guard(|| {
        let r = unsafe { deref(rate, "rate") }?;
        unsafe { write(out, r.0.eval(x), "out") }
    })
}

fn solver_config(grid_step: f64) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    if grid_step > 0.0 {
        cfg.grid_step = grid_step;
    }
    cfg
}

/// Solve for the Omega scale function of `q + ω`. A `grid_step` of 0 or
/// less selects the default.
///
/// # Safety
/// `model` and `rate` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_omega_solve(
    model: *const OlModel,
    rate: *const OlRate,
    q: f64,
    grid_step: f64,
    out: *mut *mut OlOmegaScale,
) -> OlStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let r = unsafe { deref(rate, "rate") }?;
        let s = solve_h(&m.0, &r.0.shift(q)?, &solver_config(grid_step))?;
        unsafe { write(out, boxed(OlOmegaScale(s)), "out") }
    })
}

/// # Safety
/// `scale` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ol_omega_free(scale: *mut OlOmegaScale) {
    unsafe { free(scale) }
}

/// `ℋ(x)` and its derivatives for `deriv` in 0..=2; the second derivative
/// is refused at kinks of `ω`.
///
/// # Safety
/// `scale` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_omega_eval(scale: *const OlOmegaScale, x: f64, deriv: u8, out: *mut f64) -> OlStatus {
    guard(|| {
        let s = unsafe { deref(scale, "scale") }?;
        let v = match deriv {
            0 => s.0.value(x)?,
            1 => s.0.deriv(x)?,
            2 => s.0.second(x)?,
            _ => return Err(OmegaError::Usage(format!("derivative order {deriv} not supported")).into()),
        };
        unsafe { write(out, v, "out") }
    })
}

/// Optimal barrier for `ω` at discount rate `q`.
///
/// # Safety
/// `model` and `rate` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_barrier_solve(
    model: *const OlModel,
    rate: *const OlRate,
    q: f64,
    grid_step: f64,
    out: *mut *mut OlBarrier,
) -> OlStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let r = unsafe { deref(rate, "rate") }?;
        let b = optimal_barrier(&m.0, &r.0, q, &solver_config(grid_step))?;
        unsafe { write(out, boxed(OlBarrier(b)), "out") }
    })
}

/// # Safety
/// `barrier` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ol_barrier_free(barrier: *mut OlBarrier) {
    unsafe { free(barrier) }
}

/// # Safety
/// `barrier` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_barrier_b_star(barrier: *const OlBarrier, out: *mut f64) -> OlStatus {
    guard(|| {
        let b = unsafe { deref(barrier, "barrier") }?;
        unsafe { write(out, b.0.b_star, "out") }
    })
}

/// Optimal value `v*(x)`.
///
/// # Safety
/// `barrier` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ol_barrier_value(barrier: *const OlBarrier, x: f64, out: *mut f64) -> OlStatus {
    guard(|| {
        let b = unsafe { deref(barrier, "barrier") }?;
        let v = b.0.value_at(x)?;
        unsafe { write(out, v, "out") }
    })
}

/// Monte Carlo estimate of the barrier-`b` value at `x0`. `killed` selects
/// the killed-path estimator instead of the discounted one.
///
/// # Safety
/// `model` and `rate` are live handles; `mean` and `stderr` are writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ol_mc_value(
    model: *const OlModel,
    rate: *const OlRate,
    q: f64,
    b: f64,
    x0: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
    killed: c_int,
    mean: *mut f64,
    stderr: *mut f64,
) -> OlStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let r = unsafe { deref(rate, "rate") }?;
        let cfg = McConfig {
            dt,
            n_paths,
            seed,
            estimator: if killed != 0 { Estimator::Killed } else { Estimator::Discounted },
            ..McConfig::default()
        };
        let est = simulate_value(&m.0, &r.0, q, b, x0, &cfg)?;
        unsafe { write(mean, est.mean, "mean") }?;
        unsafe { write(stderr, est.stderr, "stderr") }
    })
}
