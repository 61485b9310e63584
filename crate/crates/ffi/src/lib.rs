//! C ABI over the `critshuffle` core.
//!
//! Laws and trade-off curves live behind opaque handles. Every fallible call
//! returns a [`CsStatus`] and writes its results through out-pointers; on a
//! non-`CS_OK` status [`cs_last_error`] describes the failure. Handles are
//! released with the matching `*_free` function; passing NULL to a free is a
//! no-op.

// `!(x >= 0.0)` rejects NaN together with negative values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use critshuffle::curve::{delta_from_tradeoff, delta_np, tradeoff_generic, Direction, TradeoffCurve};
use critshuffle::dist::{convolve, make_binomial, make_poisson, make_skellam, tv_distance, IntDist, SkellamMethod};
use critshuffle::limit::{
    poisson_shift_delta_closed, poisson_shift_pair, poisson_shift_tradeoff, skellam_shift_pair, LimitParams,
};
use critshuffle::rr::{canonical_pair, composition_pair, rr_config, Calibration};
use critshuffle::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    CsOk = 0,
    CsInvalidArgument = 1,
    CsNullPointer = 2,
    CsTruncation = 3,
    CsOutOfRange = 4,
    CsGuard = 5,
    CsParse = 6,
    CsPanic = 7,
}

pub const CS_DIRECTION_FORWARD: u32 = 0;
pub const CS_DIRECTION_REVERSE: u32 = 1;
pub const CS_DIRECTION_TWO_SIDED: u32 = 2;

/// Probability law on a contiguous integer window.
pub struct CsIntDist(IntDist);

/// Piecewise-affine trade-off curve.
pub struct CsTradeoff(TradeoffCurve);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::InvalidParameter(_) => CsStatus::CsInvalidArgument,
        Error::TruncationExceeded { .. } => CsStatus::CsTruncation,
        Error::OutOfRange(_) => CsStatus::CsOutOfRange,
        Error::Guard(_) => CsStatus::CsGuard,
        Error::Parse { .. } => CsStatus::CsParse,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), (CsStatus, String)>>(f: F) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::CsOk,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            CsStatus::CsPanic
        }
    }
}

fn lib<T>(r: critshuffle::Result<T>) -> Result<T, (CsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CsStatus, String) {
    (CsStatus::CsNullPointer, format!("{what} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), (CsStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn write_dist(out: *mut *mut CsIntDist, d: IntDist) -> Result<(), (CsStatus, String)> {
    write(out, Box::into_raw(Box::new(CsIntDist(d))), "out")
}

unsafe fn write_pair(
    out_p: *mut *mut CsIntDist,
    out_q: *mut *mut CsIntDist,
    pair: (IntDist, IntDist),
) -> Result<(), (CsStatus, String)> {
    if out_p.is_null() || out_q.is_null() {
        return Err(null("out_p/out_q"));
    }
    write_dist(out_p, pair.0)?;
    write_dist(out_q, pair.1)
}

fn direction(d: u32) -> Result<Direction, (CsStatus, String)> {
    match d {
        CS_DIRECTION_FORWARD => Ok(Direction::Forward),
        CS_DIRECTION_REVERSE => Ok(Direction::Reverse),
        CS_DIRECTION_TWO_SIDED => Ok(Direction::TwoSided),
        _ => Err((CsStatus::CsInvalidArgument, format!("unknown direction {d}"))),
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a law from `len` masses starting at `offset` plus an unplaced `tail_mass`.
///
/// # Safety
/// `mass` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_new(
    offset: i64,
    mass: *const f64,
    len: usize,
    tail_mass: f64,
    out: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| {
        if mass.is_null() {
            return Err(null("mass"));
        }
        let v = std::slice::from_raw_parts(mass, len).to_vec();
        write_dist(out, lib(IntDist::new(offset, v, tail_mass))?)
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_binomial(m: u64, p: f64, out: *mut *mut CsIntDist) -> CsStatus {
    guard(|| write_dist(out, lib(make_binomial(m, p))?))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_poisson(lambda: f64, tail_eps: f64, out: *mut *mut CsIntDist) -> CsStatus {
    guard(|| write_dist(out, lib(make_poisson(lambda, tail_eps))?))
}

/// Skellam law of `Poi(lambda0) - Poi(lambda1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_skellam(
    lambda0: f64,
    lambda1: f64,
    tail_eps: f64,
    out: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| {
        write_dist(
            out,
            lib(make_skellam(lambda0, lambda1, tail_eps, SkellamMethod::Bessel))?,
        )
    })
}

/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_convolve(
    a: *const CsIntDist,
    b: *const CsIntDist,
    out: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        write_dist(out, convolve(&a.0, &b.0))
    })
}

/// # Safety
/// `d` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_free(d: *mut CsIntDist) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Smallest support point, length of the mass window and unplaced tail mass.
///
/// # Safety
/// `d` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_info(
    d: *const CsIntDist,
    offset: *mut i64,
    len: *mut usize,
    tail_mass: *mut f64,
) -> CsStatus {
    guard(|| {
        let d = deref(d, "d")?;
        write(offset, d.0.offset(), "offset")?;
        write(len, d.0.len(), "len")?;
        write(tail_mass, d.0.tail_mass(), "tail_mass")
    })
}

/// Mass at `x`; 0 off the support.
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_int_dist_pmf(d: *const CsIntDist, x: i64, out: *mut f64) -> CsStatus {
    guard(|| write(out, deref(d, "d")?.0.pmf(x), "out"))
}

/// Total variation distance as a `[lower, upper]` interval; the width is the unplaced tail mass.
///
/// # Safety
/// `a`, `b` must be live handles; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tv_distance(
    a: *const CsIntDist,
    b: *const CsIntDist,
    lower: *mut f64,
    upper: *mut f64,
) -> CsStatus {
    guard(|| {
        let tv = tv_distance(&deref(a, "a")?.0, &deref(b, "b")?.0);
        write(lower, tv.lower, "lower")?;
        write(upper, tv.upper, "upper")
    })
}

/// Hockey-stick divergence `delta(eps)` in the given `CS_DIRECTION_*`.
///
/// # Safety
/// `p`, `q` must be live handles; `value` must be writable; `slack` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_delta(
    p: *const CsIntDist,
    q: *const CsIntDist,
    eps: f64,
    dir: u32,
    value: *mut f64,
    slack: *mut f64,
) -> CsStatus {
    guard(|| {
        let dir = direction(dir)?;
        if !(eps >= 0.0) {
            return Err((CsStatus::CsInvalidArgument, format!("eps = {eps} must be >= 0")));
        }
        let r = delta_np(&deref(p, "p")?.0, &deref(q, "q")?.0, eps, dir);
        write(value, r.value, "value")?;
        if !slack.is_null() {
            slack.write(r.slack);
        }
        Ok(())
    })
}

/// Canonical randomized-response pair at `n` with `e^eps0 = c^2 n` and an all-zeros null.
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_rr_canonical_pair(
    n: u64,
    c: f64,
    out_p: *mut *mut CsIntDist,
    out_q: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| {
        let cfg = lib(rr_config(n, Calibration::Canonical { c }, 0))?;
        write_pair(out_p, out_q, lib(canonical_pair(&cfg))?)
    })
}

/// Centered composition pair with `k` one-inputs under the null and local level `eps0`.
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_rr_composition_pair(
    n: u64,
    eps0: f64,
    k: u64,
    out_p: *mut *mut CsIntDist,
    out_q: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| {
        let cfg = lib(rr_config(n, Calibration::Explicit { eps0 }, k))?;
        write_pair(out_p, out_q, lib(composition_pair(&cfg))?)
    })
}

/// `(Poi(lambda), 1 + Poi(lambda))`.
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_poisson_shift_pair(
    lambda: f64,
    tail_eps: f64,
    out_p: *mut *mut CsIntDist,
    out_q: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| write_pair(out_p, out_q, lib(poisson_shift_pair(lambda, tail_eps))?))
}

/// Skellam-shift limit pair for critical constant `c` and one-fraction `pi`.
///
/// # Safety
/// Out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_skellam_shift_pair(
    c: f64,
    pi: f64,
    tail_eps: f64,
    out_p: *mut *mut CsIntDist,
    out_q: *mut *mut CsIntDist,
) -> CsStatus {
    guard(|| {
        let params = lib(LimitParams::new(c, pi))?;
        write_pair(out_p, out_q, lib(skellam_shift_pair(&params, tail_eps))?)
    })
}

/// Closed-form forward `delta(eps)` of the Poisson-shift pair.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_poisson_shift_delta(lambda: f64, eps: f64, out: *mut f64) -> CsStatus {
    guard(|| write(out, lib(poisson_shift_delta_closed(lambda, eps))?, "out"))
}

unsafe fn write_tradeoff(out: *mut *mut CsTradeoff, t: TradeoffCurve) -> Result<(), (CsStatus, String)> {
    write(out, Box::into_raw(Box::new(CsTradeoff(t))), "out")
}

/// Trade-off curve of testing `p` against `q`.
///
/// # Safety
/// `p`, `q` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_new(
    p: *const CsIntDist,
    q: *const CsIntDist,
    out: *mut *mut CsTradeoff,
) -> CsStatus {
    guard(|| write_tradeoff(out, lib(tradeoff_generic(&deref(p, "p")?.0, &deref(q, "q")?.0))?))
}

/// Exact trade-off curve of the Poisson-shift pair.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_poisson_shift(lambda: f64, out: *mut *mut CsTradeoff) -> CsStatus {
    guard(|| write_tradeoff(out, lib(poisson_shift_tradeoff(lambda, None))?))
}

/// # Safety
/// `t` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_free(t: *mut CsTradeoff) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of knots.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_len(t: *const CsTradeoff, out: *mut usize) -> CsStatus {
    guard(|| write(out, deref(t, "t")?.0.knots().len(), "out"))
}

/// Knot `i` as `(alpha, beta)`.
///
/// # Safety
/// `t` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_knot(t: *const CsTradeoff, i: usize, alpha: *mut f64, beta: *mut f64) -> CsStatus {
    guard(|| {
        let knots = deref(t, "t")?.0.knots();
        let &(a, b) = knots
            .get(i)
            .ok_or_else(|| (CsStatus::CsOutOfRange, format!("knot {i} of {}", knots.len())))?;
        write(alpha, a, "alpha")?;
        write(beta, b, "beta")
    })
}

/// `f(alpha)` for `alpha` in `[0, 1]`.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_eval(t: *const CsTradeoff, alpha: f64, out: *mut f64) -> CsStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&alpha) {
            return Err((CsStatus::CsInvalidArgument, format!("alpha = {alpha} outside [0, 1]")));
        }
        write(out, deref(t, "t")?.0.eval(alpha), "out")
    })
}

/// `delta(eps)` recovered from the curve by convex duality.
///
/// # Safety
/// `t` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tradeoff_delta(t: *const CsTradeoff, eps: f64, out: *mut f64) -> CsStatus {
    guard(|| {
        if !(eps >= 0.0) {
            return Err((CsStatus::CsInvalidArgument, format!("eps = {eps} must be >= 0")));
        }
        write(out, delta_from_tradeoff(&deref(t, "t")?.0, eps), "out")
    })
}
