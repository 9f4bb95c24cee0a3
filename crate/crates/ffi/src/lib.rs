//! C ABI for the `qviterbi` decoding laboratory.
//!
//! # Conventions
//!
//! Every function returns a [`QvStatus`]; results go through out-pointers
//! that are written only on success, except that bit-array outputs report
//! the required length even on [`QvStatus::BufferTooSmall`]. On failure a
//! message is kept per thread and can be read with [`qv_last_error_message`].
//!
//! Codes and path spaces are opaque handles created by `*_new` functions and
//! released with the matching `*_free`. Bit arrays are `uint8_t` buffers
//! holding one bit (0 or 1) per byte.
//!
//! # Safety
//!
//! Pointers passed in must be null or valid for the stated length; handles
//! must come from this library and not be used after being freed. Null
//! pointers are reported as [`QvStatus::NullPointer`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qviterbi::code::{ConvCode, EncoderState};
use qviterbi::probabilistic::required_trials;
use qviterbi::qva::{run_qva, single_iteration_prob, sweep_omega, PathSpace, QvaParams};
use qviterbi::viterbi::{viterbi_decode, CodeTrellis};
use qviterbi::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SizeLimit = 3,
    DecodeFailure = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Opaque convolutional code.
pub struct QvCode(ConvCode);

/// Opaque set of admissible trellis paths for one received word.
pub struct QvPathSpace(PathSpace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> QvStatus {
    match err {
        Error::Size { .. } => QvStatus::SizeLimit,
        Error::DecodeFailure { .. } | Error::NoPath => QvStatus::DecodeFailure,
        _ => QvStatus::InvalidArgument,
    }
}

struct Fail(QvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QvStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QvStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QvStatus::Panic
        }
    }
}

unsafe fn bits<'a>(data: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_bits(src: &[u8], out: *mut u8, cap: usize, out_len: *mut usize) -> Result<(), Fail> {
    if out_len.is_null() {
        return Err(null("out_len"));
    }
    out_len.write(src.len());
    if src.len() > cap {
        return Err(Fail(QvStatus::BufferTooSmall, format!("need {} bytes, have {cap}", src.len())));
    }
    if !src.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn qv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a code such as `"1,2,2;5,7"` (octal generators).
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qv_code_new(spec: *const c_char, out: *mut *mut QvCode) -> QvStatus {
    guard(|| {
        if spec.is_null() {
            return Err(null("spec"));
        }
        let text =
            CStr::from_ptr(spec).to_str().map_err(|_| Fail(QvStatus::InvalidArgument, "spec is not UTF-8".into()))?;
        let code = ConvCode::parse(text)?;
        write(out, Box::into_raw(Box::new(QvCode(code))), "out")
    })
}

/// # Safety
/// `code` must be null or a handle from [`qv_code_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qv_code_free(code: *mut QvCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Number of encoder states.
///
/// # Safety
/// `code` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qv_code_num_states(code: *const QvCode, out: *mut usize) -> QvStatus {
    guard(|| write(out, handle(code, "code")?.0.num_states(), "out"))
}

/// Encodes `message_len` message bits from the all-zero state.
///
/// # Safety
/// Buffers must be valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn qv_code_encode(
    code: *const QvCode,
    message: *const u8,
    message_len: usize,
    out: *mut u8,
    out_cap: usize,
    out_len: *mut usize,
) -> QvStatus {
    guard(|| {
        let code = &handle(code, "code")?.0;
        let cw = code.encode(bits(message, message_len, "message")?, EncoderState(0))?;
        write_bits(&cw, out, out_cap, out_len)
    })
}

/// Classical Viterbi decoding from the all-zero state.
///
/// # Safety
/// Buffers must be valid for their stated lengths; `metric` writable.
#[no_mangle]
pub unsafe extern "C" fn qv_viterbi_decode(
    code: *const QvCode,
    received: *const u8,
    received_len: usize,
    message_out: *mut u8,
    message_cap: usize,
    message_len: *mut usize,
    metric: *mut u32,
) -> QvStatus {
    guard(|| {
        let code = &handle(code, "code")?.0;
        let rx = bits(received, received_len, "received")?;
        let res = viterbi_decode(&CodeTrellis::new(code, rx)?, 0)?;
        write_bits(&res.message_bits(code.k()), message_out, message_cap, message_len)?;
        write(metric, res.metric, "metric")
    })
}

/// Enumerates the admissible paths for `received` from the all-zero state.
///
/// # Safety
/// `code` must be a live handle, `received` valid for `received_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qv_path_space_new(
    code: *const QvCode,
    received: *const u8,
    received_len: usize,
    out: *mut *mut QvPathSpace,
) -> QvStatus {
    guard(|| {
        let code = &handle(code, "code")?.0;
        let ps = PathSpace::from_code(code, bits(received, received_len, "received")?, EncoderState(0))?;
        write(out, Box::into_raw(Box::new(QvPathSpace(ps))), "out")
    })
}

/// # Safety
/// `ps` must be null or a handle from [`qv_path_space_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qv_path_space_free(ps: *mut QvPathSpace) {
    if !ps.is_null() {
        drop(Box::from_raw(ps));
    }
}

/// Number of admissible paths.
///
/// # Safety
/// `ps` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qv_path_space_len(ps: *const QvPathSpace, out: *mut usize) -> QvStatus {
    guard(|| write(out, handle(ps, "path space")?.0.len(), "out"))
}

/// Amplifies with phase unit `omega` for `iterations` rounds; reports the
/// probability of the classical optimum and the most probable path index.
///
/// # Safety
/// `ps` must be a live handle; out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn qv_run_qva(
    ps: *const QvPathSpace,
    omega: f64,
    iterations: usize,
    prob_top: *mut f64,
    top_index: *mut usize,
) -> QvStatus {
    guard(|| {
        let run = run_qva(&handle(ps, "path space")?.0, &QvaParams::new(omega, iterations)?)?;
        write(prob_top, run.prob_top, "prob_top")?;
        write(top_index, run.top_index, "top_index")
    })
}

/// Phase unit maximizing the probability of the classical optimum.
///
/// # Safety
/// `ps` must be a live handle; out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn qv_sweep_omega(
    ps: *const QvPathSpace,
    iterations: usize,
    grid: f64,
    omega_star: *mut f64,
    prob: *mut f64,
) -> QvStatus {
    guard(|| {
        let sweep = sweep_omega(&handle(ps, "path space")?.0, iterations, grid)?;
        write(omega_star, sweep.omega_star, "omega_star")?;
        write(prob, sweep.prob_at_star, "prob")
    })
}

/// Trials needed so that the mode is wrong with probability at most
/// `target_failure` at depth `steps`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qv_required_trials(steps: usize, e0: f64, target_failure: f64, out: *mut u64) -> QvStatus {
    guard(|| write(out, required_trials(steps, e0, target_failure)?, "out"))
}

/// Probability of `target` after one marking `e^{i angles[j]}` and one diffusion.
///
/// # Safety
/// `angles` must be valid for `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qv_single_iteration_prob(
    angles: *const f64,
    len: usize,
    target: usize,
    out: *mut f64,
) -> QvStatus {
    guard(|| {
        if angles.is_null() {
            return Err(null("angles"));
        }
        let g: Vec<_> =
            std::slice::from_raw_parts(angles, len).iter().map(|&a| qviterbi::Complex64::from_polar(1.0, a)).collect();
        write(out, single_iteration_prob(&g, target)?, "out")
    })
}
