//! C ABI over `paritycode`.
//!
//! Codes and decoders are opaque handles created by `pc_*_new`-style calls
//! and released with the matching `pc_*_free`. Every fallible call returns a
//! [`PcStatus`]; on failure a message is stored per thread and can be read
//! with [`pc_last_error_message`]. Strings returned to the caller must be
//! released with [`pc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use paritycode::decode::{bp_decode, syndrome, TannerGraph};
use paritycode::gf2::BitVec;
use paritycode::layouts::lhz_layout;
use paritycode::montecarlo::{run_trials, Decoder, NoiseParams};
use paritycode::{Error, ParityCode, PauliMask};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    InvalidCode = 4,
    CapExceeded = 5,
    DistanceViolation = 6,
    Simulation = 7,
    Verification = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

/// Opaque code handle.
pub struct PcCode {
    code: ParityCode,
}

/// Opaque BP decoder handle bound to one code.
pub struct PcBpDecoder {
    graph: TannerGraph,
    n: usize,
    max_iters: usize,
}

/// Summary of a Monte Carlo run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PcTrialReport {
    pub trials: u64,
    pub logical_errors: u64,
    pub bp_nonconverged: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> PcStatus {
    match err {
        Error::Parse { .. } | Error::InvalidLabel(_) => PcStatus::Parse,
        Error::InvalidCode(_) | Error::ParityRelation(_) | Error::Layout(_) => PcStatus::InvalidCode,
        Error::CapExceeded { .. } => PcStatus::CapExceeded,
        Error::DistanceViolation { .. } => PcStatus::DistanceViolation,
        Error::Simulation(_) => PcStatus::Simulation,
        Error::Verification(_) => PcStatus::Verification,
        _ => PcStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and catching panics at the boundary.
fn guard(f: impl FnOnce() -> Result<(), (PcStatus, String)>) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PcStatus::Panic
        }
    }
}

fn core(err: Error) -> (PcStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (PcStatus, String) {
    (PcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (PcStatus, String) {
    (PcStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (PcStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (PcStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn code_ref<'a>(code: *const PcCode) -> Result<&'a ParityCode, (PcStatus, String)> {
    code.as_ref().map(|c| &c.code).ok_or_else(|| null("code"))
}

fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), (PcStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Last error message on this thread, or null. Valid until the next failing
/// call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn pc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds the LHZ code on `k` logical qubits.
#[no_mangle]
pub extern "C" fn pc_lhz_layout(k: usize, out: *mut *mut PcCode) -> PcStatus {
    guard(|| {
        let layout = lhz_layout(k).map_err(core)?;
        write_out(out, PcCode { code: layout.code })
    })
}

/// Parses a code from its text format.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pc_code_from_text(text: *const c_char, out: *mut *mut PcCode) -> PcStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (PcStatus::InvalidUtf8, e.to_string()))?;
        let code = ParityCode::from_text(s).map_err(core)?;
        write_out(out, PcCode { code })
    })
}

/// Serializes a code. Release the string with [`pc_string_free`].
///
/// # Safety
/// `code` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_code_to_text(code: *const PcCode, out: *mut *mut c_char) -> PcStatus {
    guard(|| {
        let code = code_ref(code)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = CString::new(code.to_text()).map_err(|e| invalid(e.to_string()))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn pc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `code` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn pc_code_free(code: *mut PcCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Number of physical qubits, or 0 for a null handle.
///
/// # Safety
/// `code` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pc_code_n(code: *const PcCode) -> usize {
    code.as_ref().map_or(0, |c| c.code.n())
}

/// Number of encoded logical qubits, or 0 for a null handle.
///
/// # Safety
/// `code` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pc_code_k(code: *const PcCode) -> usize {
    code.as_ref().map_or(0, |c| c.code.k())
}

/// Number of stabilizer generators, or 0 for a null handle.
///
/// # Safety
/// `code` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pc_code_num_stabilizers(code: *const PcCode) -> usize {
    code.as_ref().map_or(0, |c| c.code.stabilizers().len())
}

/// Copies the support of stabilizer `s` into `buf`. `len` receives the
/// weight even when `cap` is too small, in which case nothing is copied and
/// `InvalidArgument` is returned.
///
/// # Safety
/// `buf` must hold `cap` elements.
#[no_mangle]
pub unsafe extern "C" fn pc_code_stabilizer(
    code: *const PcCode,
    s: usize,
    buf: *mut usize,
    cap: usize,
    len: *mut usize,
) -> PcStatus {
    guard(|| {
        let code = code_ref(code)?;
        let st = code
            .stabilizers()
            .get(s)
            .ok_or_else(|| invalid(format!("stabilizer {s} out of range")))?;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = st.support.len();
        if cap < st.support.len() {
            return Err(invalid(format!("buffer holds {cap}, need {}", st.support.len())));
        }
        slice_mut(buf, cap, "buf")?[..st.support.len()].copy_from_slice(&st.support);
        Ok(())
    })
}

/// Code distance (exhaustive; may return `CapExceeded`).
///
/// # Safety
/// `code` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_code_distance(code: *const PcCode, out: *mut usize) -> PcStatus {
    guard(|| {
        let code = code_ref(code)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = code.code_distance().map_err(core)?;
        Ok(())
    })
}

/// Syndrome of the X error `x_flips` (one byte per qubit, non-zero = flip).
///
/// # Safety
/// `x_flips` must hold `n` bytes and `out` `m` bytes.
#[no_mangle]
pub unsafe extern "C" fn pc_syndrome(
    code: *const PcCode,
    x_flips: *const u8,
    n: usize,
    out: *mut u8,
    m: usize,
) -> PcStatus {
    guard(|| {
        let code = code_ref(code)?;
        if n != code.n() || m != code.stabilizers().len() {
            return Err(invalid(format!(
                "expected {} qubits and {} checks, got {n} and {m}",
                code.n(),
                code.stabilizers().len()
            )));
        }
        let flips: Vec<bool> = slice(x_flips, n, "x_flips")?.iter().map(|&b| b != 0).collect();
        let s = syndrome(code, &PauliMask::from_x_bits(BitVec::from_bools(&flips))).map_err(core)?;
        for (i, o) in slice_mut(out, m, "out")?.iter_mut().enumerate() {
            *o = s.get(i) as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `code` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_bp_decoder_new(
    code: *const PcCode,
    max_iters: usize,
    out: *mut *mut PcBpDecoder,
) -> PcStatus {
    guard(|| {
        let code = code_ref(code)?;
        if max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        write_out(
            out,
            PcBpDecoder {
                graph: TannerGraph::from_code(code),
                n: code.n(),
                max_iters,
            },
        )
    })
}

/// Decodes a syndrome. `correction` receives one byte per qubit and
/// `converged` is set to 1 when the correction reproduces the syndrome.
///
/// # Safety
/// Buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pc_bp_decode(
    dec: *const PcBpDecoder,
    syn: *const u8,
    m: usize,
    priors: *const f64,
    n: usize,
    correction: *mut u8,
    converged: *mut i32,
) -> PcStatus {
    guard(|| {
        let dec = dec.as_ref().ok_or_else(|| null("decoder"))?;
        if m != dec.graph.num_checks() || n != dec.n {
            return Err(invalid(format!(
                "expected {} checks and {} qubits, got {m} and {n}",
                dec.graph.num_checks(),
                dec.n
            )));
        }
        let bits: Vec<bool> = slice(syn, m, "syndrome")?.iter().map(|&b| b != 0).collect();
        let priors = slice(priors, n, "priors")?;
        let res = bp_decode(&dec.graph, &BitVec::from_bools(&bits), priors, dec.max_iters).map_err(core)?;
        for (i, o) in slice_mut(correction, n, "correction")?.iter_mut().enumerate() {
            *o = res.correction.x.get(i) as u8;
        }
        if !converged.is_null() {
            *converged = res.converged as i32;
        }
        Ok(())
    })
}

/// # Safety
/// `dec` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn pc_bp_decoder_free(dec: *mut PcBpDecoder) {
    if !dec.is_null() {
        drop(Box::from_raw(dec));
    }
}

/// Monte Carlo memory experiment on one code block. `decoder` is 0 for BP
/// (with `max_iters`) and 1 for exhaustive ML.
///
/// # Safety
/// `code` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pc_run_trials(
    code: *const PcCode,
    p_dec: f64,
    p_cnot: f64,
    trials: u64,
    seed: u64,
    decoder: i32,
    max_iters: usize,
    out: *mut PcTrialReport,
) -> PcStatus {
    guard(|| {
        let code = code_ref(code)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let decoder = match decoder {
            0 => Decoder::Bp { max_iters },
            1 => Decoder::Ml,
            d => return Err(invalid(format!("unknown decoder {d}"))),
        };
        let params = NoiseParams::new(p_dec, p_cnot).map_err(core)?;
        let r = run_trials(std::slice::from_ref(code), params, trials, seed, decoder).map_err(core)?;
        *out = PcTrialReport {
            trials: r.trials,
            logical_errors: r.any_logical_error,
            bp_nonconverged: r.bp_nonconverged,
        };
        Ok(())
    })
}
