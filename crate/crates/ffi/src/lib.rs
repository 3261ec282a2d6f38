//! C ABI for the `nlsic` toolkit.
//!
//! Objects are opaque handles created by the constructor functions and
//! released with the matching `*_free`. Every fallible function returns
//! an [`NlsicStatus`]; on failure the message is available through
//! [`nlsic_last_error`] on the same thread. Complex sample buffers are passed
//! as separate real and imaginary arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nlsic::channel::{AnalogSpec, AuxChannel, DiscreteChannel, Nonlinearity, OutsidePolicy};
use nlsic::fba::{run_fba_stage, FbaOptions};
use nlsic::modem::{calibrate_gain, db_to_linear, Alphabet, Family, Frame};
use nlsic::nn::{load_checkpoint, NnEqualizer};
use nlsic::sic::{estimate_rate, AppMatrix, StageEqualizer, StageInput};
use nlsic::Error;
use num_complex::Complex64;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlsicStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Io = 4,
    Checkpoint = 5,
    Panic = 6,
}

/// Modulation families.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlsicFamily {
    Pam = 0,
    Ask = 1,
    Sqam = 2,
}

/// Memoryless nonlinearities; `Rapp` takes its smoothness separately.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlsicNonlinearity {
    Sld = 0,
    Identity = 1,
    Rapp = 2,
}

/// Opaque discrete channel.
pub struct NlsicChannel(DiscreteChannel);

/// Opaque trained network equalizer.
pub struct NlsicModel(NnEqualizer);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> NlsicStatus {
    match e {
        Error::Infeasible { .. } | Error::TooLarge(_) => NlsicStatus::Infeasible,
        Error::Io(_) => NlsicStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => NlsicStatus::Checkpoint,
        _ => NlsicStatus::InvalidArgument,
    }
}

struct Fail(NlsicStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NlsicStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(NlsicStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NlsicStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NlsicStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NlsicStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn complex(re: *const f64, im: *const f64, len: usize, what: &str) -> Result<Vec<Complex64>, Fail> {
    let re = slice(re, len, what)?;
    let im = if im.is_null() { None } else { Some(slice(im, len, what)?) };
    Ok((0..len).map(|i| Complex64::new(re[i], im.map_or(0.0, |v| v[i]))).collect())
}

unsafe fn channel<'a>(p: *const NlsicChannel) -> Result<&'a DiscreteChannel, Fail> {
    p.as_ref().map(|c| &c.0).ok_or_else(|| null("channel"))
}

fn alphabet(family: NlsicFamily, m: usize, gain: f64) -> Result<Alphabet, Fail> {
    let family = match family {
        NlsicFamily::Pam => Family::Pam,
        NlsicFamily::Ask => Family::Ask,
        NlsicFamily::Sqam => Family::Sqam,
    };
    Ok(Alphabet::new(family, m)?.with_gain(gain))
}

unsafe fn known_symbols(known: *const i32, n: usize, m: usize) -> Result<Vec<Option<usize>>, Fail> {
    slice(known, n, "known")?
        .iter()
        .map(|&k| match k {
            -1 => Ok(None),
            k if k >= 0 && (k as usize) < m => Ok(Some(k as usize)),
            k => Err(invalid(format!("known symbol {k} outside -1..{m}"))),
        })
        .collect()
}

fn write_apps(apps: &AppMatrix, out: &mut [f64]) -> Result<(), Fail> {
    if out.len() != apps.as_slice().len() {
        return Err(invalid("APP buffer has the wrong length"));
    }
    out.copy_from_slice(apps.as_slice());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nlsic_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Short-reach fiber channel of `fiber_length_m` meters with unit noise
/// variance (square-law detection, real noise, two samples per symbol).
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn nlsic_channel_fiber(fiber_length_m: f64, out: *mut *mut NlsicChannel) -> NlsicStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ch = DiscreteChannel::from_spec(&AnalogSpec::fiber(fiber_length_m))?;
        *out = Box::into_raw(Box::new(NlsicChannel(ch)));
        Ok(())
    })
}

/// Channel from explicit filter taps (odd lengths). `g_im`/`h_im` may be null
/// for real taps; `rapp_p` is used only with the Rapp nonlinearity.
///
/// # Safety
/// Tap arrays must hold `k_g`/`k_h` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlsic_channel_from_taps(
    g_re: *const f64,
    g_im: *const f64,
    k_g: usize,
    h_re: *const f64,
    h_im: *const f64,
    k_h: usize,
    n_sim: usize,
    n_os: usize,
    nonlinearity: NlsicNonlinearity,
    rapp_p: f64,
    noise_sigma2: f64,
    noise_real: bool,
    out: *mut *mut NlsicChannel,
) -> NlsicStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = complex(g_re, g_im, k_g, "g")?;
        let h = complex(h_re, h_im, k_h, "h")?;
        let nl = match nonlinearity {
            NlsicNonlinearity::Sld => Nonlinearity::Sld,
            NlsicNonlinearity::Identity => Nonlinearity::Identity,
            NlsicNonlinearity::Rapp => Nonlinearity::Rapp { p: rapp_p },
        };
        let ch = DiscreteChannel::from_taps(g, h, n_sim, n_os, nl, noise_sigma2, noise_real)?;
        *out = Box::into_raw(Box::new(NlsicChannel(ch)));
        Ok(())
    })
}

/// Releases a channel; null is ignored.
///
/// # Safety
/// `ch` must come from a channel constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlsic_channel_free(ch: *mut NlsicChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Receiver samples per symbol, or 0 for a null handle.
///
/// # Safety
/// `ch` must be null or a live channel.
#[no_mangle]
pub unsafe extern "C" fn nlsic_channel_samples_per_symbol(ch: *const NlsicChannel) -> usize {
    ch.as_ref().map_or(0, |c| c.0.n_os())
}

/// Symbols each output slot depends on besides its own, or 0 for null.
///
/// # Safety
/// `ch` must be null or a live channel.
#[no_mangle]
pub unsafe extern "C" fn nlsic_channel_memory(ch: *const NlsicChannel) -> usize {
    ch.as_ref().map_or(0, |c| c.0.span())
}

/// Gain that sets the average transmit power to `snr_db` (unit noise).
///
/// # Safety
/// `ch` must be a live channel and `gain` writable.
#[no_mangle]
pub unsafe extern "C" fn nlsic_calibrate_gain(
    ch: *const NlsicChannel,
    family: NlsicFamily,
    m: usize,
    snr_db: f64,
    gain: *mut f64,
) -> NlsicStatus {
    guard(|| {
        let ch = channel(ch)?;
        if gain.is_null() {
            return Err(null("gain"));
        }
        *gain = calibrate_gain(&alphabet(family, m, 1.0)?, ch, db_to_linear(snr_db))?;
        Ok(())
    })
}

/// Simulates symbol indices `indices[0..n]` and writes `n * N_os` samples.
/// `y_im` may be null when only the real part is wanted.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn nlsic_simulate(
    ch: *const NlsicChannel,
    family: NlsicFamily,
    m: usize,
    gain: f64,
    indices: *const u32,
    n: usize,
    seed: u64,
    y_re: *mut f64,
    y_im: *mut f64,
) -> NlsicStatus {
    guard(|| {
        let ch = channel(ch)?;
        let a = alphabet(family, m, gain)?;
        let idx = slice(indices, n, "indices")?;
        if let Some(bad) = idx.iter().find(|&&i| i as usize >= m) {
            return Err(invalid(format!("symbol index {bad} outside 0..{m}")));
        }
        let frame = Frame::from_indices(&a, idx.iter().map(|&i| i as usize).collect());
        let y = ch.simulate_frame(&frame, seed)?;
        let re = slice_mut(y_re, y.len(), "y_re")?;
        for (o, z) in re.iter_mut().zip(&y) {
            *o = z.re;
        }
        if !y_im.is_null() {
            for (o, z) in slice_mut(y_im, y.len(), "y_im")?.iter_mut().zip(&y) {
                *o = z.im;
            }
        }
        Ok(())
    })
}

/// Forward-backward APPs of the stage-`stage` symbols (1-based) of an
/// `n`-symbol block. `known[k]` is the index of an already detected symbol
/// or -1. `memory < 0` uses the full channel memory. Writes
/// `(n / stages) * m` row-major probabilities.
///
/// # Safety
/// `y_re`/`y_im` hold `n * N_os` values (`y_im` may be null), `known` holds
/// `n`, `apps` holds `(n / stages) * m`.
#[no_mangle]
pub unsafe extern "C" fn nlsic_fba_stage(
    ch: *const NlsicChannel,
    family: NlsicFamily,
    m: usize,
    gain: f64,
    y_re: *const f64,
    y_im: *const f64,
    n: usize,
    known: *const i32,
    stage: usize,
    stages: usize,
    memory: i32,
    apps: *mut f64,
) -> NlsicStatus {
    guard(|| {
        let ch = channel(ch)?;
        let a = alphabet(family, m, gain)?;
        let y = complex(y_re, y_im, n * ch.n_os(), "y")?;
        let known = known_symbols(known, n, m)?;
        let memory = usize::try_from(memory).ok();
        let aux = AuxChannel::new(ch, &a, memory, OutsidePolicy::Zero)?;
        if stages == 0 {
            return Err(invalid("stages must be positive"));
        }
        let result = run_fba_stage(&y, &known, stage, stages, &aux, FbaOptions::default())?;
        write_apps(&result, slice_mut(apps, (n / stages) * m, "apps")?)
    })
}

/// Rate estimate `m + mean log2 Q(true symbol)` clamped to `[0, m]` bits.
///
/// # Safety
/// `apps` holds `rows * m` values, `truth` holds `rows`.
#[no_mangle]
pub unsafe extern "C" fn nlsic_estimate_rate(
    apps: *const f64,
    rows: usize,
    m: usize,
    truth: *const u32,
    rate: *mut f64,
) -> NlsicStatus {
    guard(|| {
        if rate.is_null() {
            return Err(null("rate"));
        }
        if m < 2 || !m.is_power_of_two() {
            return Err(invalid(format!("alphabet size {m} is not a power of two")));
        }
        let q = slice(apps, rows * m, "apps")?;
        let truth: Vec<usize> = slice(truth, rows, "truth")?.iter().map(|&v| v as usize).collect();
        if truth.iter().any(|&v| v >= m) {
            return Err(invalid("true symbol outside the alphabet"));
        }
        let apps = AppMatrix::from_weights(m, q.to_vec())?;
        *rate = estimate_rate(&apps, &truth, m.trailing_zeros())?;
        Ok(())
    })
}

/// Loads a trained network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nlsic_model_load(path: *const c_char, out: *mut *mut NlsicModel) -> NlsicStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let ck = load_checkpoint(path)?;
        *out = Box::into_raw(Box::new(NlsicModel(ck.equalizer)));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`nlsic_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlsic_model_free(model: *mut NlsicModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of SIC stages of a model, or 0 for null.
///
/// # Safety
/// `model` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn nlsic_model_stages(model: *const NlsicModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.stages())
}

/// Network APPs of the stage-`stage` symbols, laid out as in
/// [`nlsic_fba_stage`]; `stages` must equal the model's stage count.
///
/// # Safety
/// Same buffer requirements as [`nlsic_fba_stage`] with `N_os` taken from
/// the model.
#[no_mangle]
pub unsafe extern "C" fn nlsic_model_stage_apps(
    model: *const NlsicModel,
    y_re: *const f64,
    y_im: *const f64,
    n: usize,
    known: *const i32,
    stage: usize,
    stages: usize,
    apps: *mut f64,
) -> NlsicStatus {
    guard(|| {
        let eq = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let m = eq.alphabet.size();
        let y = complex(y_re, y_im, n * eq.n_os, "y")?;
        let known = known_symbols(known, n, m)?;
        let input = StageInput { y: &y, known: &known, stage, stages, seed: 0 };
        let result = eq.stage_apps(&input)?;
        write_apps(&result, slice_mut(apps, (n / stages.max(1)) * m, "apps")?)
    })
}
