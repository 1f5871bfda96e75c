//! C ABI over the `d2d-qgnn` toolkit.
//!
//! Channels and trained models cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible call returns a
//! [`D2dStatus`]; on failure, [`d2d_last_error`] describes the most recent error on the
//! calling thread. Output buffers are caller-allocated and their lengths are checked.
//!
//! Panics never unwind into C: they are caught and reported as `D2D_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use d2d_qgnn::channel::{generate_scenario, realize_channels, sinr, sum_rate, Fading};
use d2d_qgnn::checkpoint::Checkpoint;
use d2d_qgnn::graph::{build_graph, FeatureNorm};
use d2d_qgnn::train::Model;
use d2d_qgnn::wmmse::{wmmse_allocate, WmmseConfig};
use d2d_qgnn::{ChannelRealization, Error, LinkBudget, PowerVector};
use num_complex::Complex64;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InfeasiblePower = 4,
    Format = 5,
    Io = 6,
    Runtime = 7,
    Panic = 8,
}

/// Opaque channel realization.
pub struct D2dChannel(ChannelRealization);

/// Opaque trained model with the feature normalization it was trained under.
pub struct D2dModel {
    model: Model,
    norm: FeatureNorm,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> D2dStatus {
    match err {
        Error::DimensionMismatch { .. } => D2dStatus::DimensionMismatch,
        Error::InfeasiblePower { .. } => D2dStatus::InfeasiblePower,
        Error::Format { .. } | Error::CheckpointMismatch(_) => D2dStatus::Format,
        Error::Io { .. } => D2dStatus::Io,
        Error::NonFiniteLoss { .. } => D2dStatus::Runtime,
        _ => D2dStatus::InvalidArgument,
    }
}

/// Failure inside a call: either a core error or a boundary problem.
enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> D2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => D2dStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("{what} is null"));
            D2dStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            D2dStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn write_out(dst: &mut [f64], src: &[f64]) -> Result<(), Fail> {
    if dst.len() != src.len() {
        return Err(Error::DimensionMismatch {
            expected: src.len(),
            got: dst.len(),
        }
        .into());
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message for the last failed call on this thread; empty if none. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn d2d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn d2d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draws a random deployment and its channels. `fading` is 1 for Rayleigh, 0 for none.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_channel_generate(
    pairs: usize,
    side: f64,
    d_min: f64,
    d_max: f64,
    pathloss_exponent: f64,
    sigma2: f64,
    p_max: f64,
    fading: i32,
    seed: u64,
    out: *mut *mut D2dChannel,
) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let budget = LinkBudget {
            pathloss_exponent,
            sigma2,
            alpha: Vec::new(),
            p_max,
            fading: if fading != 0 { Fading::Rayleigh } else { Fading::None },
        };
        let scenario = generate_scenario(pairs, side, d_min, d_max, seed)?;
        let ch = realize_channels(&scenario, &budget, seed)?;
        *out = Box::into_raw(Box::new(D2dChannel(ch)));
        Ok(())
    })
}

/// Builds a channel from row-major complex gains: entry `k * pairs + m` is the gain
/// from transmitter `k` to receiver `m`. `alpha` may be null for unit weights.
///
/// # Safety
/// `re` and `im` must point to `pairs * pairs` doubles, `alpha` (if non-null) to
/// `pairs` doubles, and `out` to storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_channel_from_gains(
    pairs: usize,
    re: *const f64,
    im: *const f64,
    sigma2: f64,
    alpha: *const f64,
    p_max: f64,
    out: *mut *mut D2dChannel,
) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let len = pairs
            .checked_mul(pairs)
            .ok_or(Error::InvalidArgument("pairs overflows".into()))?;
        let re = slice(re, len, "re")?;
        let im = slice(im, len, "im")?;
        let alpha = if alpha.is_null() {
            vec![1.0; pairs]
        } else {
            slice(alpha, pairs, "alpha")?.to_vec()
        };
        let gains = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let ch = ChannelRealization::new(pairs, gains, vec![sigma2; pairs], alpha, p_max)?;
        *out = Box::into_raw(Box::new(D2dChannel(ch)));
        Ok(())
    })
}

/// Number of transmitter-receiver pairs, or 0 for a null handle.
///
/// # Safety
/// `ch` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn d2d_channel_pairs(ch: *const D2dChannel) -> usize {
    ch.as_ref().map_or(0, |c| c.0.pairs())
}

/// Releases a channel handle. Null is a no-op.
///
/// # Safety
/// `ch` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_channel_free(ch: *mut D2dChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Per-pair SINR for amplitudes `p` (length `len`) into `out` (length `len`).
///
/// # Safety
/// `ch` must be a live handle; `p` and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn d2d_sinr(ch: *const D2dChannel, p: *const f64, len: usize, out: *mut f64) -> D2dStatus {
    guard(|| {
        let ch = &deref(ch, "ch")?.0;
        let p = PowerVector::new(slice(p, len, "p")?.to_vec(), ch.p_max())?;
        let gamma = sinr(ch, &p)?;
        write_out(slice_mut(out, len, "out")?, &gamma)
    })
}

/// Weighted sum rate in bps/Hz for amplitudes `p`.
///
/// # Safety
/// `ch` must be a live handle, `p` must hold `len` doubles and `out` one double.
#[no_mangle]
pub unsafe extern "C" fn d2d_sum_rate(ch: *const D2dChannel, p: *const f64, len: usize, out: *mut f64) -> D2dStatus {
    guard(|| {
        let ch = &deref(ch, "ch")?.0;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let p = PowerVector::new(slice(p, len, "p")?.to_vec(), ch.p_max())?;
        *out = sum_rate(ch, &p)?;
        Ok(())
    })
}

/// Runs WMMSE from full power. Writes amplitudes to `out_p` (length `len`) and, if
/// `out_rate` is non-null, the weighted sum rate of the returned allocation.
///
/// # Safety
/// `ch` must be a live handle, `out_p` must hold `len` doubles, and `out_rate` must be
/// null or point to one double.
#[no_mangle]
pub unsafe extern "C" fn d2d_wmmse(
    ch: *const D2dChannel,
    max_iter: usize,
    tol: f64,
    out_p: *mut f64,
    len: usize,
    out_rate: *mut f64,
) -> D2dStatus {
    guard(|| {
        let ch = &deref(ch, "ch")?.0;
        let cfg = WmmseConfig {
            max_iter,
            tol,
            ..WmmseConfig::default()
        };
        let outcome = wmmse_allocate(ch, &cfg)?;
        write_out(slice_mut(out_p, len, "out_p")?, outcome.power.as_slice())?;
        if let Some(r) = out_rate.as_mut() {
            *r = outcome.objective;
        }
        Ok(())
    })
}

/// Loads a JSON checkpoint written by `d2d-qgnn train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must point to storage for one
/// handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_model_load(path: *const c_char, out: *mut *mut D2dModel) -> D2dStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
        let ckpt = Checkpoint::read(Path::new(path))?;
        let model = D2dModel {
            model: ckpt.to_model()?,
            norm: ckpt.norm,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Number of trainable parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn d2d_model_num_params(model: *const D2dModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_params())
}

/// Power amplitudes the model assigns to `ch`. `star_seed` selects the sampled stars
/// (ignored by the classical model).
///
/// # Safety
/// `model` and `ch` must be live handles and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn d2d_model_powers(
    model: *const D2dModel,
    ch: *const D2dChannel,
    star_seed: u64,
    out: *mut f64,
    len: usize,
) -> D2dStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let ch = &deref(ch, "ch")?.0;
        let graph = build_graph(ch, &m.norm);
        let p = m.model.powers(&graph, ch.p_max(), star_seed)?;
        write_out(slice_mut(out, len, "out")?, p.as_slice())
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_model_free(model: *mut D2dModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
