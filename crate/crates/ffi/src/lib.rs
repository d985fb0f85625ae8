//! C ABI for causenet.
//!
//! Objects are opaque handles created by `cn_*_new`/`cn_*_load`/`cn_gp_fit`
//! and released with the matching `cn_*_free`. Every fallible call returns a
//! [`CnStatus`]; on failure `cn_last_error` describes the problem. Output
//! pointers are only written on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use causenet::data::{to_log_time, CompoundSeries, Condition};
use causenet::detectors::{CausalityDetector, DetectorShape, LagDetector};
use causenet::gp::{fit_noise_mle, GpModel, KernelParams};
use causenet::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnStatus {
    CnOk = 0,
    CnNullPointer = 1,
    CnInvalidArgument = 2,
    CnInputError = 3,
    CnMissingArtifact = 4,
    CnNumerical = 5,
    CnInternal = 6,
    CnPanic = 7,
}

/// Fitted Gaussian-process model.
pub struct CnGpModel {
    inner: GpModel,
}

/// Trained causality detector.
pub struct CnCausalityDetector {
    inner: CausalityDetector,
}

/// Trained lag detector.
pub struct CnLagDetector {
    inner: LagDetector,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CnStatus {
    match e {
        Error::Domain(_) | Error::Usage(_) | Error::Range(_) | Error::Config(_) => CnStatus::CnInvalidArgument,
        Error::Parse { .. } | Error::Schema(_) | Error::Format(_) | Error::Json(_) => CnStatus::CnInputError,
        Error::MissingArtifact(_) => CnStatus::CnMissingArtifact,
        Error::Numerical(_) | Error::Sampling(_) | Error::Divergence { .. } => CnStatus::CnNumerical,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CnStatus::CnMissingArtifact,
        _ => CnStatus::CnInternal,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CnStatus, String)>) -> CnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CnStatus::CnOk
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CnStatus::CnPanic
        }
    }
}

fn lib(e: Error) -> (CnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (CnStatus, String) {
    (CnStatus::CnNullPointer, format!("{name} is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], (CnStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, (CnStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (CnStatus::CnInvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    *out = value;
}

/// Message for the most recent failure on this thread; empty after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn cn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `ln(1 + hours)`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn cn_log_time(hours: f64, out: *mut f64) -> CnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, to_log_time(hours).map_err(lib)?);
        Ok(())
    })
}

/// Fits a GP to `n` observations in log time. A `noise_variance` of zero or
/// less requests the maximum-likelihood noise estimate.
///
/// # Safety
/// `log_times` and `values` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_gp_fit(
    log_times: *const f64,
    values: *const f64,
    n: usize,
    signal_variance: f64,
    length_scale: f64,
    noise_variance: f64,
    out: *mut *mut CnGpModel,
) -> CnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = slice(log_times, n, "log_times")?;
        let v = slice(values, n, "values")?;
        let series = CompoundSeries {
            compound_id: "ffi".into(),
            condition: Condition::Treated,
            observations: t.iter().copied().zip(v.iter().copied()).collect(),
        };
        let params = if noise_variance > 0.0 {
            KernelParams::new(signal_variance, length_scale, noise_variance).map_err(lib)?
        } else {
            fit_noise_mle(&series, signal_variance, length_scale).map_err(lib)?
        };
        let inner = GpModel::fit(&series, params).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(CnGpModel { inner })));
        Ok(())
    })
}

/// Posterior mean and latent variance at log time `t`.
///
/// # Safety
/// `model` must come from `cn_gp_fit`; `mean` and `variance` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_gp_predict(model: *const CnGpModel, t: f64, mean: *mut f64, variance: *mut f64) -> CnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if mean.is_null() || variance.is_null() {
            return Err(null("output"));
        }
        let (mu, var) = m.inner.predict(t);
        write_out(mean, mu);
        write_out(variance, var);
        Ok(())
    })
}

/// Fitted noise variance.
///
/// # Safety
/// `model` must come from `cn_gp_fit`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_gp_noise_variance(model: *const CnGpModel, out: *mut f64) -> CnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, m.inner.params.noise_variance);
        Ok(())
    })
}

/// Log marginal likelihood of the centered training data.
///
/// # Safety
/// `model` must come from `cn_gp_fit`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_gp_log_marginal_likelihood(model: *const CnGpModel, out: *mut f64) -> CnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, m.inner.log_marginal_likelihood());
        Ok(())
    })
}

/// Releases a GP model. Null is ignored.
///
/// # Safety
/// `model` must come from `cn_gp_fit` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_gp_free(model: *mut CnGpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

trait Detector: Sized {
    fn new(shape: DetectorShape, seed: u64) -> causenet::Result<Self>;
    fn load(path: &str) -> causenet::Result<Self>;
    fn window(&self) -> usize;
    fn predict(&self, a: &[f64], b: &[f64]) -> causenet::Result<f64>;
}

impl Detector for CnCausalityDetector {
    fn new(shape: DetectorShape, seed: u64) -> causenet::Result<Self> {
        CausalityDetector::new(shape, seed).map(|inner| Self { inner })
    }
    fn load(path: &str) -> causenet::Result<Self> {
        CausalityDetector::load(path).map(|inner| Self { inner })
    }
    fn window(&self) -> usize {
        self.inner.shape.window
    }
    fn predict(&self, a: &[f64], b: &[f64]) -> causenet::Result<f64> {
        self.inner.predict(a, b)
    }
}

impl Detector for CnLagDetector {
    fn new(shape: DetectorShape, seed: u64) -> causenet::Result<Self> {
        LagDetector::new(shape, seed).map(|inner| Self { inner })
    }
    fn load(path: &str) -> causenet::Result<Self> {
        LagDetector::load(path).map(|inner| Self { inner })
    }
    fn window(&self) -> usize {
        self.inner.shape.window
    }
    fn predict(&self, a: &[f64], b: &[f64]) -> causenet::Result<f64> {
        self.inner.predict(a, b)
    }
}

unsafe fn detector_new<D: Detector>(
    window: usize,
    conv_window: usize,
    channels: usize,
    seed: u64,
    out: *mut *mut D,
) -> CnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let shape = DetectorShape {
            window,
            conv_window,
            channels,
        };
        write_out(out, Box::into_raw(Box::new(D::new(shape, seed).map_err(lib)?)));
        Ok(())
    })
}

unsafe fn detector_load<D: Detector>(path: *const c_char, out: *mut *mut D) -> CnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(path)?;
        if !std::path::Path::new(&p).exists() {
            return Err((CnStatus::CnMissingArtifact, format!("missing artifact: {p}")));
        }
        write_out(out, Box::into_raw(Box::new(D::load(&p).map_err(lib)?)));
        Ok(())
    })
}

unsafe fn detector_predict<D: Detector>(detector: *const D, a: *const f64, b: *const f64, len: usize, out: *mut f64) -> CnStatus {
    guard(|| {
        let d = detector.as_ref().ok_or_else(|| null("detector"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let a = slice(a, len, "a")?;
        let b = slice(b, len, "b")?;
        write_out(out, d.predict(a, b).map_err(lib)?);
        Ok(())
    })
}

/// Causality detector with freshly initialized weights.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cn_causality_new(
    window: usize,
    conv_window: usize,
    channels: usize,
    seed: u64,
    out: *mut *mut CnCausalityDetector,
) -> CnStatus {
    detector_new(window, conv_window, channels, seed, out)
}

/// Loads a causality detector saved as model JSON.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_causality_load(path: *const c_char, out: *mut *mut CnCausalityDetector) -> CnStatus {
    detector_load(path, out)
}

/// Input window length; 0 for a null handle.
///
/// # Safety
/// `detector` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_causality_window(detector: *const CnCausalityDetector) -> usize {
    detector.as_ref().map_or(0, Detector::window)
}

/// Probability that `a` and `b` are causally related. Symmetric in its inputs.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_causality_predict(
    detector: *const CnCausalityDetector,
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> CnStatus {
    detector_predict(detector, a, b, len, out)
}

/// Releases a causality detector. Null is ignored.
///
/// # Safety
/// `detector` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_causality_free(detector: *mut CnCausalityDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Lag detector with freshly initialized weights.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cn_lag_new(
    window: usize,
    conv_window: usize,
    channels: usize,
    seed: u64,
    out: *mut *mut CnLagDetector,
) -> CnStatus {
    detector_new(window, conv_window, channels, seed, out)
}

/// Loads a lag detector saved as model JSON.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_lag_load(path: *const c_char, out: *mut *mut CnLagDetector) -> CnStatus {
    detector_load(path, out)
}

/// Input window length; 0 for a null handle.
///
/// # Safety
/// `detector` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_lag_window(detector: *const CnLagDetector) -> usize {
    detector.as_ref().map_or(0, Detector::window)
}

/// Signed lag score: positive when `a` leads `b`. Antisymmetric in its inputs.
///
/// # Safety
/// `a` and `b` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cn_lag_predict(
    detector: *const CnLagDetector,
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> CnStatus {
    detector_predict(detector, a, b, len, out)
}

/// Releases a lag detector. Null is ignored.
///
/// # Safety
/// `detector` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cn_lag_free(detector: *mut CnLagDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}
