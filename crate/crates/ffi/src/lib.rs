//! C ABI over `runoff`.
//!
//! Every fallible function returns an [`RfStatus`]; on failure a message
//! is available from [`rf_last_error`] on the calling thread until the next
//! failing call. Models are opaque handles released with [`rf_model_free`].
//! Pointers to arrays must be valid for the stated length; output pointers
//! are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use runoff::data::{simulate_reservoir, NormalizationStats};
use runoff::metrics::{fhv, flv, kge, nse, MetricError};
use runoff::models::Model;
use runoff::tensor::Tensor;
use runoff::train::{load_checkpoint, TrainError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// The metric has no value for this input, e.g. constant observations.
    Undefined = 5,
    Panic = 6,
}

/// Trained model with its input normalization.
pub struct RfModel {
    model: Model,
    stats: NormalizationStats,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RfKge {
    pub kge: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RfStatus, String);

type Outcome = Result<(), Failure>;

fn invalid(message: impl Into<String>) -> Failure {
    Failure(RfStatus::InvalidArgument, message.into())
}

fn metric_failure(e: MetricError) -> Failure {
    match e {
        MetricError::Undefined(_) => Failure(RfStatus::Undefined, e.to_string()),
        _ => invalid(e.to_string()),
    }
}

fn guard(f: impl FnOnce() -> Outcome) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RfStatus::Panic
        }
    }
}

unsafe fn array<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure(RfStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn array_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure(RfStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(RfStatus::NullPointer, format!("{what} is null")))
}

/// Message of the calling thread's last failure, or null. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, nul-terminated.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_checkpoint_load(path: *const c_char, out: *mut *mut RfModel) -> RfStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure(RfStatus::NullPointer, "path is null".into()));
        }
        let out = out_ref(out, "out")?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let ckpt = load_checkpoint(Path::new(path)).map_err(|e| {
            let status = match e {
                TrainError::Io(_) => RfStatus::Io,
                _ => RfStatus::Format,
            };
            Failure(status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(RfModel { model: ckpt.model, stats: ckpt.stats }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`rf_checkpoint_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_model_free(model: *mut RfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input columns per day, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rf_model_input_dim(model: *const RfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.spec().input_dim)
}

/// Lookback window in days, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rf_model_seq_len(model: *const RfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.spec().seq_len)
}

/// Discharge in mm/day on the last day of each window.
///
/// `x` is row-major `[batch, seq_len, input_dim]` in physical units, forcing
/// columns then static attributes, as in training; `NaN` marks a missing
/// value. `out` receives `batch` values.
///
/// # Safety
/// `model` must be a live handle, `x` valid for `batch * seq_len * input_dim`
/// reads and `out` for `batch` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_model_predict(
    model: *const RfModel,
    x: *const f64,
    batch: usize,
    seq_len: usize,
    input_dim: usize,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| Failure(RfStatus::NullPointer, "model is null".into()))?;
        let spec = m.model.spec();
        if seq_len != spec.seq_len || input_dim != spec.input_dim {
            return Err(invalid(format!(
                "window is [{seq_len}, {input_dim}], model expects seq_len {} and input_dim {}",
                spec.seq_len, spec.input_dim
            )));
        }
        if batch == 0 {
            return Err(invalid("batch must be >= 1"));
        }
        let n = batch
            .checked_mul(seq_len)
            .and_then(|v| v.checked_mul(input_dim))
            .ok_or_else(|| invalid("window size overflows"))?;
        let raw = array(x, n, "x")?;
        let out = array_mut(out, batch, "out")?;
        let z: Vec<f64> = raw
            .chunks(input_dim)
            .flat_map(|row| {
                row.iter().zip(&m.stats.inputs).map(|(&v, s)| if v.is_nan() { 0.0 } else { s.standardize(v) })
            })
            .collect();
        let t = Tensor::from_vec(&[batch, seq_len, input_dim], z).map_err(|e| invalid(e.to_string()))?;
        let y = m.model.predict_last(&t).map_err(|e| invalid(e.to_string()))?;
        for (o, v) in out.iter_mut().zip(y) {
            *o = m.stats.discharge.destandardize(v);
        }
        Ok(())
    })
}

/// Nash-Sutcliffe efficiency over the days with observed (non-NaN) `obs`.
///
/// # Safety
/// `obs` and `sim` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rf_nse(obs: *const f64, sim: *const f64, n: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        let v = nse(array(obs, n, "obs")?, array(sim, n, "sim")?).map_err(metric_failure)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Kling-Gupta efficiency and its components.
///
/// # Safety
/// `obs` and `sim` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rf_kge(obs: *const f64, sim: *const f64, n: usize, out: *mut RfKge) -> RfStatus {
    guard(|| {
        let k = kge(array(obs, n, "obs")?, array(sim, n, "sim")?).map_err(metric_failure)?;
        *out_ref(out, "out")? = RfKge { kge: k.kge, r: k.r, alpha: k.alpha, beta: k.beta };
        Ok(())
    })
}

/// Percent bias of the top `h_frac` of the flow-duration curve.
///
/// # Safety
/// `obs` and `sim` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rf_fhv(obs: *const f64, sim: *const f64, n: usize, h_frac: f64, out: *mut f64) -> RfStatus {
    guard(|| {
        let v = fhv(array(obs, n, "obs")?, array(sim, n, "sim")?, h_frac).map_err(metric_failure)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Percent bias of the log low-flow segment, the bottom `l_frac` of the
/// flow-duration curve; flows are clamped at `floor` first.
///
/// # Safety
/// `obs` and `sim` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn rf_flv(
    obs: *const f64,
    sim: *const f64,
    n: usize,
    l_frac: f64,
    floor: f64,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        let v = flv(array(obs, n, "obs")?, array(sim, n, "sim")?, l_frac, floor).map_err(metric_failure)?;
        *out_ref(out, "out")? = v;
        Ok(())
    })
}

/// Runs the linear reservoir over `n` days of precipitation. `discharge`
/// receives `n` values; `storage`, if not null, receives `n + 1`.
///
/// # Safety
/// `precip` must be valid for `n` reads, `discharge` for `n` writes and a
/// non-null `storage` for `n + 1` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_simulate_reservoir(
    precip: *const f64,
    n: usize,
    k: f64,
    et_rate: f64,
    s0: f64,
    discharge: *mut f64,
    storage: *mut f64,
) -> RfStatus {
    guard(|| {
        let p = array(precip, n, "precip")?;
        let q = array_mut(discharge, n, "discharge")?;
        let trace = simulate_reservoir(p, k, et_rate, s0).map_err(|e| invalid(e.to_string()))?;
        q.copy_from_slice(&trace.discharge);
        if !storage.is_null() {
            array_mut(storage, n + 1, "storage")?.copy_from_slice(&trace.storage);
        }
        Ok(())
    })
}
