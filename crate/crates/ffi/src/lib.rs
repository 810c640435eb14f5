//! C ABI for funcause.
//!
//! Datasets and effect estimates are opaque handles created by `fc_*`
//! constructors and released with the matching `*_free`. Every fallible call
//! returns an [`FcStatus`]; on failure, `fc_last_error_message` returns a
//! description that stays valid until the next failing call on the same
//! thread. Panics are caught at the boundary and reported as
//! `FC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use funcause::estimators::{estimate, EstimateOptions, Estimator};
use funcause::fdata::{load_dataset, save_dataset, Curve, Dataset, DatasetFormat, Grid, ObservationalSample};
use funcause::inference::{effect_ci, welch_t_test, Regime};
use funcause::simgen::{generate, Scenario, ScenarioConfig};
use funcause::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Schema = 4,
    Domain = 5,
    Numerical = 6,
    NotBinary = 7,
    Panic = 8,
}

/// Regime of a confidence interval for the effect norm.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcRegime {
    NonzeroNorm = 0,
    ZeroNorm = 1,
}

/// Opaque dataset handle.
pub struct FcDataset {
    inner: Dataset,
}

/// Opaque effect estimate handle.
pub struct FcEffect {
    delta: Vec<f64>,
    grid: Vec<f64>,
    norm: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::Io(_) => FcStatus::Io,
        Error::Schema { .. } | Error::Csv(_) | Error::Json(_) => FcStatus::Schema,
        Error::Config(_) | Error::LengthMismatch { .. } | Error::Weight(_) => FcStatus::InvalidArgument,
        Error::NotBinary | Error::ArmEmpty { .. } => FcStatus::NotBinary,
        Error::Numerical(_) | Error::NonFinite { .. } => FcStatus::Numerical,
        _ => FcStatus::Domain,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (FcStatus, String)>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            FcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (FcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FcStatus, String) {
    (FcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (FcStatus, String) {
    (FcStatus::InvalidArgument, msg.into())
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (FcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (FcStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (FcStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn format_for(path: &str) -> DatasetFormat {
    DatasetFormat::from_path(Path::new(path))
}

/// Message of the last failure on this thread, or null if none.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset from a CSV file (or JSON, by extension).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_load(path: *const c_char, out: *mut *mut FcDataset) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = c_str(path, "path")?;
        let ds = load_dataset(path, format_for(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FcDataset { inner: ds }));
        Ok(())
    })
}

/// Writes a dataset to a CSV file (or JSON, by extension).
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_save(ds: *const FcDataset, path: *const c_char) -> FcStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let path = c_str(path, "path")?;
        save_dataset(&ds.inner, path, format_for(path)).map_err(lib_err)
    })
}

/// Builds a dataset from row-major arrays: `outcomes` is `n × t` on a
/// uniform grid over [0, 1], `covariates` is `n × d` (may be null when
/// `d == 0`). Sample ids are `0..n`.
///
/// # Safety
/// Each pointer must reference at least the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_from_arrays(
    n: usize,
    t: usize,
    d: usize,
    treatments: *const f64,
    covariates: *const f64,
    outcomes: *const f64,
    out: *mut *mut FcDataset,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let size = n.checked_mul(t).ok_or_else(|| invalid("n * t overflows"))?;
        let csize = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let x = slice(treatments, n, "treatments")?;
        let v = slice(covariates, csize, "covariates")?;
        let y = slice(outcomes, size, "outcomes")?;
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let grid = Grid::uniform(t).map_err(lib_err)?;
        let samples = (0..n)
            .map(|i| {
                Ok(ObservationalSample {
                    id: i.to_string(),
                    treatment: x[i],
                    covariates: v[i * d..(i + 1) * d].to_vec(),
                    covariate_curve: None,
                    outcome: Curve::new(grid.clone(), y[i * t..(i + 1) * t].to_vec())?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()
            .map_err(lib_err)?;
        let ds = Dataset::new(samples).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FcDataset { inner: ds }));
        Ok(())
    })
}

/// Simulates a dataset from a named scenario with default parameters.
///
/// # Safety
/// `scenario` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_simulate(
    scenario: *const c_char,
    n: usize,
    t: usize,
    seed: u64,
    replicate: u64,
    out: *mut *mut FcDataset,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let scenario: Scenario = c_str(scenario, "scenario")?
            .parse()
            .map_err(|e: Error| invalid(e.to_string()))?;
        let cfg = ScenarioConfig {
            scenario,
            n,
            t,
            seed,
            replicate,
            ..ScenarioConfig::default()
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        let (ds, _) = generate(&cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FcDataset { inner: ds }));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_len(ds: *const FcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of outcome grid points, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_grid_len(ds: *const FcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.outcome_grid().len())
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_free(ds: *mut FcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Estimates the dynamic treatment effect with a named estimator
/// (`ipw`, `dr`, `frechet-euclid`, `frechet-fr`, `kernel`,
/// `operator-kernel`, `srvf-operator-kernel`, `iterative-srvf`).
/// `lambda > 0` fixes the ridge penalty; otherwise it is tuned on a holdout.
///
/// # Safety
/// `ds` must be a live handle, `estimator` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fc_estimate(
    ds: *const FcDataset,
    estimator: *const c_char,
    lambda: f64,
    out: *mut *mut FcEffect,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let est: Estimator = c_str(estimator, "estimator")?
            .parse()
            .map_err(|e: Error| invalid(e.to_string()))?;
        let opts = EstimateOptions {
            lambda: (lambda > 0.0).then_some(lambda),
            ..EstimateOptions::default()
        };
        let res = estimate(&ds.inner, est, &opts).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FcEffect {
            grid: res.effect.delta.grid().points().to_vec(),
            delta: res.effect.delta.into_values(),
            norm: res.effect.scalar_norm,
        }));
        Ok(())
    })
}

/// Number of grid points of the effect curve, or 0 for a null handle.
///
/// # Safety
/// `eff` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_effect_len(eff: *const FcEffect) -> usize {
    eff.as_ref().map_or(0, |e| e.delta.len())
}

/// Scalar effect under the estimator's metric, NaN for a null handle.
///
/// # Safety
/// `eff` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_effect_norm(eff: *const FcEffect) -> f64 {
    eff.as_ref().map_or(f64::NAN, |e| e.norm)
}

/// Copies the effect curve Δ(t) into `buf`, which must hold `len` doubles
/// with `len == fc_effect_len(eff)`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fc_effect_delta(eff: *const FcEffect, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| {
        let eff = eff.as_ref().ok_or_else(|| null("eff"))?;
        copy_out(&eff.delta, buf, len)
    })
}

/// Copies the grid points of the effect curve into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fc_effect_grid(eff: *const FcEffect, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| {
        let eff = eff.as_ref().ok_or_else(|| null("eff"))?;
        copy_out(&eff.grid, buf, len)
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (FcStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len != src.len() {
        return Err(invalid(format!("buffer holds {len} values, effect has {}", src.len())));
    }
    std::slice::from_raw_parts_mut(buf, len).copy_from_slice(src);
    Ok(())
}

/// Confidence interval at `level` for the Euclidean norm of the effect
/// curve of `eff`, using the treatment arms of `ds`.
///
/// # Safety
/// Handles must be live and the output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn fc_effect_ci(
    ds: *const FcDataset,
    eff: *const FcEffect,
    level: f64,
    lower: *mut f64,
    upper: *mut f64,
    regime: *mut FcRegime,
) -> FcStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let eff = eff.as_ref().ok_or_else(|| null("eff"))?;
        let (lo, hi, rg) = (out_ptr(lower, "lower")?, out_ptr(upper, "upper")?, out_ptr(regime, "regime")?);
        let delta = Curve::new(ds.inner.outcome_grid().clone(), eff.delta.clone()).map_err(lib_err)?;
        let ci = effect_ci(&ds.inner, &delta, level).map_err(lib_err)?;
        *lo = ci.lower;
        *hi = ci.upper;
        *rg = match ci.regime {
            Regime::NonzeroNorm => FcRegime::NonzeroNorm,
            Regime::ZeroNorm => FcRegime::ZeroNorm,
        };
        Ok(())
    })
}

/// Releases an effect estimate. Null is ignored.
///
/// # Safety
/// `eff` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_effect_free(eff: *mut FcEffect) {
    if !eff.is_null() {
        drop(Box::from_raw(eff));
    }
}

/// Welch two-sample t-test with a two-sided p-value.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn fc_welch_t_test(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    t: *mut f64,
    df: *mut f64,
    p: *mut f64,
) -> FcStatus {
    guard(|| {
        let (a, b) = (slice(a, na, "a")?, slice(b, nb, "b")?);
        let (t, df, p) = (out_ptr(t, "t")?, out_ptr(df, "df")?, out_ptr(p, "p")?);
        let w = welch_t_test(a, b).map_err(lib_err)?;
        *t = w.t;
        *df = w.df;
        *p = w.p;
        Ok(())
    })
}

/// Treatment of sample `i` (diagnostic accessor), NaN when out of range.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_treatment(ds: *const FcDataset, i: usize) -> f64 {
    ds.as_ref()
        .and_then(|d| d.inner.samples().get(i))
        .map_or(f64::NAN, |s| s.treatment)
}

/// Nonzero when every treatment is 0 or 1.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_is_binary(ds: *const FcDataset) -> c_int {
    ds.as_ref().map_or(0, |d| d.inner.is_binary() as c_int)
}
