//! C ABI for `lattice-sar`.
//!
//! Every function returns an [`LsStatus`]; on failure the message is available
//! from [`ls_last_error`] on the same thread. Handles are opaque and owned by
//! the caller, who releases them with the matching `*_free` function. No panic
//! crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lattice_sar::estimator::{fit_model, fitted_values, EstimatorConfig, TwoStepFit, WeightModel};
use lattice_sar::gridcsv::read_grid_csv_path;
use lattice_sar::lattice::Lattice;
use lattice_sar::metrics::{mae, rmse, support_stats};
use lattice_sar::mlbench::{ml_fit, MlOptions};
use lattice_sar::resample::{replication_counts, SamplingMode};
use lattice_sar::simulate::{base_weights, simulate_dataset, SarDataset, WeightScheme};
use lattice_sar::Error;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Data = 3,
    Numerical = 4,
    Convergence = 5,
    Panic = 6,
}

/// Simulated or loaded lattice dataset.
pub struct LsDataset {
    inner: SarDataset,
}

/// Result of a two-step lasso fit.
pub struct LsFit {
    inner: TwoStepFit,
}

/// Estimator settings. Obtain defaults from [`ls_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsFitOptions {
    /// Template size: 8, 24, 48, ...
    pub m: usize,
    /// First-step replications; 0 selects the largest admissible count.
    pub r1: usize,
    /// Second-step replications; 0 selects the default.
    pub r2: usize,
    pub gamma: f64,
    pub folds: usize,
    pub seed: u64,
    /// Nonzero to fit an intercept.
    pub intercept: i32,
}

/// Maximum-likelihood estimates; standard errors are NaN when unavailable.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsMlResult {
    pub c_hat: f64,
    pub intercept: f64,
    pub sigma2_hat: f64,
    pub loglik: f64,
    pub se_c: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

/// Support recovery of a weight estimate; rates are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LsWeightEval {
    pub mae: f64,
    pub specificity: f64,
    pub sensitivity: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::Data { .. } | Error::Io(_) => LsStatus::Data,
        Error::Numerical { .. } | Error::DegenerateInput(_) => LsStatus::Numerical,
        Error::Convergence { .. } => LsStatus::Convergence,
        _ => LsStatus::InvalidArgument,
    }
}

struct Failure(LsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(LsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            LsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_slice(dst: *mut f64, len: usize, src: &[f64], what: &str) -> Result<(), Failure> {
    if len < src.len() {
        return Err(invalid(format!("{what} buffer holds {len} values, {} needed", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Simulates a `side x side` dataset from the named scheme (`queen`, `rook`
/// or `ese`) with `k` standard normal regressors and all coefficients one.
///
/// # Safety
/// `scheme` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_simulate(
    scheme: *const c_char,
    c: f64,
    side: usize,
    k: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut LsDataset,
) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let scheme = WeightScheme::from_name(str_arg(scheme, "scheme")?, c)?;
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        let lattice = Lattice::new(side, side)?;
        let ds = simulate_dataset(&lattice, &scheme, &vec![1.0; k], sigma, &mut ChaCha8Rng::seed_from_u64(seed))?;
        boxed(out, LsDataset { inner: ds });
        Ok(())
    })
}

/// Dataset from row-major arrays: `y` has `nrows * ncols` values and `x` has
/// `nrows * ncols` rows of `k` regressors, sites ordered row by row.
///
/// # Safety
/// `y` and `x` must point to arrays of the stated sizes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_new(
    nrows: usize,
    ncols: usize,
    k: usize,
    y: *const f64,
    x: *const f64,
    out: *mut *mut LsDataset,
) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let lattice = Lattice::new(nrows, ncols)?;
        let n = lattice.n();
        let y = slice_arg(y, n, "y")?;
        let x = slice_arg(x, n * k, "x")?;
        if y.iter().chain(x).any(|v| !v.is_finite()) {
            return Err(Failure(LsStatus::Data, "y and x must be finite".into()));
        }
        let ds = SarDataset::new(lattice, DVector::from_column_slice(y), DMatrix::from_row_slice(n, k, x))?;
        boxed(out, LsDataset { inner: ds });
        Ok(())
    })
}

/// Reads a grid CSV file (`row,col,y,x1..xk`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_read_csv(path: *const c_char, out: *mut *mut LsDataset) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grid = read_grid_csv_path(Path::new(str_arg(path, "path")?))?;
        boxed(out, LsDataset { inner: grid.dataset });
        Ok(())
    })
}

/// Number of sites, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_n(ds: *const LsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.lattice.n())
}

/// Number of regressors, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_k(ds: *const LsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.k())
}

/// Copies the response into `buf` (capacity `len`).
///
/// # Safety
/// `ds` must be a live handle and `buf` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_y(ds: *const LsDataset, buf: *mut f64, len: usize) -> LsStatus {
    guard(|| write_slice(buf, len, ref_arg(ds, "dataset")?.inner.y.as_slice(), "y"))
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_dataset_free(ds: *mut LsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[no_mangle]
pub extern "C" fn ls_fit_options_default() -> LsFitOptions {
    let d = EstimatorConfig::default();
    LsFitOptions {
        m: d.m,
        r1: 0,
        r2: 0,
        gamma: d.gamma,
        folds: d.folds,
        seed: d.seed,
        intercept: i32::from(d.intercept),
    }
}

fn config_of(o: &LsFitOptions, ds: &SarDataset) -> Result<EstimatorConfig, Failure> {
    let r1 = if o.r1 == 0 {
        let l = &ds.lattice;
        if l.nrows() != l.ncols() {
            return Err(invalid("r1 = 0 needs a square lattice; set r1 explicitly"));
        }
        replication_counts(l.n(), o.m)?.2
    } else {
        o.r1
    };
    Ok(EstimatorConfig {
        m: o.m,
        r1,
        r2: (o.r2 > 0).then_some(o.r2),
        gamma: o.gamma,
        folds: o.folds,
        seed: o.seed,
        intercept: o.intercept != 0,
        sampling: SamplingMode::WithoutReplacement,
        ..EstimatorConfig::default()
    })
}

unsafe fn run_fit(ds: *const LsDataset, options: *const LsFitOptions, model: WeightModel, out: *mut *mut LsFit) -> Result<(), Failure> {
    let out = out_arg(out, "out")?;
    let ds = &ref_arg(ds, "dataset")?.inner;
    let options = options.as_ref().copied().unwrap_or_else(|| ls_fit_options_default());
    let fit = fit_model(ds, &model, &config_of(&options, ds)?)?;
    boxed(out, LsFit { inner: fit });
    Ok(())
}

/// Two-step adaptive lasso with estimated weights. `options` may be null for defaults.
///
/// # Safety
/// Pointers must be null (where allowed) or valid.
#[no_mangle]
pub unsafe extern "C" fn ls_two_step_fit(ds: *const LsDataset, options: *const LsFitOptions, out: *mut *mut LsFit) -> LsStatus {
    guard(|| run_fit(ds, options, WeightModel::Estimated, out))
}

/// Two-step lasso with a fixed contiguity pattern (`queen`, `rook` or `ese`);
/// only the strength is estimated.
///
/// # Safety
/// Pointers must be null (where allowed) or valid; `scheme` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ls_fixed_fit(
    ds: *const LsDataset,
    scheme: *const c_char,
    options: *const LsFitOptions,
    out: *mut *mut LsFit,
) -> LsStatus {
    guard(|| {
        let scheme = WeightScheme::from_name(str_arg(scheme, "scheme")?, 0.5)?;
        run_fit(ds, options, WeightModel::Fixed(scheme), out)
    })
}

/// Template size `m` of the fit, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_m(fit: *const LsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.w_hat.len())
}

/// Number of regression coefficients, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_k(fit: *const LsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.beta_hat.len())
}

/// Copies the `m` template weights into `buf`.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_weights(fit: *const LsFit, buf: *mut f64, len: usize) -> LsStatus {
    guard(|| write_slice(buf, len, &ref_arg(fit, "fit")?.inner.w_hat, "weights"))
}

/// Copies the `k` regression coefficients into `buf`.
///
/// # Safety
/// `fit` must be a live handle and `buf` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_beta(fit: *const LsFit, buf: *mut f64, len: usize) -> LsStatus {
    guard(|| write_slice(buf, len, &ref_arg(fit, "fit")?.inner.beta_hat, "beta"))
}

/// Scalar estimates: dependence strength, intercept and the selected penalties.
/// Any output pointer may be null.
///
/// # Safety
/// `fit` must be a live handle; outputs null or valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_scalars(
    fit: *const LsFit,
    c_hat: *mut f64,
    intercept: *mut f64,
    lambda1: *mut f64,
    lambda2: *mut f64,
) -> LsStatus {
    guard(|| {
        let f = &ref_arg(fit, "fit")?.inner;
        for (p, v) in [(c_hat, f.c_hat), (intercept, f.intercept), (lambda1, f.lambda1), (lambda2, f.lambda2)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// In-sample RMSE of the fit over sites with a complete prediction window.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_rmse(fit: *const LsFit, ds: *const LsDataset, out: *mut f64) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let fit = &ref_arg(fit, "fit")?.inner;
        let ds = &ref_arg(ds, "dataset")?.inner;
        *out = fitted_values(fit, ds)?.rmse(&ds.y)?;
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_fit_free(fit: *mut LsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Maximum-likelihood fit with the row-standardised contiguity matrix of the
/// named scheme. Coefficients go to `beta` (capacity `beta_len`, at least k).
///
/// # Safety
/// Handles and outputs must be valid; `scheme` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ls_ml_fit(
    ds: *const LsDataset,
    scheme: *const c_char,
    intercept: i32,
    out: *mut LsMlResult,
    beta: *mut f64,
    beta_len: usize,
) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = &ref_arg(ds, "dataset")?.inner;
        let scheme = WeightScheme::from_name(str_arg(scheme, "scheme")?, 0.5)?;
        if beta_len < ds.k() {
            return Err(invalid(format!("beta buffer holds {beta_len} values, {} needed", ds.k())));
        }
        let base = base_weights(&ds.lattice, &scheme)?;
        let fit = ml_fit(ds, &base, &MlOptions { intercept: intercept != 0, ..MlOptions::default() })?;
        write_slice(beta, beta_len, &fit.beta_hat, "beta")?;
        *out = LsMlResult {
            c_hat: fit.c_hat,
            intercept: fit.intercept,
            sigma2_hat: fit.sigma2_hat,
            loglik: fit.loglik,
            se_c: fit.se_c.unwrap_or(f64::NAN),
            c_lower: fit.interval.0,
            c_upper: fit.interval.1,
        };
        Ok(())
    })
}

/// Mean absolute difference of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_mae(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> LsStatus {
    guard(|| {
        *out_arg(out, "out")? = mae(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?)?;
        Ok(())
    })
}

/// Root mean squared difference of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_rmse(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> LsStatus {
    guard(|| {
        *out_arg(out, "out")? = rmse(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?)?;
        Ok(())
    })
}

/// MAE, specificity and sensitivity of `estimate` against `truth`.
///
/// # Safety
/// `estimate` and `truth` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ls_support_stats(
    estimate: *const f64,
    truth: *const f64,
    len: usize,
    zero_tol: f64,
    out: *mut LsWeightEval,
) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if !(zero_tol >= 0.0) {
            return Err(invalid("zero_tol must be nonnegative"));
        }
        let e = support_stats(slice_arg(estimate, len, "estimate")?, slice_arg(truth, len, "truth")?, zero_tol)?;
        *out = LsWeightEval {
            mae: e.mae,
            specificity: e.specificity.unwrap_or(f64::NAN),
            sensitivity: e.sensitivity.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
