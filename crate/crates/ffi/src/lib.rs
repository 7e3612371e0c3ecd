//! C ABI for the `coxian` crate.
//!
//! Every fallible call returns a [`CoxianStatus`]; on failure the message is
//! available from [`coxian_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Arrays are passed as
//! pointer plus length.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coxian::estimation::{fit, FitConfig, FitData, FitResult};
use coxian::mixture::{MixtureDensity, TwoExitDensity};
use coxian::multi_exit::ExitRecord;
use coxian::{CoxianParams, Error, MixtureParams, MultiExitMixtureParams};

/// Result of a call. Values 2 to 7 mirror the library's error codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoxianStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    Numeric = 3,
    Data = 4,
    Ingest = 5,
    Config = 6,
    Io = 7,
    /// Caller buffer too small; the required length was written.
    BufferTooSmall = 8,
    Panic = 9,
}

impl From<&Error> for CoxianStatus {
    fn from(e: &Error) -> Self {
        match e.code() {
            2 => CoxianStatus::InvalidParams,
            3 => CoxianStatus::Numeric,
            4 => CoxianStatus::Data,
            5 => CoxianStatus::Ingest,
            6 => CoxianStatus::Config,
            _ => CoxianStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> CoxianStatus
where
    F: FnOnce() -> Result<(), CoxianStatus>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CoxianStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            CoxianStatus::Panic
        }
    }
}

fn fail(e: Error) -> CoxianStatus {
    let s = CoxianStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(name: &str) -> CoxianStatus {
    set_error(format!("{name} is null"));
    CoxianStatus::NullPointer
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], CoxianStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), CoxianStatus> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

/// Copies `src` into `dst[..cap]`, or reports the needed length.
///
/// # Safety
/// `dst` must be valid for `cap` writes, `len_out` for one.
unsafe fn copy_out(src: &[f64], dst: *mut f64, cap: usize, len_out: *mut usize) -> Result<(), CoxianStatus> {
    if !len_out.is_null() {
        len_out.write(src.len());
    }
    if cap < src.len() {
        set_error(format!("buffer holds {cap} values, {} needed", src.len()));
        return Err(CoxianStatus::BufferTooSmall);
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn coxian_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coxian_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Single-exit Coxian in mixture form.
pub struct CoxianMixture {
    params: MixtureParams,
    density: MixtureDensity,
}

impl CoxianMixture {
    fn new(params: MixtureParams) -> Result<Box<Self>, CoxianStatus> {
        let density = params.evaluator().map_err(fail)?;
        Ok(Box::new(Self { params, density }))
    }
}

/// Builds a model from rates `theta[n]` and absorption probabilities `pi[n]`.
///
/// # Safety
/// `theta` and `pi` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_new(
    theta: *const f64,
    pi: *const f64,
    n: usize,
    out: *mut *mut CoxianMixture,
) -> CoxianStatus {
    guard(|| {
        let theta = slice(theta, n, "theta")?.to_vec();
        let pi = slice(pi, n, "pi")?.to_vec();
        let m = CoxianMixture::new(MixtureParams::new(theta, pi).map_err(fail)?)?;
        put(out, Box::into_raw(m), "out")
    })
}

/// Builds a model from progression rates `lambda[n - 1]` and exit rates `mu[n]`.
///
/// # Safety
/// `lambda` must hold `n - 1` values and `mu` `n`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_from_rates(
    lambda: *const f64,
    mu: *const f64,
    n: usize,
    out: *mut *mut CoxianMixture,
) -> CoxianStatus {
    guard(|| {
        let lambda = slice(lambda, n.saturating_sub(1), "lambda")?.to_vec();
        let mu = slice(mu, n, "mu")?.to_vec();
        let rates = CoxianParams::new(lambda, mu).map_err(fail)?;
        let m = CoxianMixture::new(rates.to_mixture().map_err(fail)?)?;
        put(out, Box::into_raw(m), "out")
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_free(m: *mut CoxianMixture) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of phases, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_phases(m: *const CoxianMixture) -> usize {
    m.as_ref().map_or(0, |m| m.params.phases())
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_density(m: *const CoxianMixture, t: f64, out: *mut f64) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        put(out, m.density.density(t).map_err(fail)?, "out")
    })
}

/// Log density; `-inf` where the density is zero.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_log_density(m: *const CoxianMixture, t: f64, out: *mut f64) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(fail(Error::InvalidTime(t)));
        }
        put(out, m.density.ln_density(t), "out")
    })
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_survival(m: *const CoxianMixture, t: f64, out: *mut f64) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        put(out, m.density.survival(t).map_err(fail)?, "out")
    })
}

/// Density through the matrix exponential, for cross-checks.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_matrix_density(
    m: *const CoxianMixture,
    t: f64,
    out: *mut f64,
) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let rates = m.params.to_coxian().map_err(fail)?;
        put(out, coxian::matrix::density_matrix(&rates, t).map_err(fail)?, "out")
    })
}

/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_mean(m: *const CoxianMixture, out: *mut f64) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        put(out, m.params.mean(), "out")
    })
}

/// Rate form: `lambda[n - 1]` and `mu[n]`, both buffers of capacity `cap`.
///
/// # Safety
/// `m` must be a live handle; buffers must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn coxian_mixture_rates(
    m: *const CoxianMixture,
    lambda: *mut f64,
    mu: *mut f64,
    cap: usize,
) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let rates = m.params.to_coxian().map_err(fail)?;
        copy_out(rates.lambda(), lambda, cap, ptr::null_mut())?;
        copy_out(rates.mu(), mu, cap, ptr::null_mut())
    })
}

/// Two-exit Coxian in mixture form.
pub struct CoxianTwoExit {
    params: MultiExitMixtureParams,
    density: TwoExitDensity,
}

/// # Safety
/// `theta`, `pi1` and `pi2` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_two_exit_new(
    theta: *const f64,
    pi1: *const f64,
    pi2: *const f64,
    n: usize,
    out: *mut *mut CoxianTwoExit,
) -> CoxianStatus {
    guard(|| {
        let params = MultiExitMixtureParams::new(
            slice(theta, n, "theta")?.to_vec(),
            slice(pi1, n, "pi1")?.to_vec(),
            slice(pi2, n, "pi2")?.to_vec(),
        )
        .map_err(fail)?;
        let density = params.evaluator().map_err(fail)?;
        put(out, Box::into_raw(Box::new(CoxianTwoExit { params, density })), "out")
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coxian_two_exit_free(m: *mut CoxianTwoExit) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Sub-densities of leaving through exit 1 and exit 2 at `t`.
///
/// # Safety
/// `m` must be a live handle; `f1` and `f2` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_two_exit_density(
    m: *const CoxianTwoExit,
    t: f64,
    f1: *mut f64,
    f2: *mut f64,
) -> CoxianStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let (a, b) = m.density.density(t).map_err(fail)?;
        put(f1, a, "f1")?;
        put(f2, b, "f2")
    })
}

/// Probability of leaving through exit 1, or NaN for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coxian_two_exit_probability(m: *const CoxianTwoExit) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.params.exit1_probability())
}

/// Fitting options.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CoxianFitOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Nonzero to compute standard errors.
    pub std_errors: i32,
}

/// Library defaults for [`CoxianFitOptions`].
#[no_mangle]
pub extern "C" fn coxian_fit_options_default() -> CoxianFitOptions {
    let c = FitConfig::default();
    CoxianFitOptions {
        n_starts: c.n_starts,
        max_iter: c.max_iter,
        rel_tol: c.rel_tol,
        seed: c.seed,
        std_errors: c.std_errors as i32,
    }
}

impl From<&CoxianFitOptions> for FitConfig {
    fn from(o: &CoxianFitOptions) -> Self {
        FitConfig {
            n_starts: o.n_starts,
            max_iter: o.max_iter,
            rel_tol: o.rel_tol,
            seed: o.seed,
            std_errors: o.std_errors != 0,
            ..FitConfig::default()
        }
    }
}

/// Maximum-likelihood fit.
pub struct CoxianFit {
    result: FitResult,
}

/// Fits `phases` phases to durations `t[len]`. When `exited` is non-null it
/// holds one flag per record (nonzero: left through exit 1) and a two-exit
/// model is fitted. A null `options` uses the defaults.
///
/// # Safety
/// `t` (and `exited` when non-null) must hold `len` values; `options` must be
/// null or valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit(
    t: *const f64,
    exited: *const u8,
    len: usize,
    phases: usize,
    options: *const CoxianFitOptions,
    out: *mut *mut CoxianFit,
) -> CoxianStatus {
    guard(|| {
        let t = slice(t, len, "t")?;
        let data = if exited.is_null() {
            FitData::durations(t.to_vec())
        } else {
            let e = slice(exited, len, "exited")?;
            let records: Vec<ExitRecord> = t
                .iter()
                .zip(e)
                .map(|(&t, &x)| ExitRecord { t, exited: x != 0 })
                .collect();
            FitData::two_exit(&records)
        }
        .map_err(fail)?;
        let config: FitConfig = match options.as_ref() {
            Some(o) => o.into(),
            None => (&coxian_fit_options_default()).into(),
        };
        let result = fit(&data, phases, &config).map_err(fail)?;
        put(out, Box::into_raw(Box::new(CoxianFit { result })), "out")
    })
}

/// # Safety
/// `f` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_free(f: *mut CoxianFit) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Maximized log-likelihood, or NaN for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_loglik(f: *const CoxianFit) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.result.loglik)
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_bic(f: *const CoxianFit) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.result.bic)
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_aic(f: *const CoxianFit) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.result.aic)
}

/// Starts that agree with the best optimum, or 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_agreeing_starts(f: *const CoxianFit) -> usize {
    f.as_ref().map_or(0, |f| f.result.n_starts_agreeing)
}

/// Fitted rates into `out[..cap]`; `len` receives the phase count.
///
/// # Safety
/// `f` must be a live handle; `out` must hold `cap` values; `len` writable or null.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_theta(
    f: *const CoxianFit,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> CoxianStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(&f.result.theta, out, cap, len)
    })
}

/// Exit-1 absorption probabilities into `out[..cap]`.
///
/// # Safety
/// As [`coxian_fit_theta`].
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_pi(
    f: *const CoxianFit,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> CoxianStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(&f.result.pi, out, cap, len)
    })
}

/// Exit-2 absorption probabilities; all zero for a single-exit fit.
///
/// # Safety
/// As [`coxian_fit_theta`].
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_pi2(
    f: *const CoxianFit,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> CoxianStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("fit"))?;
        let zeros = vec![0.0; f.result.phases];
        copy_out(f.result.pi2.as_deref().unwrap_or(&zeros), out, cap, len)
    })
}

/// The full result as JSON; free with [`coxian_string_free`].
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coxian_fit_to_json(f: *const CoxianFit, out: *mut *mut c_char) -> CoxianStatus {
    guard(|| {
        let f = f.as_ref().ok_or_else(|| null("fit"))?;
        let json = serde_json::to_string(&f.result).map_err(|e| fail(e.into()))?;
        let s = CString::new(json).map_err(|_| fail(Error::NumericRange("NUL in JSON".into())))?;
        put(out, s.into_raw(), "out")
    })
}
