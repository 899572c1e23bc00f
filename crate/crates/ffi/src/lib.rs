//! C interface. Objects are opaque handles created by `*_new`/`ican_fit`
//! style constructors and released with the matching `*_free`. Every
//! function returns an `IcanStatus`; on failure a message is kept per
//! thread and can be copied out with `ican_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ican_core::data::{generate, Dataset, GeneratorSpec, PairedSample};
use ican_core::dependence::{hsic_pvalue, PValueMethod};
use ican_core::ican::{run_ican, Decision, IcanConfig as CoreConfig, IcanResult};
use ican_core::moments::solve_order;
use ican_core::report::FitReport;
use ican_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    IoError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcanDecision {
    XToY = 0,
    YToX = 1,
    Confounder = 2,
    NoCanFit = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcanDataset {
    Section3 = 0,
    Dataset1 = 1,
    Dataset2 = 2,
    Dataset3 = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcanPValueMethod {
    Gamma = 0,
    Permutation = 1,
}

/// Plain-data run configuration; start from `ican_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcanConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    pub eval_budget: usize,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub seed: u64,
}

/// Opaque paired sample.
pub struct IcanSample {
    inner: PairedSample,
}

/// Opaque fit result.
pub struct IcanFit {
    result: IcanResult,
    report: FitReport,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> IcanStatus {
    match e {
        Error::InvalidParameter(_) | Error::LengthMismatch { .. } => IcanStatus::InvalidArgument,
        Error::NotPositiveDefinite { .. }
        | Error::SingularSystem(_)
        | Error::IllPosed(_)
        | Error::Quadrature { .. } => IcanStatus::NumericalError,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => IcanStatus::IoError,
        _ => IcanStatus::DataError,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (IcanStatus, String)>) -> IcanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IcanStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IcanStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (IcanStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (IcanStatus, String) {
    (IcanStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `ptr` must be null or point to `n` readable doubles.
unsafe fn slice<'a>(ptr: *const f64, n: usize, what: &str) -> Result<&'a [f64], (IcanStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(ptr, n) })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ican_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ican_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

#[no_mangle]
pub extern "C" fn ican_config_default() -> IcanConfig {
    let c = CoreConfig::default();
    IcanConfig {
        alpha: c.alpha,
        max_iterations: c.max_iterations,
        eval_budget: c.eval_budget,
        ratio_low: c.ratio_low,
        ratio_high: c.ratio_high,
        seed: c.seed,
    }
}

/// Copies `n` pairs into a new sample.
///
/// # Safety
/// `x`, `y` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ican_sample_new(x: *const f64, y: *const f64, n: usize, out: *mut *mut IcanSample) -> IcanStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let xs = unsafe { slice(x, n, "x")? }.to_vec();
        let ys = unsafe { slice(y, n, "y")? }.to_vec();
        let inner = PairedSample::new(xs, ys).map_err(core_err)?;
        unsafe { *out = Box::into_raw(Box::new(IcanSample { inner })) };
        Ok(())
    })
}

/// Draws a synthetic sample.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ican_sample_generate(dataset: IcanDataset, n: usize, seed: u64, out: *mut *mut IcanSample) -> IcanStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = match dataset {
            IcanDataset::Section3 => Dataset::Section3,
            IcanDataset::Dataset1 => Dataset::Dataset1,
            IcanDataset::Dataset2 => Dataset::Dataset2,
            IcanDataset::Dataset3 => Dataset::Dataset3,
        };
        let g = generate(&GeneratorSpec::new(ds, n, seed)).map_err(core_err)?;
        unsafe { *out = Box::into_raw(Box::new(IcanSample { inner: g.sample })) };
        Ok(())
    })
}

/// New sample with both axes shifted and scaled to mean 0, variance 1.
///
/// # Safety
/// `sample` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ican_sample_normalize(sample: *const IcanSample, out: *mut *mut IcanSample) -> IcanStatus {
    guard(|| {
        let s = unsafe { sample.as_ref() }.ok_or_else(|| null("sample"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = s.inner.normalize().map_err(core_err)?;
        unsafe { *out = Box::into_raw(Box::new(IcanSample { inner })) };
        Ok(())
    })
}

/// # Safety
/// `sample` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ican_sample_len(sample: *const IcanSample, out: *mut usize) -> IcanStatus {
    guard(|| {
        let s = unsafe { sample.as_ref() }.ok_or_else(|| null("sample"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = s.inner.len() };
        Ok(())
    })
}

/// Copies the sample into `x`, `y`, each of capacity `cap` (at least the
/// sample length).
///
/// # Safety
/// `sample` must be a live handle; `x`, `y` writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ican_sample_copy(sample: *const IcanSample, x: *mut f64, y: *mut f64, cap: usize) -> IcanStatus {
    guard(|| {
        let s = unsafe { sample.as_ref() }.ok_or_else(|| null("sample"))?;
        let n = s.inner.len();
        if cap < n {
            return Err((IcanStatus::InvalidArgument, format!("buffer holds {cap}, need {n}")));
        }
        if x.is_null() || y.is_null() {
            return Err(null("output buffer"));
        }
        unsafe {
            ptr::copy_nonoverlapping(s.inner.x.as_ptr(), x, n);
            ptr::copy_nonoverlapping(s.inner.y.as_ptr(), y, n);
        }
        Ok(())
    })
}

/// # Safety
/// `sample` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ican_sample_free(sample: *mut IcanSample) {
    if !sample.is_null() {
        drop(unsafe { Box::from_raw(sample) });
    }
}

/// HSIC statistic and p-value of `x` against `y`.
///
/// # Safety
/// `x`, `y` must point to `n` doubles; `hsic`, `p_value` writable.
#[no_mangle]
pub unsafe extern "C" fn ican_hsic(
    x: *const f64,
    y: *const f64,
    n: usize,
    method: IcanPValueMethod,
    permutations: usize,
    seed: u64,
    hsic: *mut f64,
    p_value: *mut f64,
) -> IcanStatus {
    guard(|| {
        if hsic.is_null() || p_value.is_null() {
            return Err(null("output"));
        }
        let xs = unsafe { slice(x, n, "x")? };
        let ys = unsafe { slice(y, n, "y")? };
        let m = match method {
            IcanPValueMethod::Gamma => PValueMethod::Gamma,
            IcanPValueMethod::Permutation => PValueMethod::Permutation { permutations, seed },
        };
        let r = hsic_pvalue(xs, ys, m).map_err(core_err)?;
        unsafe {
            *hsic = r.hsic;
            *p_value = r.p_value();
        }
        Ok(())
    })
}

/// Solves one order of the moment system: given `E((Z + c_j W)^order)` at
/// `order + 1` distinct `c_j`, writes `E(Z^order)` and `E(W^order)`.
///
/// # Safety
/// `c`, `observed` must point to `order + 1` doubles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ican_reconstruct_moments(
    order: usize,
    c: *const f64,
    observed: *const f64,
    z_moment: *mut f64,
    w_moment: *mut f64,
) -> IcanStatus {
    guard(|| {
        if z_moment.is_null() || w_moment.is_null() {
            return Err(null("output"));
        }
        let m = order.checked_add(1).ok_or((IcanStatus::InvalidArgument, "order too large".into()))?;
        let cs = unsafe { slice(c, m, "c")? };
        let obs = unsafe { slice(observed, m, "observed")? };
        let sol = solve_order(order, cs, obs).map_err(core_err)?;
        unsafe {
            *z_moment = sol.z_moment();
            *w_moment = sol.w_moment();
        }
        Ok(())
    })
}

/// Runs the full fit on a sample that should already be normalised.
///
/// # Safety
/// `sample` must be a live handle; `config` null (defaults) or valid;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ican_fit(sample: *const IcanSample, config: *const IcanConfig, out: *mut *mut IcanFit) -> IcanStatus {
    guard(|| {
        let s = unsafe { sample.as_ref() }.ok_or_else(|| null("sample"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = unsafe { config.as_ref() }.copied().unwrap_or_else(|| ican_config_default());
        let core = CoreConfig {
            alpha: c.alpha,
            max_iterations: c.max_iterations,
            eval_budget: c.eval_budget,
            ratio_low: c.ratio_low,
            ratio_high: c.ratio_high,
            seed: c.seed,
            ..CoreConfig::default()
        };
        let result = run_ican(&s.inner, &core).map_err(core_err)?;
        let report = FitReport::new(&result, &core, s.inner.normalization);
        unsafe { *out = Box::into_raw(Box::new(IcanFit { result, report })) };
        Ok(())
    })
}

/// # Safety
/// `fit` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ican_fit_decision(fit: *const IcanFit, out: *mut IcanDecision) -> IcanStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = match f.result.decision {
            Decision::XtoY => IcanDecision::XToY,
            Decision::YtoX => IcanDecision::YToX,
            Decision::Confounder => IcanDecision::Confounder,
            Decision::NoCanFit => IcanDecision::NoCanFit,
        };
        unsafe { *out = d };
        Ok(())
    })
}

/// Writes `Var(N̂x)/Var(N̂y)` and the three p-values
/// `(N̂x,N̂y)`, `(N̂x,T)`, `(N̂y,T)`.
///
/// # Safety
/// `fit` must be a live handle; `var_ratio` writable; `p_values` writable
/// for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn ican_fit_summary(fit: *const IcanFit, var_ratio: *mut f64, p_values: *mut f64) -> IcanStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        if var_ratio.is_null() || p_values.is_null() {
            return Err(null("output"));
        }
        let p = f.result.p_values();
        unsafe {
            *var_ratio = f.result.var_ratio;
            ptr::copy_nonoverlapping(p.as_ptr(), p_values, 3);
        }
        Ok(())
    })
}

/// Copies the latent assignment into `buf` of capacity `cap`; `len`
/// receives the sample length even when the buffer is too small.
///
/// # Safety
/// `fit` must be a live handle; `buf` writable for `cap` doubles; `len`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ican_fit_latent(fit: *const IcanFit, buf: *mut f64, cap: usize, len: *mut usize) -> IcanStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        let t = f.result.t_hat.values();
        unsafe { *len = t.len() };
        if cap < t.len() {
            return Err((IcanStatus::InvalidArgument, format!("buffer holds {cap}, need {}", t.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        unsafe { ptr::copy_nonoverlapping(t.as_ptr(), buf, t.len()) };
        Ok(())
    })
}

/// Copies the JSON report (NUL-terminated) into `buf` of capacity `cap`;
/// `len` receives the length without the NUL even when the buffer is too
/// small.
///
/// # Safety
/// `fit` must be a live handle; `buf` writable for `cap` bytes; `len`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ican_fit_report_json(fit: *const IcanFit, buf: *mut c_char, cap: usize, len: *mut usize) -> IcanStatus {
    guard(|| {
        let f = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        let json = serde_json::to_string(&f.report).map_err(|e| (IcanStatus::IoError, e.to_string()))?;
        unsafe { *len = json.len() };
        if cap <= json.len() {
            return Err((IcanStatus::InvalidArgument, format!("buffer holds {cap}, need {}", json.len() + 1)));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        unsafe {
            ptr::copy_nonoverlapping(json.as_ptr() as *const c_char, buf, json.len());
            *buf.add(json.len()) = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ican_fit_free(fit: *mut IcanFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}
