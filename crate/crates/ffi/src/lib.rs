//! C ABI over the `signrr` crate.
//!
//! Problems and optimizers are opaque heap handles created by `*_new`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`SignrrStatus`]; on failure the message is kept per thread and
//! can be read with [`signrr_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use signrr::distributed::{Aggregation, CommLedger, CostModel};
use signrr::harness::{run_experiment, ExperimentConfig, Method};
use signrr::optimizers::{build_optimizer, EpochContext, EpochOptimizer, OptimizerSpec};
use signrr::problems::{FiniteSumProblem, LogisticProblem, RosenbrockSum};
use signrr::schedules::ScheduleKind;
use signrr::trace::Telemetry;
use signrr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignrrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    IndexOutOfRange = 4,
    NotANumber = 5,
    Config = 6,
    Io = 7,
    Csv = 8,
    InvalidUtf8 = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// A finite-sum objective.
pub struct SignrrProblem {
    inner: Arc<dyn FiniteSumProblem>,
}

/// A centralized optimizer with its iterate and epoch counter.
pub struct SignrrOptimizer {
    inner: Box<dyn EpochOptimizer>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SignrrStatus {
    match e {
        Error::InvalidArgument(_) => SignrrStatus::InvalidArgument,
        Error::IndexOutOfRange { .. } => SignrrStatus::IndexOutOfRange,
        Error::DimensionMismatch { .. } => SignrrStatus::DimensionMismatch,
        Error::NaN { .. } => SignrrStatus::NotANumber,
        Error::Config { .. } => SignrrStatus::Config,
        Error::Io { .. } => SignrrStatus::Io,
        Error::Csv { .. } => SignrrStatus::Csv,
    }
}

struct Fail(SignrrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SignrrStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SignrrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SignrrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SignrrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SignrrStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<(), Fail> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

/// Version string of the library (static, NUL-terminated).
#[no_mangle]
pub extern "C" fn signrr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bytes needed to hold the last error message, including the NUL.
#[no_mangle]
pub extern "C" fn signrr_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len() + 1)
}

/// Copies the last error message of this thread into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn signrr_last_error_message(buf: *mut c_char, len: usize) -> SignrrStatus {
    if buf.is_null() {
        return SignrrStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if msg.len() + 1 > len {
            return SignrrStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
        *buf.add(msg.len()) = 0;
        SignrrStatus::Ok
    })
}

/// Sum of `n` scaled Rosenbrock components in dimension `d`, scales drawn
/// uniformly from `[0, u_max]` with `seed`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn signrr_rosenbrock_new(
    n: usize,
    d: usize,
    u_max: f64,
    seed: u64,
    out: *mut *mut SignrrProblem,
) -> SignrrStatus {
    guard(|| {
        let p = RosenbrockSum::new(n, d, u_max, seed)?;
        let h = Box::new(SignrrProblem { inner: Arc::new(p) });
        write_out(out, Box::into_raw(h), "out")
    })
}

/// Softmax regression on a CSV file whose last column is the label.
/// `num_classes = 0` infers the class count.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn signrr_logistic_from_csv(
    path: *const c_char,
    has_header: bool,
    num_classes: usize,
    out: *mut *mut SignrrProblem,
) -> SignrrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let classes = (num_classes > 0).then_some(num_classes);
        let p = LogisticProblem::from_csv(Path::new(path), has_header, classes)?;
        let h = Box::new(SignrrProblem { inner: Arc::new(p) });
        write_out(out, Box::into_raw(h), "out")
    })
}

/// Releases a problem. Null is ignored.
///
/// # Safety
/// `problem` must come from a `signrr_*_new` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn signrr_problem_free(problem: *mut SignrrProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn signrr_problem_dim(problem: *const SignrrProblem, out: *mut usize) -> SignrrStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        write_out(out, p.inner.dim(), "out")
    })
}

/// # Safety
/// `problem` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn signrr_problem_num_components(
    problem: *const SignrrProblem,
    out: *mut usize,
) -> SignrrStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        write_out(out, p.inner.num_components(), "out")
    })
}

/// Full objective at `x` (`len` must equal the dimension).
///
/// # Safety
/// `x` must hold `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn signrr_problem_value(
    problem: *const SignrrProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SignrrStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let x = slice_arg(x, len, "x")?;
        check_len(p.inner.dim(), len)?;
        write_out(out, p.inner.value(x), "out")
    })
}

/// Full gradient at `x` written into `grad`; both have length `len`.
///
/// # Safety
/// `x` and `grad` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn signrr_problem_grad(
    problem: *const SignrrProblem,
    x: *const f64,
    grad: *mut f64,
    len: usize,
) -> SignrrStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let x = slice_arg(x, len, "x")?;
        let g = slice_out(grad, len, "grad")?;
        check_len(p.inner.dim(), len)?;
        p.inner.grad_into(x, g);
        Ok(())
    })
}

/// Creates a centralized optimizer by name (`signrr`, `signrvr`, `signrvm`,
/// `sgd`, `rr`, `signsgd`, `signum`, `adam`) starting at `x0`.
///
/// `gamma0` and `d0` feed a constant schedule, or `c/sqrt(t+1)`-style
/// schedules when `adaptive` is set. `d0` is ignored by methods without a
/// freeze threshold and `beta` by methods without momentum.
///
/// # Safety
/// `algorithm` must be NUL-terminated, `x0` hold `len` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn signrr_optimizer_new(
    algorithm: *const c_char,
    gamma0: f64,
    d0: f64,
    beta: f64,
    adaptive: bool,
    x0: *const f64,
    len: usize,
    out: *mut *mut SignrrOptimizer,
) -> SignrrStatus {
    guard(|| {
        let name = str_arg(algorithm, "algorithm")?;
        let method: Method = name.parse()?;
        let Method::Central(alg) = method else {
            return Err(Fail(
                SignrrStatus::InvalidArgument,
                format!("`{name}` is distributed; use signrr_run_experiment"),
            ));
        };
        let x0 = slice_arg(x0, len, "x0")?.to_vec();
        let kind = if adaptive {
            ScheduleKind::Adaptive
        } else {
            ScheduleKind::Constant
        };
        let shift = method.default_shift();
        let mut spec = OptimizerSpec::new(alg, kind.build(gamma0, shift)?);
        if alg.uses_threshold() {
            spec = spec.threshold(kind.build(d0, shift)?);
        }
        if alg.uses_momentum() {
            spec = spec.beta(beta);
        }
        let opt = build_optimizer(&spec, x0)?;
        write_out(out, Box::into_raw(Box::new(SignrrOptimizer { inner: opt })), "out")
    })
}

/// Releases an optimizer. Null is ignored.
///
/// # Safety
/// `optimizer` must come from [`signrr_optimizer_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn signrr_optimizer_free(optimizer: *mut SignrrOptimizer) {
    if !optimizer.is_null() {
        drop(Box::from_raw(optimizer));
    }
}

/// Runs `epochs` further epochs on `problem` with mini-batch size `batch`.
/// Shuffles and samples derive from `seed`, so equal inputs give equal runs.
/// `final_grad_l1` (nullable) receives `‖∇f‖₁` at the last recorded step.
///
/// # Safety
/// Handles must be live; `final_grad_l1` may be null.
#[no_mangle]
pub unsafe extern "C" fn signrr_optimizer_run(
    optimizer: *mut SignrrOptimizer,
    problem: *const SignrrProblem,
    epochs: usize,
    seed: u64,
    batch: usize,
    final_grad_l1: *mut f64,
) -> SignrrStatus {
    guard(|| {
        let opt = optimizer.as_mut().ok_or_else(|| null("optimizer"))?;
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let ctx = EpochContext {
            seed,
            batch: batch.max(1),
            telemetry: Telemetry::default(),
        };
        let mut last = f64::NAN;
        for _ in 0..epochs {
            let trace = opt.inner.run_epoch(&*p.inner, &ctx)?;
            if let Some(r) = trace.records.last() {
                last = r.grad_l1;
            }
        }
        if !final_grad_l1.is_null() {
            final_grad_l1.write(last);
        }
        Ok(())
    })
}

/// Copies the current iterate into `x` (length `len`).
///
/// # Safety
/// `x` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn signrr_optimizer_x(
    optimizer: *const SignrrOptimizer,
    x: *mut f64,
    len: usize,
) -> SignrrStatus {
    guard(|| {
        let opt = optimizer.as_ref().ok_or_else(|| null("optimizer"))?;
        let cur = opt.inner.x();
        check_len(cur.len(), len)?;
        slice_out(x, len, "x")?.copy_from_slice(cur);
        Ok(())
    })
}

/// Bytes moved by `rounds` rounds with `workers` workers in dimension `d`
/// under the default cost model, for sign averaging (`majority_vote`
/// false) or majority vote.
///
/// # Safety
/// `bytes_up` and `bytes_down` must be valid.
#[no_mangle]
pub unsafe extern "C" fn signrr_comm_bytes(
    workers: usize,
    d: usize,
    rounds: usize,
    majority_vote: bool,
    bytes_up: *mut u64,
    bytes_down: *mut u64,
) -> SignrrStatus {
    guard(|| {
        let rule = if majority_vote {
            Aggregation::MajorityVote
        } else {
            Aggregation::SignAverage
        };
        let mut ledger = CommLedger::new(CostModel::default());
        for _ in 0..rounds {
            ledger.record_round(workers, d, rule);
        }
        write_out(bytes_up, ledger.bytes_up, "bytes_up")?;
        write_out(bytes_down, ledger.bytes_down, "bytes_down")
    })
}

/// Runs a sweep described by a JSON object of config keys and writes its
/// outputs under the config's `out_dir`. `lemma_violations` (nullable)
/// receives the total number of failed inequality checks.
///
/// # Safety
/// `config_json` must be NUL-terminated; `lemma_violations` may be null.
#[no_mangle]
pub unsafe extern "C" fn signrr_run_experiment(
    config_json: *const c_char,
    lemma_violations: *mut usize,
) -> SignrrStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let config = ExperimentConfig::from_json_str(text)?;
        let summary = run_experiment(&config)?;
        if !lemma_violations.is_null() {
            lemma_violations.write(summary.lemma_violations());
        }
        Ok(())
    })
}
