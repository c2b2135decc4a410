//! C ABI for the scoring engine.
//!
//! Every function returns an [`NrcStatus`]; on failure the message is kept in
//! a thread-local slot readable with [`nrc_last_error`]. Backends are opaque
//! handles created by `nrc_*_open` and released with [`nrc_backend_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nrc_core::backend::{Backend, BackendKind, FixtureBackend};
use nrc_core::corpus::Instance;
use nrc_core::eval::{exact_p_value, monte_carlo_p_value, EXACT_LIMIT, RESAMPLES};
use nrc_core::metrics::{score_candidate, MetricKind, RtdReading, Scorer, Target, WeightPolicy};
use nrc_core::score::{aggregate, Orientation, ScoreVector, TokenWeights};
use nrc_core::Error;

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    WrongKind = 4,
    Unsupported = 5,
    EmptyTarget = 6,
    Io = 7,
    Parse = 8,
    Backend = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrcKind {
    Clm = 0,
    Mlm = 1,
    Rtd = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrcMetric {
    PplClm = 0,
    PplMlm = 1,
    Nrc = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrcTarget {
    Q = 0,
    A = 1,
    Qa = 2,
}

/// Scoring configuration passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NrcPolicy {
    pub metric: NrcMetric,
    pub target: NrcTarget,
    pub remove_stopwords: bool,
    pub delta_w: f64,
    /// Read the discriminator as P(original); lower scores win.
    pub rtd_original: bool,
}

/// Opaque model handle.
pub struct NrcBackend {
    inner: Box<dyn Backend>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> NrcStatus {
    match err {
        Error::WrongKind { .. } => NrcStatus::WrongKind,
        Error::Unsupported(_) => NrcStatus::Unsupported,
        Error::EmptyTarget => NrcStatus::EmptyTarget,
        Error::Io { .. } => NrcStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Schema { .. } | Error::Fixture(_) => NrcStatus::Parse,
        Error::FixtureMiss(_) | Error::Overlength { .. } | Error::Bundle(_) => NrcStatus::Backend,
        _ => NrcStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and turning panics into [`NrcStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), NrcStatus>) -> NrcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NrcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            NrcStatus::Panic
        }
    }
}

fn fail(err: Error) -> NrcStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> NrcStatus {
    set_error(format!("`{what}` is null"));
    NrcStatus::NullPointer
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, NrcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("`{what}` is not valid UTF-8"));
        NrcStatus::InvalidUtf8
    })
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], NrcStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn kind_in(k: NrcKind) -> BackendKind {
    match k {
        NrcKind::Clm => BackendKind::Clm,
        NrcKind::Mlm => BackendKind::Mlm,
        NrcKind::Rtd => BackendKind::Rtd,
    }
}

fn kind_out(k: BackendKind) -> NrcKind {
    match k {
        BackendKind::Clm => NrcKind::Clm,
        BackendKind::Mlm => NrcKind::Mlm,
        BackendKind::Rtd => NrcKind::Rtd,
    }
}

fn scorer_of(p: &NrcPolicy) -> Scorer {
    let metric = match p.metric {
        NrcMetric::PplClm => MetricKind::PplClm,
        NrcMetric::PplMlm => MetricKind::PplMlm,
        NrcMetric::Nrc => MetricKind::Nrc,
    };
    let target = match p.target {
        NrcTarget::Q => Target::Q,
        NrcTarget::A => Target::A,
        NrcTarget::Qa => Target::Qa,
    };
    let mut s =
        Scorer::new(metric, WeightPolicy { target, stopword_removal: p.remove_stopwords, concept_delta_w: p.delta_w });
    if p.rtd_original {
        s.rtd_reading = RtdReading::Original;
    }
    s
}

/// Opens a fixture file as a backend of the given kind.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn nrc_fixture_open(path: *const c_char, kind: NrcKind, out: *mut *mut NrcBackend) -> NrcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let backend = FixtureBackend::load(path, kind_in(kind)).map_err(fail)?;
        *out = Box::into_raw(Box::new(NrcBackend { inner: Box::new(backend) }));
        Ok(())
    })
}

/// Opens a model bundle directory. Fails with `Unsupported` when the
/// library was built without ONNX support.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn nrc_bundle_open(dir: *const c_char, out: *mut *mut NrcBackend) -> NrcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = text(dir, "dir")?;
        let backend = open_bundle(dir).map_err(fail)?;
        *out = Box::into_raw(Box::new(NrcBackend { inner: backend }));
        Ok(())
    })
}

#[cfg(feature = "onnx")]
fn open_bundle(dir: &str) -> nrc_core::Result<Box<dyn Backend>> {
    Ok(Box::new(nrc_core::backend::BundleBackend::load(dir)?))
}

#[cfg(not(feature = "onnx"))]
fn open_bundle(dir: &str) -> nrc_core::Result<Box<dyn Backend>> {
    Err(Error::Unsupported(format!("cannot open {dir}: built without ONNX support")))
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `backend` must come from an `nrc_*_open` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nrc_backend_free(backend: *mut NrcBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// # Safety
/// `backend` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrc_backend_kind(backend: *const NrcBackend, out: *mut NrcKind) -> NrcStatus {
    guard(|| {
        let b = backend.as_ref().ok_or_else(|| null("backend"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = kind_out(b.inner.kind());
        Ok(())
    })
}

/// Sequence forwards run so far.
///
/// # Safety
/// `backend` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrc_backend_forwards(backend: *const NrcBackend, out: *mut u64) -> NrcStatus {
    guard(|| {
        let b = backend.as_ref().ok_or_else(|| null("backend"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = b.inner.forwards();
        Ok(())
    })
}

/// Scores one choice of an instance given as a JSON object in the unified
/// instance format. Writes the aggregate and its orientation (1 when higher
/// is better, 0 otherwise).
///
/// # Safety
/// Pointers must be valid; `instance_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nrc_score_choice(
    backend: *const NrcBackend,
    instance_json: *const c_char,
    choice: usize,
    policy: NrcPolicy,
    out_aggregate: *mut f64,
    out_higher_better: *mut bool,
) -> NrcStatus {
    guard(|| {
        let b = backend.as_ref().ok_or_else(|| null("backend"))?;
        let out = out_aggregate.as_mut().ok_or_else(|| null("out_aggregate"))?;
        let json = text(instance_json, "instance_json")?;
        let inst: Instance = serde_json::from_str(json).map_err(|e| fail(e.into()))?;
        let scorer = scorer_of(&policy);
        let score = score_candidate(&inst, choice, &scorer, b.inner.as_ref()).map_err(fail)?;
        *out = score.aggregate;
        if let Some(h) = out_higher_better.as_mut() {
            *h = score.orientation() == Orientation::HigherBetter;
        }
        Ok(())
    })
}

/// Weighted mean of `scores` under `weights`, both of length `n`.
///
/// # Safety
/// `scores` and `weights` must point to `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrc_aggregate(scores: *const f64, weights: *const f64, n: usize, out: *mut f64) -> NrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = slice(scores, n, "scores")?.to_vec();
        let w = slice(weights, n, "weights")?.to_vec();
        let s = ScoreVector::new(s, Orientation::HigherBetter).map_err(fail)?;
        let w = TokenWeights::new(w).map_err(fail)?;
        *out = aggregate(&s, &w).map_err(fail)?;
        Ok(())
    })
}

/// Two-sided paired permutation p-value for per-instance correctness
/// vectors (nonzero means correct). Exact up to 20 pairs, seeded Monte
/// Carlo above.
///
/// # Safety
/// `a` and `b` must point to `n` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrc_permutation_p_value(
    a: *const u8,
    b: *const u8,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> NrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a: Vec<bool> = slice(a, n, "a")?.iter().map(|&x| x != 0).collect();
        let b: Vec<bool> = slice(b, n, "b")?.iter().map(|&x| x != 0).collect();
        *out = if n <= EXACT_LIMIT { exact_p_value(&a, &b) } else { monte_carlo_p_value(&a, &b, RESAMPLES, seed) };
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must hold `len` bytes, or be null with `len` 0.
#[no_mangle]
pub unsafe extern "C" fn nrc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nrc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
