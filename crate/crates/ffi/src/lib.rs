//! C ABI for the `nena` library.
//!
//! Conventions:
//! * every fallible function returns a [`NenaStatus`]; results go through
//!   out-pointers that are written only on success;
//! * on failure a message is stored per thread and can be read with
//!   [`nena_last_error_message`];
//! * handles are opaque and released with their `_free` function (passing
//!   NULL is a no-op);
//! * no Rust panic crosses the boundary: panics are reported as
//!   `NENA_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use nena::codes::{Condition, UnitId, BAND_COUNT, CODE_COUNT};
use nena::ingest::load_config;
use nena::network::{accumulate_directed_runs, accumulate_symmetric, normalize, NetworkAccumulator};
use nena::pipeline::{read_cohort_manifest, run_all, RunOptions, RunStatus};
use nena::projection::{fit_projection, ProjectionModel};
use nena::spectral::{band_shares, welch_psd, CodeVector};
use nena::stats::{cohens_d, welch_t_test};
use nena::{NormalizationMode, PipelineConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NenaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Bad or unreadable input data.
    InputError = 3,
    /// A numerical routine failed (non-convergence, degenerate statistics).
    NumericalError = 4,
    /// The pipeline finished but skipped some participants.
    Partial = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NenaNetworkKind {
    /// Undirected co-occurrence within an epoch.
    Symmetric = 0,
    /// Directed from the preceding window to the current epoch.
    Directed = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NenaNormalization {
    EpochCount = 0,
    EntrySum = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NenaCondition {
    Feedback = 0,
    NoFeedback = 1,
}

/// Summary of one sample group.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NenaGroupSummary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Welch two-sample t-test result. `cohens_d` is NaN when the pooled SD is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NenaTestReport {
    pub first: NenaGroupSummary,
    pub second: NenaGroupSummary,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub significant: bool,
}

/// Accumulated network of one unit.
pub struct NenaNetwork {
    inner: NetworkAccumulator,
}

/// Joint two-dimensional projection of several networks.
pub struct NenaProjection {
    inner: ProjectionModel,
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

fn fail(status: NenaStatus, msg: impl Into<String>) -> NenaStatus {
    set_error(msg);
    status
}

fn from_error(e: nena::Error) -> NenaStatus {
    let status = if e.is_numerical() {
        NenaStatus::NumericalError
    } else {
        NenaStatus::InputError
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> NenaStatus) -> NenaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NenaStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(NenaStatus::NullPointer, concat!("`", stringify!($p), "` is NULL"));
        })+
    };
}

unsafe fn slice_of<'a, T>(p: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        slice::from_raw_parts(p, len)
    }
}

unsafe fn str_of<'a>(p: *const c_char, what: &str) -> Result<&'a str, NenaStatus> {
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NenaStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length excluding
/// the terminator; 0 when there is no error. Pass `buf = NULL` to query the
/// length.
#[no_mangle]
pub unsafe extern "C" fn nena_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nena_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Fraction of 1–50 Hz power in each of the five bands (delta, theta, alpha,
/// beta, gamma) for one channel of one epoch, estimated with Welch's method
/// (3 half-overlapping segments). Writes 5 values to `shares_out`.
#[no_mangle]
pub unsafe extern "C" fn nena_band_shares(
    samples: *const f64,
    len: usize,
    sample_rate: f64,
    shares_out: *mut f64,
) -> NenaStatus {
    guard(|| {
        nonnull!(samples, shares_out);
        let x = slice_of(samples, len);
        let config = PipelineConfig::default();
        let psd = match welch_psd(x, sample_rate, config.welch_segments, config.welch_overlap) {
            Ok(p) => p,
            Err(e) => return from_error(e.into()),
        };
        match band_shares(&psd, &config.bands) {
            Ok(s) => {
                debug_assert_eq!(s.len(), BAND_COUNT);
                ptr::copy_nonoverlapping(s.as_ptr(), shares_out, BAND_COUNT);
                NenaStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

unsafe fn code_vectors(codes: *const u8, n_epochs: usize, unit: &UnitId) -> Vec<CodeVector> {
    let flat = slice_of(codes, n_epochs * CODE_COUNT);
    flat.chunks_exact(CODE_COUNT)
        .enumerate()
        .map(|(i, row)| {
            let mut c = [false; CODE_COUNT];
            for (dst, &src) in c.iter_mut().zip(row) {
                *dst = src != 0;
            }
            CodeVector {
                epoch_index: i,
                codes: c,
                unit: unit.clone(),
            }
        })
        .collect()
}

/// Builds a unit network from `n_epochs` consecutive code vectors given as a
/// row-major `n_epochs × 7` byte matrix (non-zero = present; column order
/// delta, theta, alpha, beta, gamma, correct, incorrect). `window` is the
/// directed window length and is ignored for symmetric networks.
#[no_mangle]
pub unsafe extern "C" fn nena_network_build(
    kind: NenaNetworkKind,
    participant: *const c_char,
    condition: NenaCondition,
    codes: *const u8,
    n_epochs: usize,
    window: usize,
    out: *mut *mut NenaNetwork,
) -> NenaStatus {
    guard(|| {
        nonnull!(participant, codes, out);
        let id = match str_of(participant, "participant") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let condition = match condition {
            NenaCondition::Feedback => Condition::Feedback,
            NenaCondition::NoFeedback => Condition::NoFeedback,
        };
        let Some(unit) = UnitId::new(id, condition) else {
            return fail(NenaStatus::InvalidArgument, "participant is empty");
        };
        let vectors = code_vectors(codes, n_epochs, &unit);
        let acc = match kind {
            NenaNetworkKind::Symmetric => accumulate_symmetric(&vectors),
            NenaNetworkKind::Directed => accumulate_directed_runs(&vectors, window),
        };
        match acc {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NenaNetwork { inner }));
                NenaStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Raw count at row `from`, column `to` (code indices 0..7).
#[no_mangle]
pub unsafe extern "C" fn nena_network_weight(
    network: *const NenaNetwork,
    from: usize,
    to: usize,
    weight_out: *mut f64,
) -> NenaStatus {
    guard(|| {
        nonnull!(network, weight_out);
        if from >= CODE_COUNT || to >= CODE_COUNT {
            return fail(NenaStatus::InvalidArgument, format!("code index out of range: ({from}, {to})"));
        }
        *weight_out = (*network).inner.weights[from][to] as f64;
        NenaStatus::Ok
    })
}

/// Number of epochs (symmetric) or windows (directed) accumulated.
#[no_mangle]
pub unsafe extern "C" fn nena_network_update_count(network: *const NenaNetwork, count_out: *mut u64) -> NenaStatus {
    guard(|| {
        nonnull!(network, count_out);
        *count_out = (*network).inner.update_count;
        NenaStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn nena_network_free(network: *mut NenaNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Jointly projects `count` networks of the same kind (at least 3). The
/// networks are only read; the caller keeps ownership.
#[no_mangle]
pub unsafe extern "C" fn nena_projection_fit(
    networks: *const *const NenaNetwork,
    count: usize,
    normalization: NenaNormalization,
    out: *mut *mut NenaProjection,
) -> NenaStatus {
    guard(|| {
        nonnull!(networks, out);
        let handles = slice_of(networks, count);
        if handles.iter().any(|h| h.is_null()) {
            return fail(NenaStatus::NullPointer, "a network handle is NULL");
        }
        let mode = match normalization {
            NenaNormalization::EpochCount => NormalizationMode::EpochCount,
            NenaNormalization::EntrySum => NormalizationMode::EntrySum,
        };
        let vectors: Result<Vec<_>, _> = handles.iter().map(|&h| normalize(&(*h).inner, mode)).collect();
        let vectors = match vectors {
            Ok(v) => v,
            Err(e) => return from_error(e.into()),
        };
        match fit_projection(&vectors) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(NenaProjection { inner }));
                NenaStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Coordinates of the `index`-th input network; writes 2 values.
#[no_mangle]
pub unsafe extern "C" fn nena_projection_point(
    projection: *const NenaProjection,
    index: usize,
    xy_out: *mut f64,
) -> NenaStatus {
    guard(|| {
        nonnull!(projection, xy_out);
        let m = &(*projection).inner;
        let Some(p) = m.unit_points.get(index) else {
            return fail(
                NenaStatus::InvalidArgument,
                format!("index {index} out of range ({} units)", m.unit_points.len()),
            );
        };
        ptr::copy_nonoverlapping(p.as_ptr(), xy_out, 2);
        NenaStatus::Ok
    })
}

/// Fraction of variance explained by the two axes; writes 2 values.
#[no_mangle]
pub unsafe extern "C" fn nena_projection_variance(projection: *const NenaProjection, out: *mut f64) -> NenaStatus {
    guard(|| {
        nonnull!(projection, out);
        let v = &(*projection).inner.variance_explained;
        for k in 0..2 {
            *out.add(k) = v.get(k).copied().unwrap_or(0.0);
        }
        NenaStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn nena_projection_free(projection: *mut NenaProjection) {
    if !projection.is_null() {
        drop(Box::from_raw(projection));
    }
}

/// Welch two-sample t-test (two-sided) of `a` against `b`.
#[no_mangle]
pub unsafe extern "C" fn nena_welch_t_test(
    a: *const f64,
    n_a: usize,
    b: *const f64,
    n_b: usize,
    alpha: f64,
    report_out: *mut NenaTestReport,
) -> NenaStatus {
    guard(|| {
        nonnull!(a, b, report_out);
        match welch_t_test(slice_of(a, n_a), slice_of(b, n_b), alpha) {
            Ok(r) => {
                let g = |s: nena::stats::GroupSummary| NenaGroupSummary {
                    mean: s.mean,
                    sd: s.sd,
                    n: s.n,
                };
                *report_out = NenaTestReport {
                    first: g(r.groups[0]),
                    second: g(r.groups[1]),
                    t_statistic: r.t_statistic,
                    degrees_of_freedom: r.degrees_of_freedom,
                    p_value: r.p_value,
                    cohens_d: r.cohens_d.unwrap_or(f64::NAN),
                    significant: r.significant,
                };
                NenaStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Cohen's d of `a` relative to `b` with the pooled standard deviation.
#[no_mangle]
pub unsafe extern "C" fn nena_cohens_d(
    a: *const f64,
    n_a: usize,
    b: *const f64,
    n_b: usize,
    d_out: *mut f64,
) -> NenaStatus {
    guard(|| {
        nonnull!(a, b, d_out);
        match cohens_d(slice_of(a, n_a), slice_of(b, n_b)) {
            Ok(d) => {
                *d_out = d;
                NenaStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Runs the whole pipeline on a cohort manifest (`participant,eeg,trials`),
/// writing every export into `out_dir`. `config_path` may be NULL for the
/// built-in defaults; `seed` overrides the configured seed. Returns
/// `NENA_STATUS_PARTIAL` when participants were skipped (`keep_going`).
#[no_mangle]
pub unsafe extern "C" fn nena_run_pipeline(
    cohort_path: *const c_char,
    out_dir: *const c_char,
    config_path: *const c_char,
    seed: u64,
    keep_going: bool,
) -> NenaStatus {
    guard(|| {
        nonnull!(cohort_path, out_dir);
        let cohort = match str_of(cohort_path, "cohort_path") {
            Ok(s) => PathBuf::from(s),
            Err(s) => return s,
        };
        let out = match str_of(out_dir, "out_dir") {
            Ok(s) => PathBuf::from(s),
            Err(s) => return s,
        };
        let (mut config, config_file) = if config_path.is_null() {
            (PipelineConfig::default(), None)
        } else {
            let p = match str_of(config_path, "config_path") {
                Ok(s) => PathBuf::from(s),
                Err(s) => return s,
            };
            match load_config(&p) {
                Ok(c) => (c.config, Some(p)),
                Err(e) => return from_error(e.into()),
            }
        };
        config.rng_seed = seed;
        let inputs = match read_cohort_manifest(&cohort) {
            Ok(i) => i,
            Err(e) => return from_error(e),
        };
        let mut opts = RunOptions::new(out, config);
        opts.config_path = config_file;
        opts.keep_going = keep_going;
        match run_all(&inputs, &opts) {
            Ok(m) if m.status == RunStatus::Partial => {
                fail(NenaStatus::Partial, m.warnings.join("; "))
            }
            Ok(_) => NenaStatus::Ok,
            Err(f) => {
                let status = if f.exit_code() == 2 {
                    NenaStatus::NumericalError
                } else {
                    NenaStatus::InputError
                };
                fail(status, f.error.to_string())
            }
        }
    })
}
