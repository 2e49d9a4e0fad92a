//! C ABI over the two-parameter-flow library.
//!
//! Conventions: objects live behind opaque handles created by `*_new`-style
//! constructors and released by the matching `*_free`; every fallible call
//! returns a [`TpfStatus`] and writes results through out-pointers. The last
//! error message is kept per thread and retrievable with [`tpf_last_error`].
//! All entry points catch panics and turn them into `TPF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tpf_core::config::RunConfig;
use tpf_core::error::Error;
use tpf_core::gaussian::{oracle_u, oracle_v, symmetry_criterion, GaussianPath};
use tpf_core::interpolant::Schedule;
use tpf_core::linalg::{
    min_cost_assignment, spd_sqrt, solve_sqrt_sylvester, Matrix, SeededRng, SpdMatrix,
};
use tpf_core::metrics::{w2_entropic, w2_exact};
use tpf_core::nn::{net_forward, NetParams};
use tpf_core::pipeline::{EvalOptions, Pipeline};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NotSpd = 3,
    SingularSystem = 4,
    DimMismatch = 5,
    NonFinite = 6,
    NoConvergence = 7,
    IoError = 8,
    ConfigError = 9,
    MissingArtifact = 10,
    NumericalError = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> TpfStatus {
    match err {
        Error::NotSpd(_) => TpfStatus::NotSpd,
        Error::SingularSystem(_) | Error::SingularJacobian(_) => TpfStatus::SingularSystem,
        Error::NonSquare { .. }
        | Error::DimMismatch(_)
        | Error::SizeMismatch(_)
        | Error::CloudSizeMismatch(_)
        | Error::SOutOfRange(_)
        | Error::EmptyRange(_)
        | Error::DegenerateGrid(_) => TpfStatus::DimMismatch,
        Error::NonFinite(_) => TpfStatus::NonFinite,
        Error::NoConvergence(_) => TpfStatus::NoConvergence,
        Error::Io { .. } | Error::Format { .. } => TpfStatus::IoError,
        Error::Config(_) => TpfStatus::ConfigError,
        Error::MissingArtifact(_) => TpfStatus::MissingArtifact,
        Error::CflViolation(_) => TpfStatus::NumericalError,
    }
}

fn fail(err: Error) -> TpfStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Run a fallible body with panic containment.
fn guarded(body: impl FnOnce() -> TpfStatus) -> TpfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic inside tpf call");
            TpfStatus::Panic
        }
    }
}

/// Opaque deterministic random generator.
pub struct TpfRng(SeededRng);
/// Opaque dense row-major f64 matrix.
pub struct TpfMatrix(Matrix);
/// Opaque Gaussian covariance path.
pub struct TpfGaussianPath(GaussianPath);
/// Opaque trained network.
pub struct TpfNet(NetParams);

/// Version string of the library (static storage).
#[no_mangle]
pub extern "C" fn tpf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the current thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes (or be null to query the length).
#[no_mangle]
pub unsafe extern "C" fn tpf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// --- rng ---------------------------------------------------------------------

/// New deterministic generator (xoshiro256++ seeded via splitmix64).
#[no_mangle]
pub extern "C" fn tpf_rng_new(seed: u64) -> *mut TpfRng {
    Box::into_raw(Box::new(TpfRng(SeededRng::from_seed(seed))))
}

/// # Safety
/// `rng` must be a live pointer from [`tpf_rng_new`] (or null).
#[no_mangle]
pub unsafe extern "C" fn tpf_rng_free(rng: *mut TpfRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Fill `out` with `count` i.i.d. standard normal draws.
///
/// # Safety
/// `rng` must be live; `out` must point to `count` writable f64 values.
#[no_mangle]
pub unsafe extern "C" fn tpf_rng_standard_normal(
    rng: *mut TpfRng,
    out: *mut f64,
    count: usize,
) -> TpfStatus {
    guarded(|| {
        if rng.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let rng = &mut (*rng).0;
        for i in 0..count {
            *out.add(i) = rng.normal();
        }
        TpfStatus::Ok
    })
}

// --- matrices ------------------------------------------------------------------

/// New matrix copying `rows * cols` row-major values from `data`. Returns
/// null on invalid input (query [`tpf_last_error`]).
///
/// # Safety
/// `data` must point to `rows * cols` readable f64 values.
#[no_mangle]
pub unsafe extern "C" fn tpf_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
) -> *mut TpfMatrix {
    if data.is_null() {
        set_error("null data pointer");
        return std::ptr::null_mut();
    }
    let slice = std::slice::from_raw_parts(data, rows * cols);
    match Matrix::new(rows, cols, slice.to_vec()) {
        Ok(m) => Box::into_raw(Box::new(TpfMatrix(m))),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `m` must be a live matrix pointer (or null).
#[no_mangle]
pub unsafe extern "C" fn tpf_matrix_free(m: *mut TpfMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be live.
#[no_mangle]
pub unsafe extern "C" fn tpf_matrix_rows(m: *const TpfMatrix) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).0.rows()
}

/// # Safety
/// `m` must be live.
#[no_mangle]
pub unsafe extern "C" fn tpf_matrix_cols(m: *const TpfMatrix) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).0.cols()
}

/// Copy the row-major entries into `out` (capacity `cap` values).
///
/// # Safety
/// `m` must be live; `out` must point to `cap` writable f64 values.
#[no_mangle]
pub unsafe extern "C" fn tpf_matrix_copy_data(
    m: *const TpfMatrix,
    out: *mut f64,
    cap: usize,
) -> TpfStatus {
    guarded(|| {
        if m.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let data = (*m).0.data();
        if cap < data.len() {
            set_error(format!("need capacity {}, got {cap}", data.len()));
            return TpfStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
        TpfStatus::Ok
    })
}

/// Symmetric PSD square root of an SPD matrix.
///
/// # Safety
/// `m` must be live; `out` receives a new matrix handle on success.
#[no_mangle]
pub unsafe extern "C" fn tpf_spd_sqrt(
    m: *const TpfMatrix,
    out: *mut *mut TpfMatrix,
) -> TpfStatus {
    guarded(|| {
        if m.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let spd = match SpdMatrix::new((*m).0.clone()) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match spd_sqrt(&spd) {
            Ok(root) => {
                *out = Box::into_raw(Box::new(TpfMatrix(root.into_matrix())));
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Solve U M + sqrt(M) U sqrt(M) = rhs for U.
///
/// # Safety
/// `m` and `rhs` must be live; `out` receives a new matrix handle on success.
#[no_mangle]
pub unsafe extern "C" fn tpf_sqrt_sylvester(
    m: *const TpfMatrix,
    rhs: *const TpfMatrix,
    out: *mut *mut TpfMatrix,
) -> TpfStatus {
    guarded(|| {
        if m.is_null() || rhs.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let spd = match SpdMatrix::new((*m).0.clone()) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match solve_sqrt_sylvester(&spd, &(*rhs).0) {
            Ok(u) => {
                *out = Box::into_raw(Box::new(TpfMatrix(u)));
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Exact minimum-cost assignment; writes `rows` column indices into `perm`.
///
/// # Safety
/// `cost` must be live and square; `perm` must hold `rows` usize slots.
#[no_mangle]
pub unsafe extern "C" fn tpf_min_cost_assignment(
    cost: *const TpfMatrix,
    perm: *mut usize,
    cap: usize,
) -> TpfStatus {
    guarded(|| {
        if cost.is_null() || perm.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let cost = &(*cost).0;
        if cap < cost.rows() {
            set_error(format!("need capacity {}, got {cap}", cost.rows()));
            return TpfStatus::BufferTooSmall;
        }
        match min_cost_assignment(cost) {
            Ok(p) => {
                std::ptr::copy_nonoverlapping(p.as_ptr(), perm, p.len());
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Exact Wasserstein-2 between equal-size clouds.
///
/// # Safety
/// `a` and `b` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tpf_w2_exact(
    a: *const TpfMatrix,
    b: *const TpfMatrix,
    out: *mut f64,
) -> TpfStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        match w2_exact(&(*a).0, &(*b).0) {
            Ok(d) => {
                *out = d;
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Debiased entropic Wasserstein-2 estimate.
///
/// # Safety
/// `a` and `b` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tpf_w2_entropic(
    a: *const TpfMatrix,
    b: *const TpfMatrix,
    epsilon: f64,
    iters: usize,
    out: *mut f64,
) -> TpfStatus {
    guarded(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        match w2_entropic(&(*a).0, &(*b).0, epsilon, iters) {
            Ok(d) => {
                *out = d;
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// --- gaussian oracle -----------------------------------------------------------

/// Rotating-covariance path R(theta t) diag(d1, d2) R(theta t)^T.
#[no_mangle]
pub extern "C" fn tpf_gaussian_rotating(d1: f64, d2: f64, theta: f64) -> *mut TpfGaussianPath {
    Box::into_raw(Box::new(TpfGaussianPath(GaussianPath::Rotating {
        d: (d1, d2),
        theta,
    })))
}

/// Isotropic path (1 + sigma^2 t) I in `dim` dimensions.
#[no_mangle]
pub extern "C" fn tpf_gaussian_isotropic(dim: usize, sigma: f64) -> *mut TpfGaussianPath {
    Box::into_raw(Box::new(TpfGaussianPath(GaussianPath::IsotropicLinear {
        dim,
        sigma,
    })))
}

/// # Safety
/// `path` must be a live pointer (or null).
#[no_mangle]
pub unsafe extern "C" fn tpf_gaussian_free(path: *mut TpfGaussianPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Physics-time matrix U(t, s): writes dim*dim row-major values.
///
/// # Safety
/// `path` must be live; `out` must hold dim*dim writable f64 values.
#[no_mangle]
pub unsafe extern "C" fn tpf_oracle_u(
    path: *const TpfGaussianPath,
    t: f64,
    s: f64,
    out: *mut f64,
    cap: usize,
) -> TpfStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        match oracle_u(&(*path).0, Schedule::Trig, t, s) {
            Ok(u) => {
                if cap < u.data().len() {
                    set_error(format!("need capacity {}, got {cap}", u.data().len()));
                    return TpfStatus::BufferTooSmall;
                }
                std::ptr::copy_nonoverlapping(u.data().as_ptr(), out, u.data().len());
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Sampling-time oracle velocity at a point (trig schedule).
///
/// # Safety
/// `path` must be live; `x` and `out` must hold `dim` values each.
#[no_mangle]
pub unsafe extern "C" fn tpf_oracle_v(
    path: *const TpfGaussianPath,
    x: *const f64,
    dim: usize,
    t: f64,
    s: f64,
    out: *mut f64,
) -> TpfStatus {
    guarded(|| {
        if path.is_null() || x.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let xs = std::slice::from_raw_parts(x, dim);
        match oracle_v(&(*path).0, Schedule::Trig, xs, t, s) {
            Ok(v) => {
                std::ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Commutator norm of (Sigma, dSigma/dt) and the symmetry flag it implies.
///
/// # Safety
/// `path` must be live; both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tpf_symmetry_criterion(
    path: *const TpfGaussianPath,
    t: f64,
    out_commutator_norm: *mut f64,
    out_symmetric: *mut bool,
) -> TpfStatus {
    guarded(|| {
        if path.is_null() || out_commutator_norm.is_null() || out_symmetric.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        match symmetry_criterion(&(*path).0, t) {
            Ok((norm, flag)) => {
                *out_commutator_norm = norm;
                *out_symmetric = flag;
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// --- networks --------------------------------------------------------------------

unsafe fn cstr_to_path<'a>(p: *const c_char) -> Result<&'a Path, TpfStatus> {
    if p.is_null() {
        set_error("null path");
        return Err(TpfStatus::NullArgument);
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(TpfStatus::InvalidArgument)
        }
    }
}

/// Load a trained network checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` receives the handle.
#[no_mangle]
pub unsafe extern "C" fn tpf_net_load(
    path: *const c_char,
    out: *mut *mut TpfNet,
) -> TpfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return TpfStatus::NullArgument;
        }
        let p = match cstr_to_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match tpf_core::io::load_checkpoint(p) {
            Ok(params) => {
                *out = Box::into_raw(Box::new(TpfNet(params)));
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `net` must be a live pointer (or null).
#[no_mangle]
pub unsafe extern "C" fn tpf_net_free(net: *mut TpfNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// State dimension of a loaded network.
///
/// # Safety
/// `net` must be live.
#[no_mangle]
pub unsafe extern "C" fn tpf_net_dim(net: *const TpfNet) -> usize {
    if net.is_null() {
        return 0;
    }
    (*net).0.spec.input_dim
}

/// Evaluate the network at (x, t, s[, mu]); `has_mu` gates the mu argument.
///
/// # Safety
/// `net` must be live; `x` and `out` must hold `dim` values each.
#[no_mangle]
pub unsafe extern "C" fn tpf_net_forward(
    net: *const TpfNet,
    x: *const f64,
    dim: usize,
    t: f64,
    s: f64,
    has_mu: bool,
    mu: f64,
    out: *mut f64,
) -> TpfStatus {
    guarded(|| {
        if net.is_null() || x.is_null() || out.is_null() {
            set_error("null argument");
            return TpfStatus::NullArgument;
        }
        let xs = std::slice::from_raw_parts(x, dim);
        let mu = has_mu.then_some(mu);
        match net_forward(&(*net).0, xs, t, s, mu) {
            Ok(y) => {
                std::ptr::copy_nonoverlapping(y.as_ptr(), out, y.len());
                TpfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// --- pipeline ----------------------------------------------------------------------

/// Run the whole pipeline from a config file into an output directory.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn tpf_pipeline_run(
    config_path: *const c_char,
    out_dir: *const c_char,
) -> TpfStatus {
    guarded(|| {
        let cfg_path = match cstr_to_path(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let out = match cstr_to_path(out_dir) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let cfg = match RunConfig::load(cfg_path) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let test_mus = cfg.eval.test_mu.clone();
        let pipeline = match Pipeline::new(cfg, out) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match pipeline.run_all(false, &EvalOptions { test_mus }) {
            Ok(_) => TpfStatus::Ok,
            Err(e) => fail(e),
        }
    })
}
