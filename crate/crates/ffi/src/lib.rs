//! C interface to gala-core.
//!
//! Every fallible function returns a [`GalaStatus`]; on failure a message is
//! kept per thread and can be read with [`gala_last_error_message`]. Handles
//! are opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gala_core::harness::{parse_config, run_experiment};
use gala_core::spectral::{consensus_distance, prop1_bound, prop2_bound};
use gala_core::topology::{build_full, build_ring, equal_neighbor_mixing, is_doubly_stochastic, stationary_distribution, MixingMatrix, TopologySpec};
use gala_core::GalaError;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalaStatus {
    Ok = 0,
    InvalidArgument = 1,
    Convergence = 2,
    Protocol = 3,
    Config = 4,
    Io = 5,
    Numerical = 6,
    Domain = 7,
    NullPointer = 8,
    Panic = 9,
    BufferTooSmall = 10,
}

pub struct GalaTopology(TopologySpec);

pub struct GalaMixing(MixingMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = msg.as_bytes().to_vec();
        v.retain(|&b| b != 0);
        v.push(0);
        *e.borrow_mut() = v;
    });
}

fn status_of(err: &GalaError) -> GalaStatus {
    match err {
        GalaError::InvalidArgument(_) => GalaStatus::InvalidArgument,
        GalaError::Convergence(_) => GalaStatus::Convergence,
        GalaError::Protocol(_) | GalaError::Consistency(_) | GalaError::Worker(_) => GalaStatus::Protocol,
        GalaError::Config { .. } | GalaError::Format { .. } => GalaStatus::Config,
        GalaError::Io { .. } => GalaStatus::Io,
        GalaError::Numerical(_) => GalaStatus::Numerical,
        GalaError::Domain(_) => GalaStatus::Domain,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F>(f: F) -> GalaStatus
where
    F: FnOnce() -> Result<(), (GalaStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GalaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            GalaStatus::Panic
        }
    }
}

fn lib<T>(r: gala_core::Result<T>) -> Result<T, (GalaStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (GalaStatus, String) {
    (GalaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], (GalaStatus, String)> {
    if ptr.is_null() {
        return Err(null("output buffer"));
    }
    if len < need {
        return Err((GalaStatus::BufferTooSmall, format!("buffer holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, need))
}

unsafe fn in_slice<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], (GalaStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null("input buffer"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (GalaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GalaStatus::InvalidArgument, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gala_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to `len`) into `buf` and returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gala_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let full = msg.len().saturating_sub(1);
        if !buf.is_null() && len > 0 {
            let n = full.min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        full
    })
}

fn store_topology(topo: gala_core::Result<TopologySpec>, out: *mut *mut GalaTopology) -> Result<(), (GalaStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let t = lib(topo)?;
    unsafe { *out = Box::into_raw(Box::new(GalaTopology(t))) };
    Ok(())
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gala_topology_ring(n: usize, out: *mut *mut GalaTopology) -> GalaStatus {
    guard(|| store_topology(build_ring(n), out))
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gala_topology_full(n: usize, out: *mut *mut GalaTopology) -> GalaStatus {
    guard(|| store_topology(build_full(n), out))
}

/// Static topology from `count` `(from, to)` pairs stored flat in `edges`.
///
/// # Safety
/// `edges` must point to `2 * count` values; `out` to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gala_topology_custom(n: usize, edges: *const usize, count: usize, out: *mut *mut GalaTopology) -> GalaStatus {
    guard(|| {
        if count > 0 && edges.is_null() {
            return Err(null("edges"));
        }
        let flat = if count == 0 { &[][..] } else { std::slice::from_raw_parts(edges, 2 * count) };
        let list = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        store_topology(TopologySpec::fixed(n, list), out)
    })
}

/// # Safety
/// `topo` must be null or a handle from a `gala_topology_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn gala_topology_free(topo: *mut GalaTopology) {
    if !topo.is_null() {
        drop(Box::from_raw(topo));
    }
}

/// # Safety
/// `topo` must be a live handle; `out` a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gala_mixing_equal_neighbor(topo: *const GalaTopology, k: u64, out: *mut *mut GalaMixing) -> GalaStatus {
    guard(|| {
        let t = topo.as_ref().ok_or_else(|| null("topology"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(GalaMixing(equal_neighbor_mixing(&t.0, k))));
        Ok(())
    })
}

/// Number of agents (the matrix is `n x n`); 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gala_mixing_size(m: *const GalaMixing) -> usize {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// Row-major entries into `out` (at least `n * n` values).
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn gala_mixing_entries(m: *const GalaMixing, out: *mut f64, len: usize) -> GalaStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("mixing"))?;
        let n = m.0.n();
        let dst = out_slice(out, len, n * n)?;
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = m.0.entries()[(i, j)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gala_mixing_is_doubly_stochastic(m: *const GalaMixing, out: *mut bool) -> GalaStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("mixing"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = is_doubly_stochastic(&m.0);
        Ok(())
    })
}

/// Stationary distribution of the mixing matrix into `out` (`n` values).
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn gala_stationary_distribution(m: *const GalaMixing, out: *mut f64, len: usize) -> GalaStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("mixing"))?;
        let pi = lib(stationary_distribution(&m.0))?;
        out_slice(out, len, m.0.n())?.copy_from_slice(pi.pi());
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`gala_mixing_equal_neighbor`].
#[no_mangle]
pub unsafe extern "C" fn gala_mixing_free(m: *mut GalaMixing) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Transient consensus bound at `k = len - 1` from the update norms.
///
/// # Safety
/// `norms` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gala_prop1_bound(alpha: f64, beta: f64, norms: *const f64, len: usize, out: *mut f64) -> GalaStatus {
    guard(|| {
        let n = in_slice(norms, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = prop1_bound(alpha, beta, n);
        Ok(())
    })
}

/// Stationary consensus radius; `Domain` when `beta >= 1`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gala_prop2_bound(alpha: f64, beta: f64, tau: usize, b: usize, l: f64, out: *mut f64) -> GalaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lib(prop2_bound(alpha, beta, tau, b, l))?;
        Ok(())
    })
}

/// `||X - 1 mean(X)||_F` for a row-major `n x d` matrix.
///
/// # Safety
/// `x` must point to `n * d` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gala_consensus_distance(x: *const f64, n: usize, d: usize, out: *mut f64) -> GalaStatus {
    guard(|| {
        let data = in_slice(x, n * d)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = DMatrix::from_row_slice(n, d, data);
        *out = consensus_distance(&m);
        Ok(())
    })
}

/// Runs an experiment config file. `out_dir` may be null to use the
/// configured directory; `passed` receives whether every check held.
///
/// # Safety
/// String arguments must be NUL-terminated; `passed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn gala_run_experiment(config_path: *const c_char, out_dir: *const c_char, passed: *mut bool) -> GalaStatus {
    guard(|| {
        let cfg_path = path_arg(config_path, "config path")?;
        let out = if out_dir.is_null() { None } else { Some(path_arg(out_dir, "output directory")?) };
        let cfg = lib(parse_config(&cfg_path))?;
        let summary = lib(run_experiment(&cfg, out.as_deref()))?;
        if !passed.is_null() {
            *passed = summary.passed;
        }
        Ok(())
    })
}
