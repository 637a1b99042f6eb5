//! C interface to the `distortia` core.
//!
//! Objects are opaque heap handles created by `*_new` and released by the
//! matching `*_free`. Every fallible call returns a [`DistortiaStatus`];
//! on failure [`distortia_last_error`] describes what went wrong on the
//! calling thread. Arrays are passed as pointer plus length, matrices in
//! row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};

use distortia::adversary::worst_case_distortion;
use distortia::bounds::state_bound;
use distortia::mirror::MirrorPlane;
use distortia::shift_mirror::{optimize_theta, SMScheme, StandardNormal, ThetaSearch, TrajectoryCipher, ZGrid};
use distortia::system::LinearSystem;
use distortia::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortiaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    KeyOutOfRange = 4,
    ImpossibleObservation = 5,
    Numerical = 6,
    Panic = 7,
}

/// Shifting+mirroring scalar encoder.
pub struct DistortiaSmScheme {
    inner: SMScheme,
}

/// Affine reflection plane `{x : S x = b}`.
pub struct DistortiaPlane {
    inner: MirrorPlane,
}

/// Per-coordinate trajectory cipher for a perfectly observed plant.
pub struct DistortiaCipher {
    inner: TrajectoryCipher,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DistortiaStatus {
    match e {
        Error::DimensionMismatch { .. } => DistortiaStatus::DimensionMismatch,
        Error::KeyOutOfRange { .. } => DistortiaStatus::KeyOutOfRange,
        Error::ImpossibleObservation => DistortiaStatus::ImpossibleObservation,
        Error::Numerical(_) => DistortiaStatus::Numerical,
        _ => DistortiaStatus::InvalidArgument,
    }
}

struct Fail(DistortiaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DistortiaStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DistortiaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DistortiaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DistortiaStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

fn checked_len(a: usize, b: usize) -> Result<usize, Fail> {
    a.checked_mul(b)
        .ok_or_else(|| Fail(DistortiaStatus::InvalidArgument, "array size overflows".into()))
}

/// Message for the last failed call on this thread, or null after a
/// successful one. The pointer stays valid until the next call.
#[no_mangle]
pub extern "C" fn distortia_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn distortia_sm_new(theta: f64, k: u32, out: *mut *mut DistortiaSmScheme) -> DistortiaStatus {
    guard(|| {
        let inner = SMScheme::new(theta, k)?;
        store(out, DistortiaSmScheme { inner })
    })
}

/// # Safety
/// `scheme` must be null or a handle from [`distortia_sm_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn distortia_sm_free(scheme: *mut DistortiaSmScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// # Safety
/// `scheme` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_sm_encode(
    scheme: *const DistortiaSmScheme,
    x: f64,
    key: u64,
    out: *mut f64,
) -> DistortiaStatus {
    guard(|| {
        let s = handle(scheme, "scheme")?;
        write(out, s.inner.encode(x, key)?, "output")
    })
}

/// # Safety
/// `scheme` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_sm_decode(
    scheme: *const DistortiaSmScheme,
    z: f64,
    key: u64,
    out: *mut f64,
) -> DistortiaStatus {
    guard(|| {
        let s = handle(scheme, "scheme")?;
        write(out, s.inner.decode(z, key)?, "output")
    })
}

/// Worst-case distortion of a standard normal source and the symbol that
/// attains it.
///
/// # Safety
/// `scheme` must be a live handle; `value` and `argmin` writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_sm_worst_case(
    scheme: *const DistortiaSmScheme,
    value: *mut f64,
    argmin: *mut f64,
) -> DistortiaStatus {
    guard(|| {
        let s = handle(scheme, "scheme")?;
        let w = worst_case_distortion(&s.inner, &StandardNormal, &ZGrid::standard(&s.inner))?;
        write(value, w.value, "value")?;
        write(argmin, w.argmin, "argmin")
    })
}

/// Best window half-width for `k` key bits and a standard normal source,
/// with the default search grid.
///
/// # Safety
/// `theta` and `dw` must be writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_optimize_theta(k: u32, theta: *mut f64, dw: *mut f64) -> DistortiaStatus {
    guard(|| {
        let o = optimize_theta(k, &StandardNormal, &ThetaSearch::default())?;
        write(theta, o.theta, "theta")?;
        write(dw, o.dw, "dw")
    })
}

/// Plane from a `rows x dim` row-major `s` and `rows` offsets `b`.
///
/// # Safety
/// `s` must hold `rows * dim` values, `b` `rows` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_plane_new(
    s: *const f64,
    rows: usize,
    dim: usize,
    b: *const f64,
    out: *mut *mut DistortiaPlane,
) -> DistortiaStatus {
    guard(|| {
        let s = slice(s, checked_len(rows, dim)?, "s")?;
        let b = slice(b, rows, "b")?;
        let inner = MirrorPlane::new(DMatrix::from_row_slice(rows, dim, s), DVector::from_column_slice(b))?;
        store(out, DistortiaPlane { inner })
    })
}

/// Point mirror at `center`.
///
/// # Safety
/// `center` must hold `dim` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_plane_point(
    center: *const f64,
    dim: usize,
    out: *mut *mut DistortiaPlane,
) -> DistortiaStatus {
    guard(|| {
        let c = slice(center, dim, "center")?;
        store(out, DistortiaPlane {
            inner: MirrorPlane::point(DVector::from_column_slice(c)),
        })
    })
}

/// # Safety
/// `plane` must be null or a live plane handle.
#[no_mangle]
pub unsafe extern "C" fn distortia_plane_free(plane: *mut DistortiaPlane) {
    if !plane.is_null() {
        drop(Box::from_raw(plane));
    }
}

/// # Safety
/// `plane` must be live; `x` and `out` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn distortia_plane_reflect(
    plane: *const DistortiaPlane,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> DistortiaStatus {
    guard(|| {
        let p = handle(plane, "plane")?;
        let x = slice(x, dim, "x")?;
        let y = p.inner.reflect(&DVector::from_column_slice(x))?;
        slice_mut(out, dim, "out")?.copy_from_slice(y.as_slice());
        Ok(())
    })
}

/// Cipher for `x' = A x + u` with `X_1 ~ N(mu, diag(variances))` and `k`
/// key bits per coordinate. `a` is `dim x dim` row-major.
///
/// # Safety
/// `a` must hold `dim * dim` values, `mu` and `variances` `dim` values each.
#[no_mangle]
pub unsafe extern "C" fn distortia_cipher_new(
    a: *const f64,
    dim: usize,
    mu: *const f64,
    variances: *const f64,
    theta: f64,
    k: u32,
    out: *mut *mut DistortiaCipher,
) -> DistortiaStatus {
    guard(|| {
        let a = DMatrix::from_row_slice(dim, dim, slice(a, checked_len(dim, dim)?, "a")?);
        let mu = DVector::from_column_slice(slice(mu, dim, "mu")?);
        let var = DMatrix::from_diagonal(&DVector::from_column_slice(slice(variances, dim, "variances")?));
        let sys = LinearSystem::noiseless(a, DMatrix::identity(dim, dim))?;
        let inner = TrajectoryCipher::gaussian(sys, mu, &var, theta, k)?;
        store(out, DistortiaCipher { inner })
    })
}

/// # Safety
/// `cipher` must be null or a live cipher handle.
#[no_mangle]
pub unsafe extern "C" fn distortia_cipher_free(cipher: *mut DistortiaCipher) {
    if !cipher.is_null() {
        drop(Box::from_raw(cipher));
    }
}

fn cipher_dim(c: &DistortiaCipher) -> usize {
    c.inner.system().state_dim()
}

unsafe fn cipher_apply(
    cipher: *const DistortiaCipher,
    input: *const f64,
    steps: usize,
    keys: *const u64,
    n_keys: usize,
    out: *mut f64,
    decode: bool,
) -> DistortiaStatus {
    guard(|| {
        let c = handle(cipher, "cipher")?;
        let n = cipher_dim(c);
        let data = slice(input, checked_len(steps, n)?, "trajectory")?;
        if n_keys != n {
            return Err(Fail(
                DistortiaStatus::DimensionMismatch,
                format!("expected {n} keys, got {n_keys}"),
            ));
        }
        let keys = if n == 0 {
            &[][..]
        } else if keys.is_null() {
            return Err(null("keys"));
        } else {
            std::slice::from_raw_parts(keys, n)
        };
        let path: Vec<DVector<f64>> = data.chunks(n.max(1)).map(DVector::from_column_slice).collect();
        let result = if decode {
            c.inner.decode(&path, keys)?
        } else {
            c.inner.encode(&path, keys)?
        };
        let dst = slice_mut(out, data.len(), "out")?;
        for (chunk, v) in dst.chunks_mut(n.max(1)).zip(&result) {
            chunk.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Encodes `steps` states (row-major, `steps x dim`) with one key per
/// coordinate.
///
/// # Safety
/// `ys` and `out` must hold `steps * dim` values, `keys` `n_keys` values.
#[no_mangle]
pub unsafe extern "C" fn distortia_cipher_encode(
    cipher: *const DistortiaCipher,
    ys: *const f64,
    steps: usize,
    keys: *const u64,
    n_keys: usize,
    out: *mut f64,
) -> DistortiaStatus {
    cipher_apply(cipher, ys, steps, keys, n_keys, out, false)
}

/// Inverse of [`distortia_cipher_encode`].
///
/// # Safety
/// Same layout requirements as [`distortia_cipher_encode`].
#[no_mangle]
pub unsafe extern "C" fn distortia_cipher_decode(
    cipher: *const DistortiaCipher,
    zs: *const f64,
    steps: usize,
    keys: *const u64,
    n_keys: usize,
    out: *mut f64,
) -> DistortiaStatus {
    cipher_apply(cipher, zs, steps, keys, n_keys, out, true)
}

/// Eve's worst-case distortion `D(t)` and its analytic lower bound for
/// `t = 0..=t_max`, standard normal standardized initial state.
///
/// # Safety
/// `measured` and `bound` must each hold `t_max + 1` values.
#[no_mangle]
pub unsafe extern "C" fn distortia_cipher_evolution(
    cipher: *const DistortiaCipher,
    t_max: usize,
    measured: *mut f64,
    bound: *mut f64,
) -> DistortiaStatus {
    guard(|| {
        let c = handle(cipher, "cipher")?;
        let len = t_max
            .checked_add(1)
            .ok_or_else(|| Fail(DistortiaStatus::InvalidArgument, "t_max too large".into()))?;
        let points = c.inner.distortion_evolution(t_max, &StandardNormal)?;
        let m = slice_mut(measured, len, "measured")?;
        let b = slice_mut(bound, len, "bound")?;
        for (i, p) in points.iter().enumerate() {
            m[i] = p.measured;
            b[i] = p.bound;
        }
        Ok(())
    })
}

/// `lambda_min(B'B) * d_u` for a `rows x cols` row-major `B`.
///
/// # Safety
/// `b` must hold `rows * cols` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn distortia_state_bound(
    d_u: f64,
    b: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> DistortiaStatus {
    guard(|| {
        let b = DMatrix::from_row_slice(rows, cols, slice(b, checked_len(rows, cols)?, "b")?);
        write(out, state_bound(d_u, &b)?, "output")
    })
}
