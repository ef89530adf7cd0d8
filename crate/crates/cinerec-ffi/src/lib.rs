//! C ABI for the reconstruction toolkit. All objects are opaque handles;
//! every fallible call returns a `CxrStatus` and stores a human-readable
//! message retrievable with `cxr_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::path::Path;
use std::ptr;

use cinerec::admm::{admm_recon, CsConfig};
use cinerec::checkpoint::load_checkpoint;
use cinerec::crnn::{recon_crnn, ModelParams};
use cinerec::dataset::DatasetConfig;
use cinerec::fft::ifft2c;
use cinerec::io::{read_tensor, write_tensor, Cxt};
use cinerec::metrics::{nmse, psnr, ssim};
use cinerec::sampling::{generate_lh_mask, SamplingMask};
use cinerec::sense::estimate_sensitivities;
use cinerec::tensor::{rss_combine, ComplexCine, DomainTag, RealImageSequence};
use cinerec::Error;

/// Opaque tensor handle (any CXT dtype/rank).
pub struct CxrTensor(Cxt);

/// Opaque trained-model handle.
pub struct CxrModel(ModelParams<f32>);

/// Status codes; nonzero values match the CLI exit-code convention.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CxrStatus {
    Ok = 0,
    NullArgument = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(err: Error) -> CxrStatus {
    let code = match err.exit_code() {
        2 => CxrStatus::Config,
        4 => CxrStatus::Numerical,
        _ => CxrStatus::Data,
    };
    set_error(err.to_string());
    code
}

fn null_arg(what: &str) -> CxrStatus {
    set_error(format!("null argument: {what}"));
    CxrStatus::NullArgument
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call; never null.
#[no_mangle]
pub extern "C" fn cxr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, CxrStatus> {
    if path.is_null() {
        return Err(null_arg("path"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(CxrStatus::Config)
        }
    }
}

/// Read a CXT file into a new tensor handle; returns null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cxr_tensor_read(path: *const c_char) -> *mut CxrTensor {
    let Ok(path) = path_arg(path) else { return ptr::null_mut() };
    match read_tensor(path) {
        Ok(t) => Box::into_raw(Box::new(CxrTensor(t))),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Write a tensor handle to a CXT file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string, `t` a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn cxr_tensor_write(path: *const c_char, t: *const CxrTensor) -> CxrStatus {
    let Ok(path) = path_arg(path) else { return CxrStatus::NullArgument };
    let Some(t) = t.as_ref() else { return null_arg("tensor") };
    match write_tensor(path, &t.0) {
        Ok(()) => CxrStatus::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `t` must be a live tensor handle or null.
#[no_mangle]
pub unsafe extern "C" fn cxr_tensor_free(t: *mut CxrTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of dimensions, or -1 for null.
///
/// # Safety
/// `t` must be a live tensor handle or null.
#[no_mangle]
pub unsafe extern "C" fn cxr_tensor_ndim(t: *const CxrTensor) -> c_int {
    match t.as_ref() {
        Some(t) => t.0.dims().len() as c_int,
        None => -1,
    }
}

/// CXT dtype code (0 real32, 1 real64, 2 complex64, 3 complex128), -1 for null.
///
/// # Safety
/// `t` must be a live tensor handle or null.
#[no_mangle]
pub unsafe extern "C" fn cxr_tensor_dtype(t: *const CxrTensor) -> c_int {
    match t.as_ref() {
        Some(t) => t.0.dtype_code() as c_int,
        None => -1,
    }
}

/// Copy up to `max_dims` dimension sizes into `out`.
///
/// # Safety
/// `t` must be a live tensor handle; `out` must point to `max_dims` u64s.
#[no_mangle]
pub unsafe extern "C" fn cxr_tensor_dims(t: *const CxrTensor, out: *mut u64, max_dims: usize) -> CxrStatus {
    let Some(t) = t.as_ref() else { return null_arg("tensor") };
    if out.is_null() {
        return null_arg("out");
    }
    let dims = t.0.dims();
    if dims.len() > max_dims {
        set_error(format!("tensor has {} dims, caller provided room for {max_dims}", dims.len()));
        return CxrStatus::Data;
    }
    for (i, d) in dims.iter().enumerate() {
        *out.add(i) = *d;
    }
    CxrStatus::Ok
}

/// Generate a variable-density Latin-Hypercube mask as a real32 (T, W) tensor;
/// null on failure.
#[no_mangle]
pub extern "C" fn cxr_mask_generate(
    w_pe: usize,
    t: usize,
    accel: c_double,
    n_acs: usize,
    density_decay: c_double,
    seed: u64,
) -> *mut CxrTensor {
    match generate_lh_mask(w_pe, t, accel, n_acs, density_decay, seed) {
        Ok(m) => Box::into_raw(Box::new(CxrTensor(m.to_cxt()))),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Load a model checkpoint (`<base>.cxt` + `<base>.hdr`); null on failure.
///
/// # Safety
/// `base` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cxr_model_load(base: *const c_char) -> *mut CxrModel {
    let Ok(base) = path_arg(base) else { return ptr::null_mut() };
    match load_checkpoint(base) {
        Ok(m) => Box::into_raw(Box::new(CxrModel(m))),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `m` must be a live model handle or null.
#[no_mangle]
pub unsafe extern "C" fn cxr_model_free(m: *mut CxrModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Total trainable parameter count, or 0 for null.
///
/// # Safety
/// `m` must be a live model handle or null.
#[no_mangle]
pub unsafe extern "C" fn cxr_model_param_count(m: *const CxrModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.param_count())
}

unsafe fn cine_arg(t: *const CxrTensor, domain: DomainTag, what: &str) -> Result<ComplexCine, CxrStatus> {
    let Some(t) = t.as_ref() else { return Err(null_arg(what)) };
    ComplexCine::from_cxt(&t.0, domain).map_err(|e| fail(e))
}

unsafe fn mask_arg(t: *const CxrTensor) -> Result<SamplingMask, CxrStatus> {
    let Some(t) = t.as_ref() else { return Err(null_arg("mask")) };
    SamplingMask::from_cxt(&t.0).map_err(|e| fail(e))
}

fn image_out(img: RealImageSequence) -> *mut CxrTensor {
    Box::into_raw(Box::new(CxrTensor(img.to_cxt())))
}

/// Zero-filled reconstruction: RSS of the per-coil inverse FFT. Input is a
/// complex128 (T, C, H, W) k-space tensor; output real64 (T, H, W).
///
/// # Safety
/// `k_us` must be a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn cxr_recon_zf(k_us: *const CxrTensor) -> *mut CxrTensor {
    let k = match cine_arg(k_us, DomainTag::Kspace, "k_us") {
        Ok(k) => k,
        Err(_) => return ptr::null_mut(),
    };
    match ifft2c(&k) {
        Ok(img) => image_out(rss_combine(&img)),
        Err(e) => {
            fail(e);
            ptr::null_mut()
        }
    }
}

/// Compressed-sensing reconstruction with ACS-estimated sensitivities and
/// default regularization weights; `max_admm_iters` 0 keeps the default 100.
///
/// # Safety
/// `k_us` and `mask` must be live tensor handles.
#[no_mangle]
pub unsafe extern "C" fn cxr_recon_cs(
    k_us: *const CxrTensor,
    mask: *const CxrTensor,
    acs_width: usize,
    max_admm_iters: usize,
) -> *mut CxrTensor {
    let inner = || -> Result<RealImageSequence, CxrStatus> {
        let k = cine_arg(k_us, DomainTag::Kspace, "k_us")?;
        let m = mask_arg(mask)?;
        let acs = if acs_width == 0 { DatasetConfig::default().n_acs } else { acs_width };
        let sens = estimate_sensitivities(&k, &m, acs).map_err(|e| fail(e))?;
        let mut cfg = CsConfig::default();
        if max_admm_iters > 0 {
            cfg.max_admm_iters = max_admm_iters;
        }
        let (x, _) = admm_recon(&k, &m, &sens, &cfg).map_err(|e| fail(e))?;
        Ok(rss_combine(&x))
    };
    match inner() {
        Ok(img) => image_out(img),
        Err(_) => ptr::null_mut(),
    }
}

/// Res-CRNN reconstruction with a loaded model.
///
/// # Safety
/// `k_us`, `mask` and `model` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn cxr_recon_crnn(
    k_us: *const CxrTensor,
    mask: *const CxrTensor,
    model: *const CxrModel,
) -> *mut CxrTensor {
    let inner = || -> Result<RealImageSequence, CxrStatus> {
        let k = cine_arg(k_us, DomainTag::Kspace, "k_us")?;
        let m = mask_arg(mask)?;
        let Some(model) = model.as_ref() else { return Err(null_arg("model")) };
        let (img, _) = recon_crnn(&k, &m, &model.0).map_err(|e| fail(e))?;
        Ok(img)
    };
    match inner() {
        Ok(img) => image_out(img),
        Err(_) => ptr::null_mut(),
    }
}

/// Mean SSIM, PSNR (dB) and NMSE of `a` against reference `b`, both real64
/// (T, H, W) magnitude tensors. Results written to `out[0..3]`.
///
/// # Safety
/// `a` and `b` must be live tensor handles; `out` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn cxr_metrics(
    a: *const CxrTensor,
    b: *const CxrTensor,
    out: *mut c_double,
) -> CxrStatus {
    let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else { return null_arg("tensor") };
    if out.is_null() {
        return null_arg("out");
    }
    let inner = || -> Result<(f64, f64, f64), Error> {
        let a = RealImageSequence::from_cxt(&a.0)?;
        let b = RealImageSequence::from_cxt(&b.0)?;
        Ok((ssim(&a, &b, None)?.1, psnr(&a, &b, None)?, nmse(&a, &b)?))
    };
    match inner() {
        Ok((s, p, n)) => {
            *out.add(0) = s;
            *out.add(1) = p;
            *out.add(2) = n;
            CxrStatus::Ok
        }
        Err(e) => fail(e),
    }
}
