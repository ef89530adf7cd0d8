//! Centered orthonormal 2D FFT: ifftshift -> DFT -> fftshift with 1/sqrt(N)
//! normalization per direction, so the transform is unitary and the center
//! pixel (floor(H/2), floor(W/2)) maps to the DC bin at the k-space center.

use num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use std::sync::Arc;

use crate::error::Result;
use crate::tensor::{ComplexCine, DomainTag};

/// In-place centered 2D transform of one (H, W) plane.
/// `inverse = false` gives fft2c, `true` gives its exact adjoint/inverse.
pub fn fft2_centered_plane<T: FftNum + num_traits::Float>(
    plane: &mut [Complex<T>],
    h: usize,
    w: usize,
    inverse: bool,
) {
    let mut planner = FftPlanner::<T>::new();
    let row_fft = plan(&mut planner, w, inverse);
    let col_fft = plan(&mut planner, h, inverse);
    transform_plane(plane, h, w, &row_fft, &col_fft);
}

fn plan<T: FftNum>(planner: &mut FftPlanner<T>, n: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Transform many (H, W) planes with shared plans.
pub fn fft2_centered_planes<T: FftNum + num_traits::Float>(
    data: &mut [Complex<T>],
    h: usize,
    w: usize,
    inverse: bool,
) {
    assert_eq!(data.len() % (h * w), 0);
    let mut planner = FftPlanner::<T>::new();
    let row_fft = plan(&mut planner, w, inverse);
    let col_fft = plan(&mut planner, h, inverse);
    for plane in data.chunks_mut(h * w) {
        transform_plane(plane, h, w, &row_fft, &col_fft);
    }
}

fn transform_plane<T: FftNum + num_traits::Float>(
    plane: &mut [Complex<T>],
    h: usize,
    w: usize,
    row_fft: &Arc<dyn Fft<T>>,
    col_fft: &Arc<dyn Fft<T>>,
) {
    debug_assert_eq!(plane.len(), h * w);
    // Both directions share the ifftshift -> DFT -> fftshift sandwich:
    // inverting y = S_f F S_i x gives x = S_f F^-1 S_i y since S_f = S_i^-1.
    shift2(plane, h, w, true);
    // rows
    for r in 0..h {
        row_fft.process(&mut plane[r * w..(r + 1) * w]);
    }
    // columns via gather/scatter
    let mut col = vec![Complex::<T>::new(T::zero(), T::zero()); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = plane[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            plane[r * w + c] = col[r];
        }
    }
    shift2(plane, h, w, false);
    let scale = T::one() / num_traits::Float::sqrt(T::from(h * w).unwrap());
    for z in plane.iter_mut() {
        *z = *z * scale;
    }
}

/// 2D shift. `pre = true` is ifftshift (rotate left by floor(n/2)),
/// `pre = false` is fftshift (rotate right by floor(n/2)).
fn shift2<T: Copy>(plane: &mut [Complex<T>], h: usize, w: usize, pre: bool) {
    let (sh, sw) = (h / 2, w / 2);
    let (sh, sw) = if pre { (sh, sw) } else { (h - sh, w - sw) };
    if sh == 0 && sw == 0 {
        return;
    }
    let mut tmp = vec![plane[0]; h * w];
    for r in 0..h {
        let r2 = (r + h - sh) % h;
        for c in 0..w {
            let c2 = (c + w - sw) % w;
            tmp[r2 * w + c2] = plane[r * w + c];
        }
    }
    plane.copy_from_slice(&tmp);
}

/// Centered orthonormal 2D FFT of every (frame, coil) slice.
pub fn fft2c(x: &ComplexCine) -> Result<ComplexCine> {
    x.assert_domain(DomainTag::Image, "fft2c")?;
    let (_, _, h, w) = x.dims();
    let mut out = x.clone();
    fft2_centered_planes(&mut out.data, h, w, false);
    out.domain = DomainTag::Kspace;
    Ok(out)
}

/// Exact inverse (and adjoint) of [`fft2c`].
pub fn ifft2c(k: &ComplexCine) -> Result<ComplexCine> {
    k.assert_domain(DomainTag::Kspace, "ifft2c")?;
    let (_, _, h, w) = k.dims();
    let mut out = k.clone();
    fft2_centered_planes(&mut out.data, h, w, true);
    out.domain = DomainTag::Image;
    Ok(out)
}
