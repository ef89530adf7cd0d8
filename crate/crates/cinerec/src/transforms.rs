//! Sparsifying transforms for the CS objective: temporal finite differences,
//! orthonormal 2D Haar wavelets, and the complex soft-thresholding prox.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::ComplexCine;

/// d[t] = x[t+1] - x[t]; output has T-1 frames (Neumann boundary).
pub fn temporal_diff(x: &ComplexCine) -> Result<ComplexCine> {
    let (t, c, h, w) = x.dims();
    if t < 2 {
        return Err(Error::Parameter(format!("temporal_diff needs T >= 2, got T={t}")));
    }
    let mut out = ComplexCine::zeros((t - 1, c, h, w), x.domain)?;
    for ti in 0..t - 1 {
        for ci in 0..c {
            let a = x.slice(ti, ci).to_vec();
            let b = x.slice(ti + 1, ci).to_vec();
            let dst = out.slice_mut(ti, ci);
            for i in 0..h * w {
                dst[i] = b[i] - a[i];
            }
        }
    }
    Ok(out)
}

/// Exact conjugate transpose of [`temporal_diff`]: output has T+1 frames.
pub fn temporal_diff_adjoint(d: &ComplexCine) -> Result<ComplexCine> {
    let (td, c, h, w) = d.dims();
    let t = td + 1;
    let mut out = ComplexCine::zeros((t, c, h, w), d.domain)?;
    for ti in 0..t {
        for ci in 0..c {
            let prev = if ti > 0 { Some(d.slice(ti - 1, ci).to_vec()) } else { None };
            let next = if ti < td { Some(d.slice(ti, ci).to_vec()) } else { None };
            let dst = out.slice_mut(ti, ci);
            for i in 0..h * w {
                let mut v = Complex64::new(0.0, 0.0);
                if let Some(p) = &prev {
                    v += p[i];
                }
                if let Some(n) = &next {
                    v -= n[i];
                }
                dst[i] = v;
            }
        }
    }
    Ok(out)
}

fn check_haar_dims(h: usize, w: usize, levels: usize) -> Result<()> {
    let div = 1usize << levels;
    if levels == 0 || h % div != 0 || w % div != 0 {
        return Err(Error::Parameter(format!(
            "haar: dims ({h},{w}) must be divisible by 2^levels = {div} and levels >= 1"
        )));
    }
    Ok(())
}

fn haar_level(plane: &mut [Complex64], stride_w: usize, h: usize, w: usize, inverse: bool) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut buf = vec![Complex64::new(0.0, 0.0); h.max(w)];
    if !inverse {
        // rows
        for r in 0..h {
            for i in 0..w / 2 {
                let a = plane[r * stride_w + 2 * i];
                let b = plane[r * stride_w + 2 * i + 1];
                buf[i] = (a + b) * s;
                buf[w / 2 + i] = (a - b) * s;
            }
            plane[r * stride_w..r * stride_w + w].copy_from_slice(&buf[..w]);
        }
        // columns
        for cidx in 0..w {
            for i in 0..h / 2 {
                let a = plane[(2 * i) * stride_w + cidx];
                let b = plane[(2 * i + 1) * stride_w + cidx];
                buf[i] = (a + b) * s;
                buf[h / 2 + i] = (a - b) * s;
            }
            for r in 0..h {
                plane[r * stride_w + cidx] = buf[r];
            }
        }
    } else {
        // columns
        for cidx in 0..w {
            for i in 0..h / 2 {
                let lo = plane[i * stride_w + cidx];
                let hi = plane[(h / 2 + i) * stride_w + cidx];
                buf[2 * i] = (lo + hi) * s;
                buf[2 * i + 1] = (lo - hi) * s;
            }
            for r in 0..h {
                plane[r * stride_w + cidx] = buf[r];
            }
        }
        // rows
        for r in 0..h {
            for i in 0..w / 2 {
                let lo = plane[r * stride_w + i];
                let hi = plane[r * stride_w + w / 2 + i];
                buf[2 * i] = (lo + hi) * s;
                buf[2 * i + 1] = (lo - hi) * s;
            }
            plane[r * stride_w..r * stride_w + w].copy_from_slice(&buf[..w]);
        }
    }
}

/// Orthonormal multi-level 2D Haar transform per (frame, coil) slice.
/// Coefficients are stored in-place in the usual quadrant layout.
pub fn haar_dwt2(img: &ComplexCine, levels: usize) -> Result<ComplexCine> {
    let (t, c, h, w) = img.dims();
    check_haar_dims(h, w, levels)?;
    let mut out = img.clone();
    for ti in 0..t {
        for ci in 0..c {
            let plane = out.slice_mut(ti, ci);
            let (mut lh, mut lw) = (h, w);
            for _ in 0..levels {
                haar_level(plane, w, lh, lw, false);
                lh /= 2;
                lw /= 2;
            }
        }
    }
    Ok(out)
}

/// Perfect-reconstruction inverse of [`haar_dwt2`].
pub fn haar_idwt2(coeffs: &ComplexCine, levels: usize) -> Result<ComplexCine> {
    let (t, c, h, w) = coeffs.dims();
    check_haar_dims(h, w, levels)?;
    let mut out = coeffs.clone();
    for ti in 0..t {
        for ci in 0..c {
            let plane = out.slice_mut(ti, ci);
            for level in (0..levels).rev() {
                let lh = h >> level;
                let lw = w >> level;
                haar_level(plane, w, lh, lw, true);
            }
        }
    }
    Ok(out)
}

/// Complex soft threshold: shrink the magnitude by tau, keep the phase.
#[inline]
pub fn soft_threshold(z: Complex64, tau: f64) -> Complex64 {
    debug_assert!(tau >= 0.0);
    let n = z.norm();
    if n <= tau {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((n - tau) / n)
    }
}

pub fn soft_threshold_slice(z: &mut [Complex64], tau: f64) {
    for v in z.iter_mut() {
        *v = soft_threshold(*v, tau);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DomainTag;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cine(dims: (usize, usize, usize, usize), seed: u64) -> ComplexCine {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.0 * dims.1 * dims.2 * dims.3;
        ComplexCine::new(
            (0..n).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect(),
            dims,
            DomainTag::Image,
        )
        .unwrap()
    }

    #[test]
    fn temporal_diff_basics() {
        let x = ComplexCine::new(vec![Complex64::new(1.0, 0.0); 3 * 4], (3, 1, 2, 2), DomainTag::Image).unwrap();
        let d = temporal_diff(&x).unwrap();
        assert!(d.data.iter().all(|z| z.norm() == 0.0));

        let mut ramp = ComplexCine::zeros((4, 1, 2, 2), DomainTag::Image).unwrap();
        for t in 0..4 {
            for z in ramp.slice_mut(t, 0) {
                *z = Complex64::new(t as f64, 0.0);
            }
        }
        let d = temporal_diff(&ramp).unwrap();
        assert!(d.data.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() == 0.0));

        let single = ComplexCine::zeros((1, 1, 2, 2), DomainTag::Image).unwrap();
        assert!(temporal_diff(&single).is_err());
    }

    #[test]
    fn temporal_diff_adjoint_identity() {
        for trial in 0..50 {
            let x = random_cine((5, 1, 4, 4), 300 + trial);
            let y = random_cine((4, 1, 4, 4), 400 + trial);
            let dx = temporal_diff(&x).unwrap();
            let dty = temporal_diff_adjoint(&y).unwrap();
            let lhs: Complex64 = dx.data.iter().zip(y.data.iter()).map(|(a, b)| a * b.conj()).sum();
            let rhs: Complex64 = x.data.iter().zip(dty.data.iter()).map(|(a, b)| a * b.conj()).sum();
            assert!((lhs - rhs).norm() <= 1e-12 * x.norm2() * y.norm2());
        }
    }

    #[test]
    fn haar_constant_image_energy_in_approx_band() {
        let x = ComplexCine::new(vec![Complex64::new(2.0, 0.0); 64], (1, 1, 8, 8), DomainTag::Image).unwrap();
        let c = haar_dwt2(&x, 3).unwrap();
        let plane = c.slice(0, 0);
        for (i, z) in plane.iter().enumerate() {
            if i == 0 {
                assert!((z.re - 16.0).abs() < 1e-12); // 2 * sqrt(64)
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn haar_roundtrip_and_orthonormality() {
        let x = random_cine((2, 1, 16, 8), 11);
        let c = haar_dwt2(&x, 3).unwrap();
        assert!((c.norm2() - x.norm2()).abs() <= 1e-12 * x.norm2());
        let back = haar_idwt2(&c, 3).unwrap();
        for (a, b) in x.data.iter().zip(back.data.iter()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn haar_rejects_nondivisible_dims() {
        let x = random_cine((1, 1, 6, 8), 0);
        assert!(haar_dwt2(&x, 2).is_err());
    }

    #[test]
    fn haar_adjoint_is_inverse() {
        for trial in 0..100 {
            let a = random_cine((1, 1, 8, 8), 500 + trial);
            let b = random_cine((1, 1, 8, 8), 600 + trial);
            let fa = haar_dwt2(&a, 2).unwrap();
            let fib = haar_idwt2(&b, 2).unwrap();
            let lhs: Complex64 = fa.data.iter().zip(b.data.iter()).map(|(x, y)| x * y.conj()).sum();
            let rhs: Complex64 = a.data.iter().zip(fib.data.iter()).map(|(x, y)| x * y.conj()).sum();
            assert!((lhs - rhs).norm() <= 1e-10 * a.norm2() * b.norm2());
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(Complex64::new(3.0, 0.0), 1.0), Complex64::new(2.0, 0.0));
        assert_eq!(soft_threshold(Complex64::new(-0.5, 0.0), 1.0), Complex64::new(0.0, 0.0));
        assert_eq!(soft_threshold(Complex64::new(3.0, 4.0), 5.0), Complex64::new(0.0, 0.0));
        let z = soft_threshold(Complex64::new(3.0, 4.0), 2.5);
        assert!((z - Complex64::new(1.5, 2.0)).norm() <= 1e-14);
        assert_eq!(soft_threshold(Complex64::new(0.0, 0.0), 1.0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn soft_threshold_is_a_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let a = Complex64::new(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0);
            let b = Complex64::new(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0);
            let tau = rng.gen::<f64>();
            let pa = soft_threshold(a, tau);
            let pb = soft_threshold(b, tau);
            assert!((pa - pb).norm() <= (a - b).norm() + 1e-15);
        }
    }
}
