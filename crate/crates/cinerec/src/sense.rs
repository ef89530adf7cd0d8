//! SENSE encoding operator E = M F S and the ACS low-pass coil sensitivity
//! estimator used by the compressed-sensing baseline.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2c, ifft2c};
use crate::sampling::SamplingMask;
use crate::tensor::{CoilSensitivities, ComplexCine, DomainTag};

/// Estimate RSS-normalized sensitivity maps from the fully sampled center
/// (ACS) of temporally averaged k-space. A Hamming window across the ACS
/// columns suppresses truncation ringing in the low-resolution coil images.
pub fn estimate_sensitivities(
    k_us: &ComplexCine,
    m: &SamplingMask,
    acs_width: usize,
) -> Result<CoilSensitivities> {
    let (t, c, h, w) = k_us.dims();
    if m.dims() != (t, w) {
        return Err(Error::Shape(format!(
            "mask dims {:?} do not match k-space (T,W) = ({t},{w})",
            m.dims()
        )));
    }
    let center = w / 2;
    let acs_start = center - acs_width / 2;
    for ti in 0..t {
        for k in acs_start..acs_start + acs_width {
            if !m.get(ti, k) {
                return Err(Error::Precondition(format!(
                    "ACS line {k} is not sampled in frame {ti}"
                )));
            }
        }
    }

    // temporal average at sampled locations, divided by per-column counts
    let mut avg = vec![Complex64::new(0.0, 0.0); c * h * w];
    let mut counts = vec![0usize; w];
    for ti in 0..t {
        for wi in 0..w {
            if m.get(ti, wi) {
                counts[wi] += 1;
            }
        }
    }
    for ti in 0..t {
        for ci in 0..c {
            let s = k_us.slice(ti, ci);
            for hi in 0..h {
                for wi in 0..w {
                    if m.get(ti, wi) {
                        avg[(ci * h + hi) * w + wi] += s[hi * w + wi];
                    }
                }
            }
        }
    }
    for hi in 0..h {
        for wi in 0..w {
            if counts[wi] > 0 {
                for ci in 0..c {
                    avg[(ci * h + hi) * w + wi] /= counts[wi] as f64;
                }
            }
        }
    }

    // keep only the windowed ACS columns
    let mut low = ComplexCine::zeros((1, c, h, w), DomainTag::Kspace)?;
    for ci in 0..c {
        let dst = low.slice_mut(0, ci);
        for hi in 0..h {
            for (j, wi) in (acs_start..acs_start + acs_width).enumerate() {
                let win = if acs_width > 1 {
                    0.54 - 0.46
                        * (2.0 * std::f64::consts::PI * j as f64 / (acs_width - 1) as f64).cos()
                } else {
                    1.0
                };
                dst[hi * w + wi] = avg[(ci * h + hi) * w + wi] * win;
            }
        }
    }
    let g = ifft2c(&low)?;

    let mut data = vec![Complex64::new(0.0, 0.0); c * h * w];
    let mut rss = vec![0.0f64; h * w];
    for ci in 0..c {
        let gc = g.slice(0, ci);
        for i in 0..h * w {
            rss[i] += gc[i].norm_sqr();
        }
    }
    for v in &mut rss {
        *v = v.sqrt();
    }
    let rss_max = rss.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-6 * rss_max;
    for ci in 0..c {
        let gc = g.slice(0, ci);
        for i in 0..h * w {
            data[ci * h * w + i] =
                if rss[i] < floor { Complex64::new(0.0, 0.0) } else { gc[i] / rss[i] };
        }
    }
    CoilSensitivities::new(data, (c, h, w))
}

fn check_sense_shapes(
    x_dims: (usize, usize, usize, usize),
    sens: &CoilSensitivities,
    m: &SamplingMask,
    op: &str,
) -> Result<()> {
    let (t, _, h, w) = x_dims;
    let (_, sh, sw) = sens.dims();
    if (sh, sw) != (h, w) {
        return Err(Error::Shape(format!("{op}: maps are ({sh},{sw}), image is ({h},{w})")));
    }
    if m.dims() != (t, w) {
        return Err(Error::Shape(format!(
            "{op}: mask dims {:?} do not match (T,W) = ({t},{w})",
            m.dims()
        )));
    }
    Ok(())
}

/// E x: per coil, modulate by s_c, centered FFT, apply the sampling mask.
pub fn sense_forward(
    x: &ComplexCine,
    sens: &CoilSensitivities,
    m: &SamplingMask,
) -> Result<ComplexCine> {
    let (t, c_in, h, w) = x.dims();
    if c_in != 1 {
        return Err(Error::Shape(format!("sense_forward expects C=1 input, got C={c_in}")));
    }
    x.assert_domain(DomainTag::Image, "sense_forward")?;
    check_sense_shapes(x.dims(), sens, m, "sense_forward")?;
    let (n_coils, _, _) = sens.dims();
    let mut coil_imgs = ComplexCine::zeros((t, n_coils, h, w), DomainTag::Image)?;
    for ti in 0..t {
        let g = x.slice(ti, 0).to_vec();
        for ci in 0..n_coils {
            let s = sens.coil(ci);
            let dst = coil_imgs.slice_mut(ti, ci);
            for i in 0..h * w {
                dst[i] = g[i] * s[i];
            }
        }
    }
    let mut k = fft2c(&coil_imgs)?;
    for ti in 0..t {
        for ci in 0..n_coils {
            let s = k.slice_mut(ti, ci);
            for hi in 0..h {
                for wi in 0..w {
                    if !m.get(ti, wi) {
                        s[hi * w + wi] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
    Ok(k)
}

/// E^H k: apply the mask, inverse FFT, multiply by conj(s_c), sum over coils.
pub fn sense_adjoint(
    k: &ComplexCine,
    sens: &CoilSensitivities,
    m: &SamplingMask,
) -> Result<ComplexCine> {
    let (t, c, h, w) = k.dims();
    k.assert_domain(DomainTag::Kspace, "sense_adjoint")?;
    check_sense_shapes(k.dims(), sens, m, "sense_adjoint")?;
    let (n_coils, _, _) = sens.dims();
    if c != n_coils {
        return Err(Error::Shape(format!("sense_adjoint: {c} coils in k-space, {n_coils} maps")));
    }
    let mut masked = k.clone();
    for ti in 0..t {
        for ci in 0..c {
            let s = masked.slice_mut(ti, ci);
            for hi in 0..h {
                for wi in 0..w {
                    if !m.get(ti, wi) {
                        s[hi * w + wi] = Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
    let imgs = ifft2c(&masked)?;
    let mut out = ComplexCine::zeros((t, 1, h, w), DomainTag::Image)?;
    for ti in 0..t {
        for ci in 0..c {
            let src = imgs.slice(ti, ci).to_vec();
            let s = sens.coil(ci);
            let dst = out.slice_mut(ti, 0);
            for i in 0..h * w {
                dst[i] += src[i] * s[i].conj();
            }
        }
    }
    Ok(out)
}
