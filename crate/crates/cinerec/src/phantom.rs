//! Synthetic beating-heart multi-coil cine generator: analytic ring phantom,
//! smooth boundary coil maps and the retrospective acquisition simulator.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::fft2c;
use crate::sampling::{undersample, SamplingMask};
use crate::tensor::{CoilSensitivities, ComplexCine, DomainTag};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub h: usize,
    pub w: usize,
    pub t: usize,
    pub n_coils: usize,
    /// Myocardium inner/outer radii, fraction of min(h, w).
    pub r_inner: f64,
    pub r_outer: f64,
    /// Radial oscillation of the inner radius, fraction of itself.
    pub beat_amplitude: f64,
    /// Cardiac cycles over the t frames.
    pub n_beats: f64,
    /// Complex Gaussian noise std relative to peak k-space signal.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            h: 64,
            w: 64,
            t: 12,
            n_coils: 8,
            r_inner: 0.15,
            r_outer: 0.28,
            beat_amplitude: 0.08,
            n_beats: 1.0,
            noise_sigma: 0.01,
            seed: 7,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h < 2 || self.w < 2 || self.t < 1 || self.n_coils < 1 {
            return Err(Error::Parameter(format!(
                "phantom dims must satisfy h,w >= 2, t >= 1, coils >= 1; got ({},{},{},{})",
                self.h, self.w, self.t, self.n_coils
            )));
        }
        if !(self.r_inner > 0.0 && self.r_inner < self.r_outer && self.r_outer < 0.5) {
            return Err(Error::Parameter(format!(
                "radii must satisfy 0 < r_inner < r_outer < 0.5; got r_inner={}, r_outer={}",
                self.r_inner, self.r_outer
            )));
        }
        if !(self.beat_amplitude >= 0.0 && self.beat_amplitude < self.r_inner) {
            return Err(Error::Parameter(format!(
                "beat_amplitude must be in [0, r_inner); got {}",
                self.beat_amplitude
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Parameter("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

const BODY_INTENSITY: f64 = 0.3;
const MYOCARDIUM_INTENSITY: f64 = 1.0;
const BLOOD_INTENSITY: f64 = 0.7;

/// Raised-cosine step over a 1-pixel ramp: 0 outside (d <= -0.5),
/// 1 inside (d >= 0.5), smooth in between. `d` is a signed distance in
/// pixels, positive inside the region.
fn ramp(d: f64) -> f64 {
    if d <= -0.5 {
        0.0
    } else if d >= 0.5 {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (d + 0.5)).cos())
    }
}

/// Single-coil real-valued ground truth, piecewise-smooth scene per frame.
pub fn generate_cine(cfg: &PhantomConfig) -> Result<ComplexCine> {
    cfg.validate()?;
    let (h, w, t) = (cfg.h, cfg.w, cfg.t);
    let scale = h.min(w) as f64;
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    // body ellipse semi-axes
    let ay = 0.44 * h as f64;
    let ax = 0.40 * w as f64;

    let mut out = ComplexCine::zeros((t, 1, h, w), DomainTag::Image)?;
    for ti in 0..t {
        let phase = 2.0 * std::f64::consts::PI * cfg.n_beats * ti as f64 / t as f64;
        let r_in = cfg.r_inner * (1.0 + cfg.beat_amplitude * phase.sin()) * scale;
        let r_out = cfg.r_outer * scale;
        let frame = out.slice_mut(ti, 0);
        for y in 0..h {
            for x in 0..w {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                let r = (dy * dy + dx * dx).sqrt();
                // ellipse signed distance approximated radially
                let rho = ((dy / ay).powi(2) + (dx / ax).powi(2)).sqrt();
                let d_body = (1.0 - rho) * ay.min(ax);
                let mut v = BODY_INTENSITY * ramp(d_body);
                let s_outer = ramp(r_out - r);
                v = v * (1.0 - s_outer) + MYOCARDIUM_INTENSITY * s_outer;
                let s_inner = ramp(r_in - r);
                v = v * (1.0 - s_inner) + BLOOD_INTENSITY * s_inner;
                frame[y * w + x] = Complex64::new(v, 0.0);
            }
        }
    }
    Ok(out)
}

/// Smooth boundary-coil sensitivity maps, RSS-normalized to 1 everywhere.
pub fn generate_coil_maps(h: usize, w: usize, n_coils: usize, seed: u64) -> Result<CoilSensitivities> {
    if n_coils < 1 || h < 2 || w < 2 {
        return Err(Error::Parameter(format!(
            "coil maps need h,w >= 2 and n_coils >= 1; got ({h},{w},{n_coils})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = h.min(w) as f64;
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let sigma = 0.35 * scale; // Gaussian bump width 0.7*min(h,w) (2*sigma)
    let mut data = vec![Complex64::new(0.0, 0.0); n_coils * h * w];
    for c in 0..n_coils {
        let theta = 2.0 * std::f64::consts::PI * c as f64 / n_coils as f64;
        let by = cy + 0.5 * scale * theta.sin();
        let bx = cx + 0.5 * scale * theta.cos();
        // per-coil linear phase ramp, at most half a cycle across the image
        let uy = (rng.gen::<f64>() - 0.5) / scale;
        let ux = (rng.gen::<f64>() - 0.5) / scale;
        let phi0 = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        for y in 0..h {
            for x in 0..w {
                let r2 = ((y as f64 - by).powi(2) + (x as f64 - bx).powi(2)) / (2.0 * sigma * sigma);
                let mag = (-r2).exp();
                let phase = phi0
                    + 2.0 * std::f64::consts::PI * (uy * (y as f64 - cy) + ux * (x as f64 - cx));
                data[(c * h + y) * w + x] = Complex64::from_polar(mag, phase);
            }
        }
    }
    // normalize so RSS over coils is 1 at every pixel
    for y in 0..h {
        for x in 0..w {
            let rss: f64 = (0..n_coils)
                .map(|c| data[(c * h + y) * w + x].norm_sqr())
                .sum::<f64>()
                .sqrt();
            for c in 0..n_coils {
                data[(c * h + y) * w + x] /= rss;
            }
        }
    }
    CoilSensitivities::new(data, (n_coils, h, w))
}

/// Forward acquisition: per-coil modulation, centered FFT, additive complex
/// Gaussian noise scaled to the peak k-space magnitude, then undersampling.
pub fn simulate_acquisition(
    gt: &ComplexCine,
    sens: &CoilSensitivities,
    m: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<(ComplexCine, ComplexCine)> {
    let (t, c_gt, h, w) = gt.dims();
    let (n_coils, sh, sw) = sens.dims();
    if c_gt != 1 || sh != h || sw != w {
        return Err(Error::Shape(format!(
            "simulate_acquisition: gt must be (T,1,H,W) matching maps ({n_coils},{sh},{sw})"
        )));
    }
    let mut coil_imgs = ComplexCine::zeros((t, n_coils, h, w), DomainTag::Image)?;
    for ti in 0..t {
        let g = gt.slice(ti, 0).to_vec();
        for ci in 0..n_coils {
            let s = sens.coil(ci);
            let dst = coil_imgs.slice_mut(ti, ci);
            for i in 0..h * w {
                dst[i] = g[i] * s[i];
            }
        }
    }
    let mut k_full = fft2c(&coil_imgs)?;
    if noise_sigma > 0.0 {
        let peak = k_full.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let std = noise_sigma * peak;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in &mut k_full.data {
            let re: f64 = gauss(&mut rng);
            let im: f64 = gauss(&mut rng);
            *z += Complex64::new(re * std, im * std);
        }
    }
    let k_us = undersample(&k_full, m)?;
    Ok((k_full, k_us))
}

/// Box-Muller standard normal; keeps the noise model free of distribution
/// crates so the byte stream is pinned by ChaCha alone.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
