//! Image-quality metrics on magnitude image sequences: SSIM with a uniform
//! 7x7 window, PSNR and NMSE. The reference image is always the second
//! argument.

use crate::error::{Error, Result};
use crate::tensor::RealImageSequence;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// One CSV row of the evaluation output.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub method: String,
    pub per_frame_ssim: Vec<f64>,
    pub mean_ssim: f64,
    pub per_frame_psnr: Vec<f64>,
    pub mean_psnr: f64,
    pub per_frame_nmse: Vec<f64>,
    pub mean_nmse: f64,
    pub seconds: f64,
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "method,frame,ssim,psnr_db,nmse,seconds\n"
    }

    /// Per-frame rows followed by a `mean` row.
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for f in 0..self.per_frame_ssim.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.method, f, self.per_frame_ssim[f], self.per_frame_psnr[f], self.per_frame_nmse[f], self.seconds
            ));
        }
        s.push_str(&format!(
            "{},mean,{},{},{},{}\n",
            self.method, self.mean_ssim, self.mean_psnr, self.mean_nmse, self.seconds
        ));
        s
    }
}

pub fn evaluate(
    method: &str,
    a: &RealImageSequence,
    reference: &RealImageSequence,
    seconds: f64,
) -> Result<MetricReport> {
    let (per_frame_ssim, mean_ssim) = ssim(a, reference, None)?;
    let peak = reference.max();
    let (t, h, w) = a.dims();
    let mut per_frame_psnr = Vec::with_capacity(t);
    let mut per_frame_nmse = Vec::with_capacity(t);
    for ti in 0..t {
        let af = RealImageSequence::new(a.frame(ti).to_vec(), (1, h, w))?;
        let bf = RealImageSequence::new(reference.frame(ti).to_vec(), (1, h, w))?;
        per_frame_psnr.push(psnr(&af, &bf, Some(peak))?);
        per_frame_nmse.push(nmse(&af, &bf)?);
    }
    Ok(MetricReport {
        method: method.to_string(),
        mean_ssim,
        per_frame_ssim,
        mean_psnr: per_frame_psnr.iter().sum::<f64>() / t as f64,
        per_frame_psnr,
        mean_nmse: per_frame_nmse.iter().sum::<f64>() / t as f64,
        per_frame_nmse,
        seconds,
    })
}

fn check_dims(a: &RealImageSequence, b: &RealImageSequence) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("metric dims {:?} != {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Windowed mean over valid positions (no padding).
fn box_means(frame: &[f64], h: usize, w: usize, win: usize) -> Vec<f64> {
    let oh = h - win + 1;
    let ow = w - win + 1;
    let mut out = vec![0.0; oh * ow];
    let inv = 1.0 / (win * win) as f64;
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for dy in 0..win {
                for dx in 0..win {
                    s += frame[(y + dy) * w + (x + dx)];
                }
            }
            out[y * ow + x] = s * inv;
        }
    }
    out
}

/// SSIM per frame plus the mean over frames. `b` is the reference; the
/// dynamic range defaults to max(b).
pub fn ssim(
    a: &RealImageSequence,
    b: &RealImageSequence,
    dynamic_range: Option<f64>,
) -> Result<(Vec<f64>, f64)> {
    check_dims(a, b)?;
    let (t, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Parameter(format!(
            "ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got ({h},{w})"
        )));
    }
    let l = match dynamic_range {
        Some(l) => l,
        None => {
            let l = b.max();
            if l == 0.0 {
                if a.data == b.data {
                    return Ok((vec![1.0; t], 1.0));
                }
                return Err(Error::Parameter(
                    "reference has zero dynamic range and images differ".into(),
                ));
            }
            l
        }
    };
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let win = SSIM_WINDOW;
    let mut per_frame = Vec::with_capacity(t);
    for ti in 0..t {
        let fa = a.frame(ti);
        let fb = b.frame(ti);
        let mu_a = box_means(fa, h, w, win);
        let mu_b = box_means(fb, h, w, win);
        let aa: Vec<f64> = fa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = fb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = fa.iter().zip(fb).map(|(x, y)| x * y).collect();
        let m_aa = box_means(&aa, h, w, win);
        let m_bb = box_means(&bb, h, w, win);
        let m_ab = box_means(&ab, h, w, win);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let var_a = m_aa[i] - mu_a[i] * mu_a[i];
            let var_b = m_bb[i] - mu_b[i] * mu_b[i];
            let cov = m_ab[i] - mu_a[i] * mu_b[i];
            sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2))
                / ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
        }
        per_frame.push(sum / mu_a.len() as f64);
    }
    let mean = per_frame.iter().sum::<f64>() / t as f64;
    Ok((per_frame, mean))
}

/// 10 log10(peak^2 / MSE), capped at 200 dB when MSE < 1e-20.
pub fn psnr(a: &RealImageSequence, b: &RealImageSequence, peak: Option<f64>) -> Result<f64> {
    check_dims(a, b)?;
    let peak = peak.unwrap_or_else(|| b.max());
    let n = a.data.len() as f64;
    let mse: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    if mse < 1e-20 {
        return Ok(200.0);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// ||a - b||^2 / ||b||^2.
pub fn nmse(a: &RealImageSequence, b: &RealImageSequence) -> Result<f64> {
    check_dims(a, b)?;
    let den: f64 = b.data.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Parameter("nmse: zero reference".into()));
    }
    let num: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(num / den)
}
