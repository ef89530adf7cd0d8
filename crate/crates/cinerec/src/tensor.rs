//! Complex cine container and coil combination.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Whether a [`ComplexCine`] currently holds image-space or k-space data.
/// Metadata only; operations assert the tag they expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Image,
    Kspace,
}

/// Complex-valued cine tensor, row-major over (frames, coils, rows, columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCine {
    pub data: Vec<Complex64>,
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    pub domain: DomainTag,
}

impl ComplexCine {
    pub fn new(
        data: Vec<Complex64>,
        (t, c, h, w): (usize, usize, usize, usize),
        domain: DomainTag,
    ) -> Result<Self> {
        if t < 1 || c < 1 || h < 2 || w < 2 {
            return Err(Error::Shape(format!(
                "cine dims must satisfy T>=1, C>=1, H>=2, W>=2; got ({t},{c},{h},{w})"
            )));
        }
        if data.len() != t * c * h * w {
            return Err(Error::Shape(format!(
                "data length {} does not match dims ({t},{c},{h},{w})",
                data.len()
            )));
        }
        Ok(Self { data, t, c, h, w, domain })
    }

    pub fn zeros((t, c, h, w): (usize, usize, usize, usize), domain: DomainTag) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); t * c * h * w], (t, c, h, w), domain)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.t, self.c, self.h, self.w)
    }

    #[inline]
    pub fn idx(&self, t: usize, c: usize, h: usize, w: usize) -> usize {
        ((t * self.c + c) * self.h + h) * self.w + w
    }

    /// Contiguous (H, W) slice for one frame/coil pair.
    pub fn slice(&self, t: usize, c: usize) -> &[Complex64] {
        let start = (t * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    pub fn slice_mut(&mut self, t: usize, c: usize) -> &mut [Complex64] {
        let start = (t * self.c + c) * self.h * self.w;
        &mut self.data[start..start + self.h * self.w]
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn assert_domain(&self, expected: DomainTag, op: &str) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Precondition(format!(
                "{op} expects {expected:?}-domain input, got {:?}",
                self.domain
            )));
        }
        Ok(())
    }
}

/// Nonnegative real image sequence (T, H, W); magnitude images.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImageSequence {
    pub data: Vec<f64>,
    t: usize,
    h: usize,
    w: usize,
}

impl RealImageSequence {
    pub fn new(data: Vec<f64>, (t, h, w): (usize, usize, usize)) -> Result<Self> {
        if data.len() != t * h * w {
            return Err(Error::Shape(format!(
                "data length {} does not match dims ({t},{h},{w})",
                data.len()
            )));
        }
        if data.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Numerical(
                "magnitude image must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { data, t, h, w })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.h * self.w..(t + 1) * self.h * self.w]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }
}

/// Per-coil complex sensitivity maps (coils, H, W).
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSensitivities {
    pub data: Vec<Complex64>,
    n_coils: usize,
    h: usize,
    w: usize,
}

impl CoilSensitivities {
    pub fn new(data: Vec<Complex64>, (n_coils, h, w): (usize, usize, usize)) -> Result<Self> {
        if data.len() != n_coils * h * w {
            return Err(Error::Shape(format!(
                "data length {} does not match dims ({n_coils},{h},{w})",
                data.len()
            )));
        }
        Ok(Self { data, n_coils, h, w })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_coils, self.h, self.w)
    }

    pub fn coil(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }
}

/// Root-sum-of-squares coil combination: out[t,h,w] = sqrt(sum_c |x[t,c,h,w]|^2).
pub fn rss_combine(x: &ComplexCine) -> RealImageSequence {
    let (t, c, h, w) = x.dims();
    let mut out = vec![0.0f64; t * h * w];
    for ti in 0..t {
        for ci in 0..c {
            let s = x.slice(ti, ci);
            let o = &mut out[ti * h * w..(ti + 1) * h * w];
            for (ov, zv) in o.iter_mut().zip(s.iter()) {
                *ov += zv.norm_sqr();
            }
        }
    }
    for v in &mut out {
        *v = v.sqrt();
    }
    RealImageSequence::new(out, (t, h, w)).expect("rss output is nonnegative by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dims() {
        assert!(ComplexCine::new(vec![], (0, 1, 4, 4), DomainTag::Image).is_err());
        assert!(ComplexCine::new(vec![Complex64::new(0.0, 0.0); 15], (1, 1, 4, 4), DomainTag::Image).is_err());
    }

    #[test]
    fn rss_single_coil_is_magnitude() {
        let data = vec![
            Complex64::new(3.0, 4.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(0.0, 0.0),
        ];
        let x = ComplexCine::new(data, (1, 1, 2, 2), DomainTag::Image).unwrap();
        let m = rss_combine(&x);
        assert_eq!(m.data, vec![5.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn rss_two_coils_3_4_5() {
        let mut x = ComplexCine::zeros((1, 2, 2, 2), DomainTag::Image).unwrap();
        let i = x.idx(0, 0, 1, 1);
        x.data[i] = Complex64::new(3.0, 0.0);
        let i = x.idx(0, 1, 1, 1);
        x.data[i] = Complex64::new(0.0, 4.0);
        let m = rss_combine(&x);
        assert_eq!(m.frame(0)[3], 5.0);
    }

    #[test]
    fn rss_invariant_under_per_coil_phase() {
        let mut x = ComplexCine::zeros((2, 3, 4, 4), DomainTag::Image).unwrap();
        for (i, z) in x.data.iter_mut().enumerate() {
            *z = Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
        }
        let base = rss_combine(&x);
        let phases = [0.3, -1.2, 2.9];
        let mut y = x.clone();
        let (t, c, h, w) = y.dims();
        for ti in 0..t {
            for ci in 0..c {
                let rot = Complex64::from_polar(1.0, phases[ci]);
                for hi in 0..h {
                    for wi in 0..w {
                        let idx = y.idx(ti, ci, hi, wi);
                        y.data[idx] *= rot;
                    }
                }
            }
        }
        let rotated = rss_combine(&y);
        for (a, b) in base.data.iter().zip(rotated.data.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
