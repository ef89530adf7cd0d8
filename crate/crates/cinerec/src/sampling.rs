//! Cartesian phase-encode line sampling: variable-density Latin-Hypercube
//! mask generation, retrospective undersampling and the hard
//! data-consistency projection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::Cxt;
use crate::tensor::ComplexCine;

/// Binary line-sampling pattern over (frames, phase-encode columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    bits: Vec<u8>,
    t: usize,
    w_pe: usize,
    pub n_acs: usize,
    pub target_r: f64,
}

impl SamplingMask {
    pub fn dims(&self) -> (usize, usize) {
        (self.t, self.w_pe)
    }

    #[inline]
    pub fn get(&self, t: usize, w: usize) -> bool {
        self.bits[t * self.w_pe + w] == 1
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn lines_in_frame(&self, t: usize) -> usize {
        self.bits[t * self.w_pe..(t + 1) * self.w_pe].iter().map(|&b| b as usize).sum()
    }

    /// Stored on disk as a real32 tensor of 0.0/1.0 with dims (T, W_pe).
    pub fn to_cxt(&self) -> Cxt {
        Cxt::Real32 {
            dims: vec![self.t as u64, self.w_pe as u64],
            data: self.bits.iter().map(|&b| b as f32).collect(),
        }
    }

    pub fn from_cxt(t: &Cxt) -> Result<Self> {
        match t {
            Cxt::Real32 { dims, data } if dims.len() == 2 => {
                let bits: Vec<u8> = data
                    .iter()
                    .map(|&v| {
                        if v == 0.0 {
                            Ok(0u8)
                        } else if v == 1.0 {
                            Ok(1u8)
                        } else {
                            Err(Error::Format {
                                offset: 0,
                                msg: format!("mask entries must be 0.0 or 1.0, got {v}"),
                            })
                        }
                    })
                    .collect::<Result<_>>()?;
                let (t, w_pe) = (dims[0] as usize, dims[1] as usize);
                let ones = bits.iter().map(|&b| b as usize).sum::<usize>();
                let target_r = if ones > 0 { (t * w_pe) as f64 / ones as f64 } else { f64::INFINITY };
                Ok(SamplingMask { bits, t, w_pe, n_acs: 0, target_r })
            }
            _ => Err(Error::Format { offset: 4, msg: "expected real32 rank-2 tensor for mask".into() }),
        }
    }
}

/// Generate a variable-density Latin-Hypercube mask.
///
/// Every frame samples exactly `round(w_pe / r)` lines: `n_acs` fixed center
/// lines plus one line per stratum. Non-center lines are partitioned, in index
/// order, into strata of equal total density weight
/// `p(k) = (1 - |k - w_pe/2| / (w_pe/2))^density_decay`; each stratum cycles
/// through a seeded random permutation of its lines over time, so any L
/// consecutive frames cover L distinct lines of a size-L stratum.
pub fn generate_lh_mask(
    w_pe: usize,
    t: usize,
    r: f64,
    n_acs: usize,
    density_decay: f64,
    seed: u64,
) -> Result<SamplingMask> {
    if t < 1 {
        return Err(Error::Parameter(format!("need t >= 1, got {t}")));
    }
    let (acs, strata) = stratify(w_pe, r, n_acs, density_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![0u8; t * w_pe];
    for frame in 0..t {
        for k in acs.clone() {
            bits[frame * w_pe + k] = 1;
        }
    }
    for stratum in &strata {
        let mut perm = stratum.clone();
        perm.shuffle(&mut rng);
        let len = perm.len();
        for frame in 0..t {
            bits[frame * w_pe + perm[frame % len]] = 1;
        }
    }

    Ok(SamplingMask { bits, t, w_pe, n_acs, target_r: r })
}

/// The deterministic part of mask construction: the ACS line range and the
/// contiguous equal-weight strata of non-center lines. Exposed so the Latin
/// coverage property (any L consecutive frames cover L distinct lines of a
/// size-L stratum) can be checked against the true stratum boundaries.
pub fn stratify(
    w_pe: usize,
    r: f64,
    n_acs: usize,
    density_decay: f64,
) -> Result<(std::ops::Range<usize>, Vec<Vec<usize>>)> {
    if w_pe < 2 {
        return Err(Error::Parameter(format!("need w_pe >= 2, got {w_pe}")));
    }
    if !(r >= 1.0) {
        return Err(Error::Parameter(format!("acceleration must be >= 1, got {r}")));
    }
    let n_samp = (w_pe as f64 / r).round() as usize;
    if n_acs >= n_samp {
        return Err(Error::Parameter(format!(
            "n_acs = {n_acs} leaves no random lines (round({w_pe}/{r}) = {n_samp})"
        )));
    }
    let n_rand = n_samp - n_acs;
    let center = w_pe / 2;
    let acs_start = center - n_acs / 2;
    let acs = acs_start..acs_start + n_acs;

    let non_center: Vec<usize> = (0..w_pe).filter(|k| !acs.contains(k)).collect();
    if n_rand > non_center.len() {
        return Err(Error::Parameter(format!(
            "need {n_rand} strata but only {} non-center lines",
            non_center.len()
        )));
    }

    let half = w_pe as f64 / 2.0;
    let weights: Vec<f64> = non_center
        .iter()
        .map(|&k| {
            let d = (k as f64 - center as f64).abs() / half;
            (1.0 - d).max(0.0).powf(density_decay)
        })
        .collect();
    let total: f64 = weights.iter().sum();

    // Greedy equal-weight partition into n_rand contiguous nonempty strata.
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(n_rand);
    let mut cum = 0.0;
    let mut current: Vec<usize> = Vec::new();
    for (i, (&line, &wgt)) in non_center.iter().zip(weights.iter()).enumerate() {
        current.push(line);
        cum += wgt;
        let remaining_lines = non_center.len() - i - 1;
        let remaining_strata = n_rand - strata.len() - 1;
        let boundary = (strata.len() + 1) as f64 * total / n_rand as f64;
        let must_close = remaining_lines == remaining_strata;
        let may_close = remaining_lines >= remaining_strata + 1 || remaining_strata == 0;
        if strata.len() < n_rand - 1 && (must_close || (cum >= boundary && may_close)) {
            strata.push(std::mem::take(&mut current));
        }
    }
    strata.push(current);
    debug_assert_eq!(strata.len(), n_rand);
    debug_assert!(strata.iter().all(|s| !s.is_empty()));
    Ok((acs, strata))
}

/// T * W_pe divided by the number of sampled entries.
pub fn effective_acceleration(m: &SamplingMask) -> Result<f64> {
    let ones = m.ones();
    if ones == 0 {
        return Err(Error::Parameter("degenerate all-zero mask".into()));
    }
    let (t, w) = m.dims();
    Ok((t * w) as f64 / ones as f64)
}

fn check_mask_shape(k: &ComplexCine, m: &SamplingMask, op: &str) -> Result<()> {
    let (t, _, _, w) = k.dims();
    if m.dims() != (t, w) {
        return Err(Error::Shape(format!(
            "{op}: mask dims {:?} do not match k-space (T,W) = ({t},{w})",
            m.dims()
        )));
    }
    Ok(())
}

/// Zero out unsampled phase-encode columns; the readout (row) dimension is
/// fully retained.
pub fn undersample(k_full: &ComplexCine, m: &SamplingMask) -> Result<ComplexCine> {
    check_mask_shape(k_full, m, "undersample")?;
    let (t, c, h, w) = k_full.dims();
    let mut out = k_full.clone();
    for ti in 0..t {
        for ci in 0..c {
            let s = out.slice_mut(ti, ci);
            for hi in 0..h {
                for wi in 0..w {
                    if !m.get(ti, wi) {
                        s[hi * w + wi] = num_complex::Complex64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Hard data consistency: sampled entries are replaced by the acquired values.
pub fn data_consistency(
    k_pred: &ComplexCine,
    k_acq: &ComplexCine,
    m: &SamplingMask,
) -> Result<ComplexCine> {
    if k_pred.dims() != k_acq.dims() {
        return Err(Error::Shape(format!(
            "data_consistency: predicted dims {:?} != acquired dims {:?}",
            k_pred.dims(),
            k_acq.dims()
        )));
    }
    check_mask_shape(k_pred, m, "data_consistency")?;
    let (t, c, h, w) = k_pred.dims();
    let mut out = k_pred.clone();
    for ti in 0..t {
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    if m.get(ti, wi) {
                        let idx = out.idx(ti, ci, hi, wi);
                        out.data[idx] = k_acq.data[idx];
                    }
                }
            }
        }
    }
    Ok(out)
}
