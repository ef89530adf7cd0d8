//! Unrolled reconstruction network: per iteration, three bidirectional
//! convolutional-recurrent layers with hidden-state channel compression, a
//! 2-channel projection convolution, an identity skip (residual level 1), and
//! a hard data-consistency layer; a global skip from the zero-filled input is
//! added before the final DC (residual level 2).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{RTensor, Real, Tape};
use crate::error::{Error, Result};
use crate::sampling::SamplingMask;
use crate::tensor::{rss_combine, ComplexCine, DomainTag, RealImageSequence};

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub n_iters: usize,
    pub n_bcrnn_layers: usize,
    /// Feature maps per BCRNN direction (the paper-scale value is 48).
    pub feat_channels: usize,
    /// Channels of the compressed recurrent state.
    pub hidden_channels: usize,
    /// Fixed at 2 (re/im).
    pub io_channels: usize,
    /// Reuse one iteration's weights for all unrolled iterations.
    pub share_weights: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            n_iters: 5,
            n_bcrnn_layers: 3,
            feat_channels: 48,
            hidden_channels: 2,
            io_channels: 2,
            share_weights: false,
        }
    }
}

impl ArchConfig {
    /// Reduced configuration for desk-scale training and CI.
    pub fn desk() -> Self {
        ArchConfig { n_iters: 3, feat_channels: 16, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iters < 1 || self.n_bcrnn_layers < 1 {
            return Err(Error::Parameter("arch: n_iters and n_bcrnn_layers must be >= 1".into()));
        }
        if self.hidden_channels < 1 || self.feat_channels < self.hidden_channels {
            return Err(Error::Parameter("arch: need feat_channels >= hidden_channels >= 1".into()));
        }
        if self.io_channels != 2 {
            return Err(Error::Parameter("arch: io_channels is fixed at 2 (re/im)".into()));
        }
        Ok(())
    }

    fn stored_iters(&self) -> usize {
        if self.share_weights {
            1
        } else {
            self.n_iters
        }
    }

    fn layer_c_in(&self, l: usize) -> usize {
        if l == 0 {
            self.io_channels
        } else {
            self.feat_channels
        }
    }

    /// Closed-form total parameter count.
    pub fn param_count(&self) -> usize {
        let k = self.feat_channels;
        let hid = self.hidden_channels;
        let mut per_iter = 0;
        for l in 0..self.n_bcrnn_layers {
            let c_in = self.layer_c_in(l);
            // per direction: W_x, W_h, b, W_r, b_r
            per_iter += 2 * (k * c_in * 9 + k * hid * 9 + k + hid * k * 9 + hid);
        }
        per_iter += 2 * k * 9 + 2; // projection conv
        self.stored_iters() * per_iter
    }
}

/// Tensor slots per (layer, direction) group, in storage order.
const SLOT_W_X: usize = 0;
const SLOT_W_H: usize = 1;
const SLOT_B: usize = 2;
const SLOT_W_R: usize = 3;
const SLOT_B_R: usize = 4;
const SLOTS_PER_DIR: usize = 5;

/// Named flat parameter list in a fixed deterministic order.
#[derive(Debug, Clone)]
pub struct ModelParams<T: Real> {
    pub arch: ArchConfig,
    pub names: Vec<String>,
    pub tensors: Vec<RTensor<T>>,
}

fn group_index(arch: &ArchConfig, iter: usize, layer: usize, dir: usize, slot: usize) -> usize {
    let per_iter = arch.n_bcrnn_layers * 2 * SLOTS_PER_DIR + 2;
    iter * per_iter + (layer * 2 + dir) * SLOTS_PER_DIR + slot
}

fn proj_index(arch: &ArchConfig, iter: usize, slot: usize) -> usize {
    let per_iter = arch.n_bcrnn_layers * 2 * SLOTS_PER_DIR + 2;
    iter * per_iter + arch.n_bcrnn_layers * 2 * SLOTS_PER_DIR + slot
}

impl<T: Real> ModelParams<T> {
    /// Scaled uniform fan-in initialization for weights, zeros for biases and
    /// for the projection convs (so the untrained network is identity + DC).
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let k = arch.feat_channels;
        let hid = arch.hidden_channels;
        let weight = |rng: &mut ChaCha8Rng, shape: Vec<usize>| -> RTensor<T> {
            let fan_in: usize = shape[1..].iter().product();
            let s = (1.0 / fan_in as f64).sqrt();
            let data = (0..shape.iter().product())
                .map(|_| T::of_f64(rng.gen::<f64>() * 2.0 * s - s))
                .collect();
            RTensor::new(data, shape).expect("init shapes are consistent")
        };
        for i in 0..arch.stored_iters() {
            for l in 0..arch.n_bcrnn_layers {
                let c_in = arch.layer_c_in(l);
                for dir in ["fwd", "bwd"] {
                    let base = format!("iter{i}.layer{l}.{dir}");
                    names.push(format!("{base}.w_x"));
                    tensors.push(weight(&mut rng, vec![k, c_in, 3, 3]));
                    names.push(format!("{base}.w_h"));
                    tensors.push(weight(&mut rng, vec![k, hid, 3, 3]));
                    names.push(format!("{base}.b"));
                    tensors.push(RTensor::zeros(&[k]));
                    names.push(format!("{base}.w_r"));
                    tensors.push(weight(&mut rng, vec![hid, k, 3, 3]));
                    names.push(format!("{base}.b_r"));
                    tensors.push(RTensor::zeros(&[hid]));
                }
            }
            names.push(format!("iter{i}.proj.w"));
            tensors.push(RTensor::zeros(&[2, k, 3, 3]));
            names.push(format!("iter{i}.proj.b"));
            tensors.push(RTensor::zeros(&[2]));
        }
        Ok(ModelParams { arch: arch.clone(), names, tensors })
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&RTensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    /// Register every parameter as a tape leaf, in storage order.
    pub fn leaves(&self, tape: &mut Tape<T>) -> Vec<usize> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }
}

/// MSE + alpha * (1 - SSIM on magnitudes) training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub ssim_weight: f64,
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { ssim_weight: 0.1, window: 7, k1: 0.01, k2: 0.03 }
    }
}

/// One bidirectional convolutional-recurrent layer on the tape.
/// `ids[group_index(...)]` must hold the parameter leaf ids.
pub fn bcrnn_layer_on_tape<T: Real>(
    tape: &mut Tape<T>,
    x_seq: usize,
    arch: &ArchConfig,
    ids: &[usize],
    iter: usize,
    layer: usize,
) -> Result<usize> {
    let t = tape.value(x_seq).shape[0];
    let mut dir_frames: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for dir in 0..2 {
        let w_x = ids[group_index(arch, iter, layer, dir, SLOT_W_X)];
        let w_h = ids[group_index(arch, iter, layer, dir, SLOT_W_H)];
        let b = ids[group_index(arch, iter, layer, dir, SLOT_B)];
        let w_r = ids[group_index(arch, iter, layer, dir, SLOT_W_R)];
        let b_r = ids[group_index(arch, iter, layer, dir, SLOT_B_R)];
        // the input conv has no recurrent dependency: batch it over time
        let wxs = tape.conv2d_seq(x_seq, w_x, Some(b))?;
        let mut frames = vec![0usize; t];
        let order: Vec<usize> = if dir == 0 { (0..t).collect() } else { (0..t).rev().collect() };
        let mut hidden: Option<usize> = None;
        for &f in &order {
            let mut pre = tape.slice_frame(wxs, f)?;
            if let Some(h) = hidden {
                let rec = tape.conv2d(h, w_h, None)?;
                pre = tape.add(pre, rec)?;
            }
            let a = tape.relu(pre)?;
            let compressed = tape.conv2d(a, w_r, Some(b_r))?;
            hidden = Some(tape.relu(compressed)?);
            frames[f] = a;
        }
        dir_frames[dir] = frames;
    }
    let summed: Vec<usize> = (0..t)
        .map(|f| tape.add(dir_frames[0][f], dir_frames[1][f]))
        .collect::<Result<_>>()?;
    tape.stack_frames(&summed)
}

/// One unrolled iteration: 3 BCRNN layers, projection conv, identity skip.
pub fn crnn_block_on_tape<T: Real>(
    tape: &mut Tape<T>,
    x_seq: usize,
    arch: &ArchConfig,
    ids: &[usize],
    iter: usize,
) -> Result<usize> {
    let mut h = x_seq;
    for l in 0..arch.n_bcrnn_layers {
        h = bcrnn_layer_on_tape(tape, h, arch, ids, iter, l)?;
    }
    let w_p = ids[proj_index(arch, iter, 0)];
    let b_p = ids[proj_index(arch, iter, 1)];
    let proj = tape.conv2d_seq(h, w_p, Some(b_p))?;
    tape.add(x_seq, proj)
}

/// Build the full unrolled forward pass on `tape`. Returns the final image
/// node and the terminal k-space node (the DC output of the last iteration).
pub fn forward_on_tape<T: Real>(
    tape: &mut Tape<T>,
    arch: &ArchConfig,
    ids: &[usize],
    k_acq: &RTensor<T>,
    m: &SamplingMask,
) -> Result<(usize, usize)> {
    arch.validate()?;
    let k_leaf = tape.leaf(k_acq.clone());
    let x0 = tape.fft2c_op(k_leaf, true)?;
    let mut x = x0;
    let mut k_dc = k_leaf;
    for i in 0..arch.n_iters {
        let si = if arch.share_weights { 0 } else { i };
        let mut xt = crnn_block_on_tape(tape, x, arch, ids, si)?;
        if i + 1 == arch.n_iters {
            xt = tape.add(xt, x0)?; // global residual from the zero-filled input
        }
        let k_pred = tape.fft2c_op(xt, false)?;
        k_dc = tape.data_consistency(k_pred, k_acq, m)?;
        x = tape.fft2c_op(k_dc, true)?;
        if tape.value(x).data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("forward: non-finite activations at iteration {}", i + 1)));
        }
    }
    Ok((x, k_dc))
}

/// Re/im channel split of a single-coil complex sequence: -> (T,2,H,W).
pub fn complex_to_channels<T: Real>(x: &ComplexCine) -> Result<RTensor<T>> {
    let (t, c, h, w) = x.dims();
    if c != 1 {
        return Err(Error::Shape(format!("expected a single-coil tensor, got {c} coils")));
    }
    let hw = h * w;
    let mut data = vec![T::zero(); t * 2 * hw];
    for f in 0..t {
        let s = x.slice(f, 0);
        for i in 0..hw {
            data[f * 2 * hw + i] = T::of_f64(s[i].re);
            data[f * 2 * hw + hw + i] = T::of_f64(s[i].im);
        }
    }
    RTensor::new(data, vec![t, 2, h, w])
}

/// Inverse of [`complex_to_channels`].
pub fn channels_to_complex<T: Real>(x: &RTensor<T>, domain: DomainTag) -> Result<ComplexCine> {
    let (t, c, h, w) = match x.shape.as_slice() {
        &[t, c, h, w] => (t, c, h, w),
        s => return Err(Error::Shape(format!("expected rank-4 tensor, got {s:?}"))),
    };
    if c != 2 {
        return Err(Error::Shape(format!("expected 2 channels, got {c}")));
    }
    let hw = h * w;
    let mut out = ComplexCine::zeros((t, 1, h, w), domain)?;
    for f in 0..t {
        let dst = out.slice_mut(f, 0);
        for i in 0..hw {
            dst[i] = num_complex::Complex64::new(x.data[f * 2 * hw + i].as_f64(), x.data[f * 2 * hw + hw + i].as_f64());
        }
    }
    Ok(out)
}

/// Single-coil inference. Returns the image-domain output and the terminal
/// k-space (whose sampled entries equal `k_acq` exactly, by construction).
pub fn forward<T: Real>(
    model: &ModelParams<T>,
    k_acq: &ComplexCine,
    m: &SamplingMask,
) -> Result<(ComplexCine, ComplexCine)> {
    k_acq.assert_domain(DomainTag::Kspace, "forward")?;
    let k_in = complex_to_channels::<T>(k_acq)?;
    let mut tape = Tape::new();
    let ids = model.leaves(&mut tape);
    let (img, k_dc) = forward_on_tape(&mut tape, &model.arch, &ids, &k_in, m)?;
    Ok((
        channels_to_complex(tape.value(img), DomainTag::Image)?,
        channels_to_complex(tape.value(k_dc), DomainTag::Kspace)?,
    ))
}

/// Multi-coil reconstruction: forward per coil with shared weights, RSS
/// combination. Also returns the stacked complex coil images.
pub fn recon_crnn<T: Real>(
    k_us: &ComplexCine,
    m: &SamplingMask,
    model: &ModelParams<T>,
) -> Result<(RealImageSequence, ComplexCine)> {
    let (t, n_coils, h, w) = k_us.dims();
    let mut coil_images = ComplexCine::zeros((t, n_coils, h, w), DomainTag::Image)?;
    for c in 0..n_coils {
        let mut single = ComplexCine::zeros((t, 1, h, w), DomainTag::Kspace)?;
        for f in 0..t {
            single.slice_mut(f, 0).copy_from_slice(&k_us.slice(f, c)[..]);
        }
        let (img, _) = forward(model, &single, m)?;
        for f in 0..t {
            coil_images.slice_mut(f, c).copy_from_slice(img.slice(f, 0));
        }
    }
    Ok((rss_combine(&coil_images), coil_images))
}

/// Differentiable loss node: MSE(pred, target) + alpha * (1 - SSIM(|pred|,
/// |target|)), SSIM with a uniform window over valid pixels, mean over frames.
pub fn loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    pred: usize,
    target: &RTensor<T>,
    cfg: &LossConfig,
) -> Result<usize> {
    if tape.value(pred).shape != target.shape {
        return Err(Error::Shape(format!(
            "loss: pred shape {:?} != target shape {:?}",
            tape.value(pred).shape, target.shape
        )));
    }
    let tgt = tape.leaf(target.clone());
    let diff = tape.sub(pred, tgt)?;
    let sq = tape.mul(diff, diff)?;
    let mse = tape.mean_all(sq)?;
    if cfg.ssim_weight == 0.0 {
        return Ok(mse);
    }

    let mag_p = tape.magnitude(pred)?;
    let mag_t = tape.magnitude(tgt)?;
    let l = tape.value(mag_t).data.iter().fold(T::zero(), |a, &b| a.max(b)).as_f64().max(1e-6);
    let c1 = T::of_f64((cfg.k1 * l).powi(2));
    let c2 = T::of_f64((cfg.k2 * l).powi(2));

    let mu_a = tape.box_filter(mag_p, cfg.window)?;
    let mu_b = tape.box_filter(mag_t, cfg.window)?;
    let pp = tape.mul(mag_p, mag_p)?;
    let tt = tape.mul(mag_t, mag_t)?;
    let pt = tape.mul(mag_p, mag_t)?;
    let m_pp = tape.box_filter(pp, cfg.window)?;
    let m_tt = tape.box_filter(tt, cfg.window)?;
    let m_pt = tape.box_filter(pt, cfg.window)?;

    let mu_ab = tape.mul(mu_a, mu_b)?;
    let mu_aa = tape.mul(mu_a, mu_a)?;
    let mu_bb = tape.mul(mu_b, mu_b)?;
    let var_a = tape.sub(m_pp, mu_aa)?;
    let var_b = tape.sub(m_tt, mu_bb)?;
    let cov = tape.sub(m_pt, mu_ab)?;

    let two_mu = tape.scale(mu_ab, T::of_f64(2.0))?;
    let num1 = tape.add_scalar(two_mu, c1)?;
    let two_cov = tape.scale(cov, T::of_f64(2.0))?;
    let num2 = tape.add_scalar(two_cov, c2)?;
    let num = tape.mul(num1, num2)?;

    let mu_sum = tape.add(mu_aa, mu_bb)?;
    let den1 = tape.add_scalar(mu_sum, c1)?;
    let var_sum = tape.add(var_a, var_b)?;
    let den2 = tape.add_scalar(var_sum, c2)?;
    let den = tape.mul(den1, den2)?;

    let ssim_map = tape.div(num, den)?;
    let ssim_mean = tape.mean_all(ssim_map)?;
    let neg = tape.scale(ssim_mean, T::of_f64(-1.0))?;
    let one_minus = tape.add_scalar(neg, T::one())?;
    let weighted = tape.scale(one_minus, T::of_f64(cfg.ssim_weight))?;
    tape.add(mse, weighted)
}
