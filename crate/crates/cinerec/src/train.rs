//! Deterministic single-threaded training loop: Adam over seeded-shuffled
//! per-coil samples, one sequence per step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adam_step, AdamState, RTensor, Tape};
use crate::crnn::{complex_to_channels, forward_on_tape, loss_on_tape, ArchConfig, LossConfig, ModelParams};
use crate::error::{Error, Result};
use crate::sampling::SamplingMask;
use crate::tensor::{ComplexCine, DomainTag};

/// One training example: a single coil's undersampled k-space, the shared
/// mask, and that coil's fully sampled complex image.
pub struct TrainSample {
    pub k_us: ComplexCine,
    pub mask: SamplingMask,
    pub target: ComplexCine,
}

impl TrainSample {
    pub(crate) fn validate(&self, i: usize) -> Result<()> {
        self.k_us.assert_domain(DomainTag::Kspace, "train")?;
        self.target.assert_domain(DomainTag::Image, "train")?;
        if self.k_us.dims() != self.target.dims() || self.k_us.dims().1 != 1 {
            return Err(Error::Shape(format!(
                "sample {i}: k_us dims {:?} and target dims {:?} must match with 1 coil",
                self.k_us.dims(),
                self.target.dims()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 10, lr: 1e-3, seed: 7, loss: LossConfig::default() }
    }
}

/// Train a fresh fan-in-initialized model (projection convs zero).
pub fn train(samples: &[TrainSample], arch: &ArchConfig, cfg: &TrainConfig) -> Result<(ModelParams<f32>, Vec<f64>)> {
    let model = ModelParams::init(arch, cfg.seed)?;
    train_from(model, samples, cfg)
}

/// Continue training from existing parameters. Bitwise-reproducible for a
/// fixed starting model, sample list, and config.
pub fn train_from(
    mut model: ModelParams<f32>,
    samples: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<(ModelParams<f32>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Parameter("train: empty sample list".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        s.validate(i)?;
    }
    let targets: Vec<RTensor<f32>> =
        samples.iter().map(|s| complex_to_channels(&s.target)).collect::<Result<_>>()?;
    let inputs: Vec<RTensor<f32>> =
        samples.iter().map(|s| complex_to_channels(&s.k_us)).collect::<Result<_>>()?;

    let sizes: Vec<usize> = model.tensors.iter().map(|t| t.numel()).collect();
    let mut opt = AdamState::new(&sizes, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.epochs * samples.len());
    let mut step = 0usize;
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        for &si in &order {
            let mut tape = Tape::new();
            let ids = model.leaves(&mut tape);
            let (img, _) = forward_on_tape(&mut tape, &model.arch, &ids, &inputs[si], &samples[si].mask)?;
            let loss = loss_on_tape(&mut tape, img, &targets[si], &cfg.loss)?;
            let loss_val = tape.value(loss).data[0] as f64;
            if !loss_val.is_finite() {
                return Err(Error::Numerical(format!("train: non-finite loss at step {step}")));
            }
            tape.backward(loss)?;
            let grads: Vec<RTensor<f32>> = ids.iter().map(|&id| tape.grad(id).clone()).collect();
            adam_step(&mut model.tensors, &grads, &model.names, &mut opt)?;
            losses.push(loss_val);
            step += 1;
        }
    }
    Ok((model, losses))
}
