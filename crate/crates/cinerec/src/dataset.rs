//! Dataset generation and loading: seeded jittered phantom instances written
//! as `gt_###.cxt`, `sens_###.cxt`, `kus_###.cxt`, `mask_###.cxt` plus a
//! plain-text manifest of config key=value pairs and the file list.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::phantom::{generate_cine, generate_coil_maps, simulate_acquisition, PhantomConfig};
use crate::sampling::{generate_lh_mask, SamplingMask};
use crate::tensor::{CoilSensitivities, ComplexCine, DomainTag};
use crate::train::TrainSample;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Base phantom; radii and beat amplitude are jittered per instance.
    pub phantom: PhantomConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// Mask parameters, one fresh mask per instance.
    pub accel: f64,
    pub n_acs: usize,
    pub density_decay: f64,
    /// Master seed; all per-instance randomness derives from (seed, index).
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            phantom: PhantomConfig::default(),
            n_train: 40,
            n_test: 8,
            accel: 12.0,
            n_acs: 4,
            density_decay: 2.0,
            seed: 7,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        if self.n_train + self.n_test == 0 {
            return Err(Error::Parameter("dataset needs at least one instance".into()));
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.n_train + self.n_test
    }
}

/// One stored instance: single-coil ground truth, coil maps, undersampled
/// multi-coil k-space and the mask it was sampled with.
pub struct Instance {
    pub gt: ComplexCine,
    pub sens: CoilSensitivities,
    pub k_us: ComplexCine,
    pub mask: SamplingMask,
}

fn instance_rng(seed: u64, index: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 8) | lane);
    rng
}

/// Per-instance phantom config: inner radius jittered by ±10% and beat
/// amplitude by ±25% around the base values, deterministic in (seed, index).
pub fn instance_phantom_config(cfg: &DatasetConfig, index: usize) -> PhantomConfig {
    let mut rng = instance_rng(cfg.seed, index, 0);
    let mut p = cfg.phantom.clone();
    p.r_inner *= 1.0 + 0.10 * (2.0 * rng.gen::<f64>() - 1.0);
    p.beat_amplitude *= 1.0 + 0.25 * (2.0 * rng.gen::<f64>() - 1.0);
    p.seed = rng.gen();
    p
}

/// Simulate one instance in memory.
pub fn generate_instance(cfg: &DatasetConfig, index: usize) -> Result<Instance> {
    cfg.validate()?;
    if index >= cfg.n_instances() {
        return Err(Error::Parameter(format!(
            "instance {index} out of range, dataset has {}",
            cfg.n_instances()
        )));
    }
    let p = instance_phantom_config(cfg, index);
    let gt = generate_cine(&p)?;
    let mut seeds = instance_rng(cfg.seed, index, 1);
    let sens = generate_coil_maps(p.h, p.w, p.n_coils, seeds.gen())?;
    let mask = generate_lh_mask(p.w, p.t, cfg.accel, cfg.n_acs, cfg.density_decay, seeds.gen())?;
    let (_, k_us) = simulate_acquisition(&gt, &sens, &mask, p.noise_sigma, seeds.gen())?;
    Ok(Instance { gt, sens, k_us, mask })
}

fn paths(dir: &Path, index: usize) -> [PathBuf; 4] {
    [
        dir.join(format!("gt_{index:03}.cxt")),
        dir.join(format!("sens_{index:03}.cxt")),
        dir.join(format!("kus_{index:03}.cxt")),
        dir.join(format!("mask_{index:03}.cxt")),
    ]
}

/// Generate every instance and write the directory layout plus `manifest.txt`.
/// Instances 0..n_train are the training split, the rest are held out.
pub fn write_dataset<P: AsRef<Path>>(dir: P, cfg: &DatasetConfig) -> Result<()> {
    cfg.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let p = &cfg.phantom;
    for (k, v) in [
        ("h", p.h.to_string()),
        ("w", p.w.to_string()),
        ("t", p.t.to_string()),
        ("n_coils", p.n_coils.to_string()),
        ("r_inner", p.r_inner.to_string()),
        ("r_outer", p.r_outer.to_string()),
        ("beat_amplitude", p.beat_amplitude.to_string()),
        ("n_beats", p.n_beats.to_string()),
        ("noise_sigma", p.noise_sigma.to_string()),
        ("n_train", cfg.n_train.to_string()),
        ("n_test", cfg.n_test.to_string()),
        ("accel", cfg.accel.to_string()),
        ("n_acs", cfg.n_acs.to_string()),
        ("density_decay", cfg.density_decay.to_string()),
        ("seed", cfg.seed.to_string()),
    ] {
        writeln!(manifest, "{k}={v}").unwrap();
    }
    for i in 0..cfg.n_instances() {
        let inst = generate_instance(cfg, i)?;
        let files = paths(dir, i);
        write_tensor(&files[0], &inst.gt.to_cxt())?;
        write_tensor(&files[1], &inst.sens.to_cxt())?;
        write_tensor(&files[2], &inst.k_us.to_cxt())?;
        write_tensor(&files[3], &inst.mask.to_cxt())?;
        let split = if i < cfg.n_train { "train" } else { "test" };
        let names: Vec<String> =
            files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        writeln!(manifest, "instance_{i:03}={} {}", split, names.join(" ")).unwrap();
    }
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Reconstruct the generating config from a directory's `manifest.txt`.
pub fn read_manifest<P: AsRef<Path>>(dir: P) -> Result<DatasetConfig> {
    let path = dir.as_ref().join("manifest.txt");
    // a missing/unreadable dataset is a data error (exit 3), not config
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))
    })?;
    let mut cfg = DatasetConfig::default();
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        if key.starts_with("instance_") {
            continue;
        }
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("manifest key {key}: {e}"));
        match key {
            "h" => cfg.phantom.h = value.parse().map_err(|e| bad(&e))?,
            "w" => cfg.phantom.w = value.parse().map_err(|e| bad(&e))?,
            "t" => cfg.phantom.t = value.parse().map_err(|e| bad(&e))?,
            "n_coils" => cfg.phantom.n_coils = value.parse().map_err(|e| bad(&e))?,
            "r_inner" => cfg.phantom.r_inner = value.parse().map_err(|e| bad(&e))?,
            "r_outer" => cfg.phantom.r_outer = value.parse().map_err(|e| bad(&e))?,
            "beat_amplitude" => cfg.phantom.beat_amplitude = value.parse().map_err(|e| bad(&e))?,
            "n_beats" => cfg.phantom.n_beats = value.parse().map_err(|e| bad(&e))?,
            "noise_sigma" => cfg.phantom.noise_sigma = value.parse().map_err(|e| bad(&e))?,
            "n_train" => cfg.n_train = value.parse().map_err(|e| bad(&e))?,
            "n_test" => cfg.n_test = value.parse().map_err(|e| bad(&e))?,
            "accel" => cfg.accel = value.parse().map_err(|e| bad(&e))?,
            "n_acs" => cfg.n_acs = value.parse().map_err(|e| bad(&e))?,
            "density_decay" => cfg.density_decay = value.parse().map_err(|e| bad(&e))?,
            "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
            other => return Err(Error::Config(format!("manifest: unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}

/// Read one instance back from a dataset directory.
pub fn load_instance<P: AsRef<Path>>(dir: P, index: usize) -> Result<Instance> {
    let files = paths(dir.as_ref(), index);
    let gt = ComplexCine::from_cxt(&read_tensor(&files[0])?, DomainTag::Image)?;
    let sens = CoilSensitivities::from_cxt(&read_tensor(&files[1])?)?;
    let k_us = ComplexCine::from_cxt(&read_tensor(&files[2])?, DomainTag::Kspace)?;
    let mask = SamplingMask::from_cxt(&read_tensor(&files[3])?)?;
    Ok(Instance { gt, sens, k_us, mask })
}

/// Split an instance into per-coil training samples: each coil's k-space
/// column of `k_us` paired with that coil's clean image `sens_c ⊙ gt`.
pub fn per_coil_samples(inst: &Instance) -> Result<Vec<TrainSample>> {
    let (t, c, h, w) = inst.k_us.dims();
    let (sc, sh, sw) = inst.sens.dims();
    let (gt_t, gt_c, gh, gw) = inst.gt.dims();
    if sc != c || sh != h || sw != w || gt_t != t || gt_c != 1 || gh != h || gw != w {
        return Err(Error::Shape(format!(
            "instance shapes disagree: k_us {:?}, sens {:?}, gt {:?}",
            inst.k_us.dims(),
            inst.sens.dims(),
            inst.gt.dims()
        )));
    }
    let mut out = Vec::with_capacity(c);
    for ci in 0..c {
        let mut k_us = ComplexCine::zeros((t, 1, h, w), DomainTag::Kspace)?;
        let mut target = ComplexCine::zeros((t, 1, h, w), DomainTag::Image)?;
        let s = inst.sens.coil(ci);
        for ti in 0..t {
            k_us.slice_mut(ti, 0).copy_from_slice(inst.k_us.slice(ti, ci));
            let g = inst.gt.slice(ti, 0);
            let dst = target.slice_mut(ti, 0);
            for i in 0..h * w {
                dst[i] = g[i] * s[i];
            }
        }
        out.push(TrainSample { k_us, mask: inst.mask.clone(), target });
    }
    Ok(out)
}
