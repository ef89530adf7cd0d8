//! Flat key=value run configuration with a strict schema: every key must be
//! known, every value must parse, and the resolved state can be re-emitted as
//! a config file that reproduces the run.

use std::path::Path;

use crate::admm::CsConfig;
use crate::crnn::ArchConfig;
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub arch: ArchConfig,
    pub cs: CsConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::default(),
            arch: ArchConfig::desk(),
            cs: CsConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn bad_value(key: &str, value: &str, err: impl std::fmt::Display) -> Error {
    Error::Config(format!("key `{key}`: cannot parse `{value}`: {err}"))
}

macro_rules! schema {
    ($self:ident, $key:ident, $value:ident; $($name:literal => $field:expr,)*) => {
        match $key {
            $($name => $field = $value.parse().map_err(|e| bad_value($key, $value, e))?,)*
            _ => return Err(Error::Config(format!("unknown config key `{}`", $key))),
        }
    };
}

impl RunConfig {
    /// Set one key. Unknown keys and unparseable values are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "seed" {
            // master seed: drives dataset generation and training
            let s: u64 = value.parse().map_err(|e| bad_value(key, value, e))?;
            self.dataset.seed = s;
            self.train.seed = s;
            return Ok(());
        }
        schema!(self, key, value;
            "phantom.h" => self.dataset.phantom.h,
            "phantom.w" => self.dataset.phantom.w,
            "phantom.t" => self.dataset.phantom.t,
            "phantom.n_coils" => self.dataset.phantom.n_coils,
            "phantom.r_inner" => self.dataset.phantom.r_inner,
            "phantom.r_outer" => self.dataset.phantom.r_outer,
            "phantom.beat_amplitude" => self.dataset.phantom.beat_amplitude,
            "phantom.n_beats" => self.dataset.phantom.n_beats,
            "phantom.noise_sigma" => self.dataset.phantom.noise_sigma,
            "dataset.n_train" => self.dataset.n_train,
            "dataset.n_test" => self.dataset.n_test,
            "mask.accel" => self.dataset.accel,
            "mask.n_acs" => self.dataset.n_acs,
            "mask.density_decay" => self.dataset.density_decay,
            "arch.n_iters" => self.arch.n_iters,
            "arch.n_bcrnn_layers" => self.arch.n_bcrnn_layers,
            "arch.feat_channels" => self.arch.feat_channels,
            "arch.hidden_channels" => self.arch.hidden_channels,
            "arch.share_weights" => self.arch.share_weights,
            "cs.lambda_t" => self.cs.lambda_t,
            "cs.lambda_w" => self.cs.lambda_w,
            "cs.rho" => self.cs.rho,
            "cs.max_admm_iters" => self.cs.max_admm_iters,
            "cs.cg_tol" => self.cs.cg_tol,
            "cs.cg_max_iters" => self.cs.cg_max_iters,
            "cs.wavelet_levels" => self.cs.wavelet_levels,
            "loss.ssim_weight" => self.train.loss.ssim_weight,
            "train.epochs" => self.train.epochs,
            "train.lr" => self.train.lr,
        );
        Ok(())
    }

    /// Parse `key=value` lines; `#` starts a comment, blank lines ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file<P: AsRef<Path>>(&mut self, path: P) -> Result<()> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.as_ref().display()))
        })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.arch.validate()?;
        self.cs.validate()?;
        Ok(())
    }

    /// Full resolved state, parseable by [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        let p = &self.dataset.phantom;
        let kv: Vec<(&str, String)> = vec![
            ("phantom.h", p.h.to_string()),
            ("phantom.w", p.w.to_string()),
            ("phantom.t", p.t.to_string()),
            ("phantom.n_coils", p.n_coils.to_string()),
            ("phantom.r_inner", p.r_inner.to_string()),
            ("phantom.r_outer", p.r_outer.to_string()),
            ("phantom.beat_amplitude", p.beat_amplitude.to_string()),
            ("phantom.n_beats", p.n_beats.to_string()),
            ("phantom.noise_sigma", p.noise_sigma.to_string()),
            ("dataset.n_train", self.dataset.n_train.to_string()),
            ("dataset.n_test", self.dataset.n_test.to_string()),
            ("mask.accel", self.dataset.accel.to_string()),
            ("mask.n_acs", self.dataset.n_acs.to_string()),
            ("mask.density_decay", self.dataset.density_decay.to_string()),
            ("seed", self.dataset.seed.to_string()),
            ("arch.n_iters", self.arch.n_iters.to_string()),
            ("arch.n_bcrnn_layers", self.arch.n_bcrnn_layers.to_string()),
            ("arch.feat_channels", self.arch.feat_channels.to_string()),
            ("arch.hidden_channels", self.arch.hidden_channels.to_string()),
            ("arch.share_weights", self.arch.share_weights.to_string()),
            ("cs.lambda_t", self.cs.lambda_t.to_string()),
            ("cs.lambda_w", self.cs.lambda_w.to_string()),
            ("cs.rho", self.cs.rho.to_string()),
            ("cs.max_admm_iters", self.cs.max_admm_iters.to_string()),
            ("cs.cg_tol", self.cs.cg_tol.to_string()),
            ("cs.cg_max_iters", self.cs.cg_max_iters.to_string()),
            ("cs.wavelet_levels", self.cs.wavelet_levels.to_string()),
            ("loss.ssim_weight", self.train.loss.ssim_weight.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.lr", self.train.lr.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}
