//! Experiment configuration: a single JSON document, schema-validated before
//! any run, echoed back out so every run is self-describing.

use dpdiff_core::denoiser::DenoiserConfig;
use dpdiff_core::diffusion::SigmaDistribution;
use dpdiff_core::error::{Error, Result};
use dpdiff_core::pipeline::{Phase1Settings, Phase2Settings, TrainSettings};
use dpdiff_core::privacy::DpConfig;
use dpdiff_core::stages::{self, make_stage_plan, Variant};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which training recipe a run uses. `Baseline` is the untruncated DP run
/// with no synthetic phase, at the same step budget as the staged variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Coarse,
    Cleaning,
    Finetune,
    Baseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Coarse => "coarse",
            Method::Cleaning => "cleaning",
            Method::Finetune => "finetune",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Thresholds {
    Auto(String),
    Pair([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    DeadLeaves,
    SaltPepper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    #[serde(default = "default_synthetic_n")]
    pub n: usize,
    /// White-pixel probability for salt-and-pepper.
    #[serde(default = "default_sp_p")]
    pub p: f64,
}

fn default_synthetic_n() -> usize {
    256
}

fn default_sp_p() -> f64 {
    0.13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSpec {
    Builtin(String),
    Idx { idx: IdxPaths },
}

/// The full experiment description. Unknown keys are rejected so typos fail
/// loudly before any compute runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(default = "default_thresholds")]
    pub thresholds: Thresholds,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSpec,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Builtin-dataset size knob: examples generated per class.
    #[serde(default = "default_n_per_class")]
    pub n_per_class: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_multiplicity")]
    pub multiplicity: usize,
    #[serde(default = "default_private_epochs")]
    pub private_epochs: usize,
    #[serde(default = "default_lot_size")]
    pub lot_size: usize,
    #[serde(default = "default_synthetic")]
    pub synthetic: SyntheticSpec,
    #[serde(default = "default_phase1_epochs")]
    pub phase1_epochs: usize,
    #[serde(default = "default_phase1_batch")]
    pub phase1_batch: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_embed_features")]
    pub embed_features: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_thresholds() -> Thresholds {
    Thresholds::Auto("auto".into())
}
fn default_dataset() -> DatasetSpec {
    DatasetSpec::Builtin("toy-bars".into())
}
fn default_image_size() -> usize {
    16
}
fn default_num_classes() -> usize {
    8
}
fn default_n_per_class() -> usize {
    16
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    1e-5
}
fn default_clip_norm() -> f64 {
    1.0
}
fn default_multiplicity() -> usize {
    16
}
fn default_private_epochs() -> usize {
    10
}
fn default_lot_size() -> usize {
    32
}
fn default_synthetic() -> SyntheticSpec {
    SyntheticSpec { kind: SyntheticKind::DeadLeaves, n: default_synthetic_n(), p: default_sp_p() }
}
fn default_phase1_epochs() -> usize {
    20
}
fn default_phase1_batch() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    3e-4
}
fn default_hidden() -> Vec<usize> {
    vec![48, 48]
}
fn default_embed_features() -> usize {
    6
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{\"method\":\"coarse\"}").expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::RejectedConfig(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 4 || self.image_size > 64 {
            return Err(Error::RejectedConfig("image_size must lie in 4..=64".into()));
        }
        if self.num_classes > 256 {
            return Err(Error::RejectedConfig("num_classes must be <= 256".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::RejectedConfig("epsilon must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::RejectedConfig("delta must lie in (0, 1)".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::RejectedConfig("clip_norm must be positive".into()));
        }
        if self.multiplicity == 0 {
            return Err(Error::RejectedConfig("multiplicity must be >= 1".into()));
        }
        if self.lot_size == 0 {
            return Err(Error::RejectedConfig("lot_size must be >= 1".into()));
        }
        if let Thresholds::Auto(word) = &self.thresholds {
            if word != "auto" {
                return Err(Error::RejectedConfig(format!(
                    "thresholds must be \"auto\" or [tau1, tau2], got \"{word}\""
                )));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::RejectedConfig("learning_rate must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::RejectedConfig("hidden layers must be nonempty and nonzero".into()));
        }
        if let DatasetSpec::Builtin(name) = &self.dataset {
            if name != "toy-bars" {
                return Err(Error::RejectedConfig(format!("unknown builtin dataset \"{name}\"")));
            }
        }
        Ok(())
    }

    /// Resolve thresholds: explicit pair, or the per-variant defaults (the
    /// coarse defaults come from the curve detector, which clamps to the
    /// published values).
    pub fn resolved_thresholds(&self) -> Result<(f64, f64)> {
        match (&self.thresholds, self.method) {
            (Thresholds::Pair([t1, t2]), _) => Ok((*t1, *t2)),
            (Thresholds::Auto(_), Method::Coarse) => {
                let curve = dpdiff_core::stages::CurveTable::<f64>::default_edm();
                let th = stages::coarse_thresholds(&curve)?;
                Ok((th.tau1, th.tau2))
            }
            (Thresholds::Auto(_), Method::Cleaning) => Ok(stages::DEFAULT_CLEANING_TAU),
            (Thresholds::Auto(_), Method::Finetune | Method::Baseline) => {
                Ok((stages::DEFAULT_COARSE_TAU.0, f64::INFINITY))
            }
        }
    }

    pub fn denoiser_cfg(&self) -> DenoiserConfig<f64> {
        DenoiserConfig {
            image_shape: vec![1, self.image_size, self.image_size],
            num_classes: self.num_classes,
            hidden: self.hidden.clone(),
            embed_features: self.embed_features,
            sigma_data: 0.5,
        }
    }

    /// Assemble the trainer settings for this experiment.
    pub fn train_settings(&self) -> Result<TrainSettings<f64>> {
        self.validate()?;
        let (tau1, tau2) = self.resolved_thresholds()?;
        let variant = match self.method {
            Method::Coarse => Variant::Coarse,
            Method::Cleaning => Variant::Cleaning,
            Method::Finetune | Method::Baseline => Variant::FineTune,
        };
        let base = SigmaDistribution::edm_default();
        let plan = make_stage_plan(variant, tau1, tau2, &base)?;
        let phase1_epochs = if self.method == Method::Baseline { 0 } else { self.phase1_epochs };
        Ok(TrainSettings {
            plan,
            denoiser_cfg: self.denoiser_cfg(),
            phase1: Phase1Settings {
                max_epochs: phase1_epochs,
                batch_size: self.phase1_batch,
                learning_rate: self.learning_rate,
                stop_window: 5,
                stop_rel_improvement: 0.005,
            },
            phase2: Phase2Settings {
                epochs: self.private_epochs,
                expected_lot_size: self.lot_size,
                learning_rate: self.learning_rate,
            },
            dp: DpConfig {
                epsilon: self.epsilon,
                delta: self.delta,
                clip_norm: self.clip_norm,
                sample_rate: 1.0, // resolved by the trainer from lot/n
                steps: 0,
                noise_multiplier: 0.0, // calibrated by the trainer
                multiplicity: self.multiplicity,
            },
            seed: self.seed,
            checkpoint_every: None,
            checkpoint_dir: None,
            log_sigma_draws: false,
        })
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::RejectedConfig(format!("config serialize error: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
