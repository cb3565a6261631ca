//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use ifial_core::baselines::{KPolicy, Method};
use ifial_core::eval::Scenario;
use ifial_core::model::{Activation, ModelConfig};
use ifial_core::simulate::Mechanism;
use ifial_core::train::{EpochBudget, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub informative: usize,
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub id: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    /// Generated two-class Gaussian data instead of a file.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSetting {
    Explicit(usize),
    Named(KName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KName {
    HalfD,
}

impl Default for KSetting {
    fn default() -> Self {
        KSetting::Named(KName::HalfD)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub preset: Preset,
    pub model_dim: Option<usize>,
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub activation: Option<Activation>,
    pub gated_ffn: Option<bool>,
    pub zero_init_head: Option<bool>,
}

impl ModelSection {
    pub fn resolve(&self, class_count: usize) -> ModelConfig {
        let base = match self.preset {
            Preset::Desk => ModelConfig::desk(class_count),
            Preset::Large => ModelConfig::large(class_count),
        };
        ModelConfig {
            model_dim: self.model_dim.unwrap_or(base.model_dim),
            num_layers: self.num_layers.unwrap_or(base.num_layers),
            num_heads: self.num_heads.unwrap_or(base.num_heads),
            ffn_dim: self.ffn_dim.unwrap_or(base.ffn_dim),
            dropout: self.dropout.unwrap_or(base.dropout),
            activation: self.activation.unwrap_or(base.activation),
            gated_ffn: self.gated_ffn.unwrap_or(base.gated_ffn),
            zero_init_head: self.zero_init_head.unwrap_or(base.zero_init_head),
            class_count,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub preset: Preset,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub val_fraction: Option<f64>,
    pub epochs_per_session: Option<EpochBudget>,
    pub reset_optimizer: Option<bool>,
}

impl TrainSection {
    pub fn resolve(&self) -> TrainConfig {
        let base = match self.preset {
            Preset::Desk => TrainConfig::desk(),
            Preset::Large => TrainConfig::large(),
        };
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            patience: self.patience.unwrap_or(base.patience),
            val_fraction: self.val_fraction.unwrap_or(base.val_fraction),
            epochs_per_session: self.epochs_per_session.unwrap_or(base.epochs_per_session),
            reset_optimizer: self.reset_optimizer.unwrap_or(base.reset_optimizer),
            seed: base.seed,
        }
    }
}

fn default_folds() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSection,
    pub methods: Vec<String>,
    /// `mcar`, `mnar`, or `natural` (the data as loaded).
    #[serde(default)]
    pub mechanisms: Vec<String>,
    #[serde(default)]
    pub rates: Vec<f64>,
    #[serde(default)]
    pub k: KSetting,
    /// Also evaluate every method on the complete data, for robustness curves.
    #[serde(default)]
    pub reference: bool,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
}

fn invalid(path: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {message}"))
}

impl ExperimentConfig {
    /// Reads and validates a config. Relative paths are resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.path.as_mut().map(resolve);
        cfg.dataset.schema.as_mut().map(resolve);
        resolve(&mut cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        match (
            &self.dataset.path,
            &self.dataset.schema,
            &self.dataset.synthetic,
        ) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => {
                return Err(invalid(
                    "dataset",
                    "give either `path` and `schema`, or `synthetic`",
                ))
            }
        }
        if self.dataset.id.is_empty() {
            return Err(invalid("dataset.id", "must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "must not be empty"));
        }
        self.methods()?;
        for (i, m) in self.mechanisms.iter().enumerate() {
            if !matches!(m.as_str(), "mcar" | "mnar" | "natural") {
                return Err(invalid(
                    &format!("mechanisms[{i}]"),
                    format!("unknown mechanism `{m}`"),
                ));
            }
        }
        for (i, &r) in self.rates.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid(
                    &format!("rates[{i}]"),
                    format!("{r} is outside (0, 1)"),
                ));
            }
        }
        let injected = self.mechanisms.iter().any(|m| m != "natural");
        if injected && self.rates.is_empty() {
            return Err(invalid("rates", "required for mcar/mnar"));
        }
        if self.mechanisms.is_empty() && !self.reference {
            return Err(invalid(
                "mechanisms",
                "nothing to run: add a mechanism or set `reference`",
            ));
        }
        if let KSetting::Explicit(k) = self.k {
            if k < 2 {
                return Err(invalid("k", "must be at least 2"));
            }
        }
        if self.folds < 2 {
            return Err(invalid("folds", "must be at least 2"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must not be empty"));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(invalid(&format!("seeds[{i}]"), "duplicate seed"));
            }
        }
        let model = self.model.resolve(2);
        model.validate().map_err(|e| invalid("model", e))?;
        self.train
            .resolve()
            .validate()
            .map_err(|e| invalid("train", e))?;
        Ok(())
    }

    fn k_policy(&self) -> KPolicy {
        match self.k {
            KSetting::Explicit(k) => KPolicy::Explicit(k),
            KSetting::Named(KName::HalfD) => KPolicy::HalfD,
        }
    }

    /// Methods in config order; plain `ifial` takes the configured `k`.
    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let parsed: Method = m.parse().map_err(|_| {
                    invalid(&format!("methods[{i}]"), format!("unknown method `{m}`"))
                })?;
                Ok(match parsed {
                    Method::Ifial { k: KPolicy::HalfD } if m == "ifial" => {
                        Method::Ifial { k: self.k_policy() }
                    }
                    other => other,
                })
            })
            .collect()
    }

    /// Scenarios in grid order: the reference first, then each mechanism
    /// with each rate.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        if self.reference {
            out.push(Scenario::Complete);
        }
        for m in &self.mechanisms {
            let mechanism = match m.as_str() {
                "mcar" => Mechanism::Mcar,
                "mnar" => Mechanism::Mnar,
                _ => {
                    out.push(Scenario::Natural);
                    continue;
                }
            };
            for &rate in &self.rates {
                out.push(Scenario::Injected { mechanism, rate });
            }
        }
        out
    }
}
