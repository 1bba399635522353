use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Architecture;

pub const SCRATCH_LR: f64 = 1e-3;
pub const FINETUNE_LR: f64 = 7e-4;
pub const MAX_EPOCHS: usize = 10;
pub const FINETUNE_EPOCHS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Independent,
    MutualScratch,
    MutualFinetune,
    Kd,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Independent => "independent",
            TrainMode::MutualScratch => "mutual_scratch",
            TrainMode::MutualFinetune => "mutual_finetune",
            TrainMode::Kd => "kd",
        }
    }

    pub fn is_mutual(self) -> bool {
        matches!(self, TrainMode::MutualScratch | TrainMode::MutualFinetune)
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(TrainMode::Independent),
            "mutual_scratch" => Ok(TrainMode::MutualScratch),
            "mutual_finetune" => Ok(TrainMode::MutualFinetune),
            "kd" => Ok(TrainMode::Kd),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

/// One model taking part in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Initialization seed; defaults to the run seed plus the model's position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Pretrained weights, required for finetuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl ModelSpec {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            seed: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: TrainMode,
    /// Initial learning rate; `None` picks the mode default.
    pub lr0: Option<f64>,
    /// Epoch budget; `None` picks the mode default.
    pub epochs: Option<usize>,
    /// Epochs without dev-AUC improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the mutual term.
    pub lambda: f64,
    /// Treat peer predictions as constants in each model's loss.
    pub detach_peers: bool,
    /// Label weight of the distillation loss.
    pub alpha: f64,
    /// Hard cap on optimizer steps, for smoke runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Independent,
            lr0: None,
            epochs: None,
            patience: 1,
            batch_size: 4000,
            seed: 0,
            lambda: 1.0,
            detach_peers: true,
            alpha: 0.5,
            max_steps: None,
        }
    }
}

impl RunConfig {
    pub fn with_mode(mode: TrainMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn lr0(&self) -> f64 {
        self.lr0.unwrap_or(match self.mode {
            TrainMode::MutualFinetune => FINETUNE_LR,
            _ => SCRATCH_LR,
        })
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.mode {
            TrainMode::MutualFinetune => FINETUNE_EPOCHS,
            _ => MAX_EPOCHS,
        })
    }

    /// Checks value ranges and the model count required by the mode.
    pub fn validate(&self, models: usize) -> Result<()> {
        let lr = self.lr0();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        match self.mode {
            TrainMode::Independent | TrainMode::Kd if models != 1 => Err(Error::Config(format!(
                "{} training takes exactly one model, got {models}",
                self.mode
            ))),
            TrainMode::MutualScratch | TrainMode::MutualFinetune if models < 2 => Err(Error::Config(format!(
                "{} training needs at least two models, got {models}",
                self.mode
            ))),
            _ => Ok(()),
        }
    }
}
