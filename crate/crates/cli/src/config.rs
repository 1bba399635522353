use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mutualctr::data::{DataFormat, SynthConfig, DEFAULT_RATIOS};
use mutualctr::models::{Architecture, ModelConfig};
use mutualctr::training::{ModelSpec, RunConfig, TrainMode, FINETUNE_EPOCHS, FINETUNE_LR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetBlock {
    pub format: DataFormat,
    /// Raw Criteo or Avazu file; unused for synthetic data.
    pub path: Option<PathBuf>,
    /// Label used in reports and tables; defaults to the format name.
    pub name: Option<String>,
    pub split: [f64; 3],
    /// Tokens seen fewer times in the train part map to OOV; defaults to 10
    /// for real logs and 1 for synthetic data.
    pub min_freq: Option<u64>,
    pub max_bad_lines: usize,
    pub synth: SynthConfig,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            format: DataFormat::Synth,
            path: None,
            name: None,
            split: DEFAULT_RATIOS,
            min_freq: None,
            max_bad_lines: 100,
            synth: SynthConfig::default(),
        }
    }
}

impl DatasetBlock {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.format_name().to_string())
    }

    pub fn format_name(&self) -> &'static str {
        match self.format {
            DataFormat::Criteo => "criteo",
            DataFormat::Avazu => "avazu",
            DataFormat::Synth => "synth",
        }
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq.unwrap_or(match self.format {
            DataFormat::Synth => 1,
            _ => 10,
        })
    }
}

/// Settings of the research-question presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub architectures: Vec<Architecture>,
    /// Independent runs, and mutual instances, per architecture.
    pub runs: usize,
    /// Architecture of the co-trained-count sweep; defaults to the first listed.
    pub sweep_architecture: Option<Architecture>,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    /// Train missing pretrained checkpoints instead of failing.
    pub auto_pretrain: bool,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            architectures: Architecture::ALL.to_vec(),
            runs: 4,
            sweep_architecture: None,
            finetune_epochs: FINETUNE_EPOCHS,
            finetune_lr: FINETUNE_LR,
            auto_pretrain: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Txt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Table formats; reports are always written as JSON plus per-epoch CSV.
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Txt],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetBlock,
    pub model: ModelConfig,
    /// Models for `train`.
    pub models: Vec<ModelSpec>,
    pub training: RunConfig,
    /// Frozen teacher for distillation.
    pub teacher: Option<PathBuf>,
    pub experiment: ExperimentBlock,
    pub output: OutputBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetBlock::default(),
            model: ModelConfig::default(),
            models: vec![ModelSpec::new(Architecture::Deepfm)],
            training: RunConfig::default(),
            teacher: None,
            experiment: ExperimentBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub lambda: Option<f64>,
}

impl ExperimentConfig {
    /// Reads TOML or JSON, chosen by extension, applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            other => bail!("config must be .toml or .json, got extension {other:?}"),
        };
        if let Some(seed) = overrides.seed {
            cfg.training.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.output.dir = out.clone();
        }
        if let Some(epochs) = overrides.epochs {
            cfg.training.epochs = Some(epochs);
        }
        if let Some(lambda) = overrides.lambda {
            cfg.training.lambda = lambda;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.format != DataFormat::Synth && d.path.is_none() {
            bail!("dataset.path is required for {} data", d.format_name());
        }
        if d.min_freq() == 0 {
            bail!("dataset.min_freq must be at least 1");
        }
        if self.model.embedding_dim == 0 || self.model.tower.contains(&0) {
            bail!("model sizes must be positive");
        }
        let e = &self.experiment;
        if e.runs == 0 {
            bail!("experiment.runs must be at least 1");
        }
        if e.finetune_lr.is_nan() || e.finetune_lr <= 0.0 {
            bail!("experiment.finetune_lr must be positive");
        }
        if e.architectures.is_empty() {
            bail!("experiment.architectures must not be empty");
        }
        let t = &self.training;
        let models = match t.mode {
            // independent runs train each listed model on its own
            TrainMode::Independent => 1,
            _ => self.models.len(),
        };
        if self.models.is_empty() {
            bail!("at least one [[models]] entry is required");
        }
        t.validate(models).context("invalid [training] block")?;
        if t.mode == TrainMode::MutualFinetune {
            if let Some(i) = self.models.iter().position(|m| m.checkpoint.is_none()) {
                bail!("mutual_finetune needs a checkpoint for every model; models[{i}] has none");
            }
        }
        if t.mode == TrainMode::Kd && self.teacher.is_none() {
            bail!("kd training needs a teacher checkpoint");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sweep_architecture(&self) -> Architecture {
        self.experiment
            .sweep_architecture
            .unwrap_or(self.experiment.architectures[0])
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output.dir.join("cache")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output.dir.join("reports")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.output.dir.join("checkpoints")
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.output.dir.join("tables")
    }
}
