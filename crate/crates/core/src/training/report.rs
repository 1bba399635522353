use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TrainMode};
use crate::error::Result;
use crate::models::{Architecture, ModelConfig};

/// Metrics of one model after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub model_id: String,
    /// Mean per-batch objective without the L2 penalty.
    pub train_loss: f64,
    pub dev_auc: f64,
    pub dev_logloss: f64,
    /// Learning rate of the epoch's first step.
    pub lr: f64,
}

/// Dev and test scores of a model before a run touched it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainedScores {
    pub dev_auc: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model_id: String,
    pub architecture: Architecture,
    /// Epoch whose parameters were kept; 0 means the starting point.
    pub best_epoch: usize,
    pub dev_auc: f64,
    pub dev_logloss: f64,
    pub test_auc: f64,
    pub test_logloss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PretrainedScores>,
    /// Test-AUC improvement over `pretrained`, as a fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaimp_test: Option<f64>,
}

/// Everything a run measured. Wall-clock time is kept out so reruns compare
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: TrainMode,
    pub dataset: String,
    pub seed: u64,
    pub config: RunConfig,
    pub model_config: ModelConfig,
    pub steps: u64,
    pub epochs: Vec<EpochRecord>,
    pub models: Vec<ModelResult>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-epoch metrics as CSV.
    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,model_id,train_loss,dev_auc,dev_logloss,lr\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.model_id, r.train_loss, r.dev_auc, r.dev_logloss, r.lr
            );
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()?)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.epochs_csv())?;
        Ok(())
    }

    /// Renames models, in order, everywhere in the report.
    pub fn relabel(&mut self, ids: &[String]) {
        let renames: HashMap<String, String> = self
            .models
            .iter()
            .zip(ids)
            .map(|(m, id)| (m.model_id.clone(), id.clone()))
            .collect();
        for r in &mut self.epochs {
            if let Some(id) = renames.get(&r.model_id) {
                r.model_id = id.clone();
            }
        }
        for (m, id) in self.models.iter_mut().zip(ids) {
            m.model_id = id.clone();
        }
    }

    pub fn mean_test_auc(&self) -> f64 {
        self.models.iter().map(|m| m.test_auc).sum::<f64>() / self.models.len() as f64
    }

    pub fn mean_dev_auc(&self) -> f64 {
        self.models.iter().map(|m| m.dev_auc).sum::<f64>() / self.models.len() as f64
    }
}
