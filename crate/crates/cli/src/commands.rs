use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mutualctr::data::SplitPart;
use mutualctr::eval::{assemble_table, Baseline, Grouping, ResultTable};
use mutualctr::models::{load_checkpoint, ModelInstance};
use mutualctr::training::{
    evaluate, finetune_mutual, init_models, train_kd, train_mutual, RunOutcome, TrainData, TrainMode,
};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::prepare::{load_prepared, Prepared};
use crate::runs::{independent, read_report, save_outcome, Workers};

fn load_models(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<ModelInstance>> {
    let hash = prep.schema.hash();
    cfg.models
        .iter()
        .map(|spec| {
            let path = spec.checkpoint.as_ref().expect("validated");
            let model =
                load_checkpoint(path, Some(&hash)).with_context(|| format!("loading {}", path.display()))?;
            if model.architecture != spec.architecture {
                bail!(
                    "{} holds a {} model, config says {}",
                    path.display(),
                    model.architecture,
                    spec.architecture
                );
            }
            Ok(model)
        })
        .collect()
}

/// Runs the `[training]` block; returns the checkpoints written.
pub fn cmd_train(cfg: &ExperimentConfig, workers: &Workers) -> Result<Vec<PathBuf>> {
    let prep = load_prepared(cfg)?;
    let name = cfg.dataset.name();
    let data = TrainData {
        name: &name,
        split: &prep.split,
    };
    let t = &cfg.training;
    let exec = workers.exec();
    let mut written = Vec::new();
    match t.mode {
        TrainMode::Independent => {
            let outcomes = workers.map(cfg.models.len(), |i| {
                let spec = &cfg.models[i];
                independent(cfg, &prep, spec.architecture, spec.seed.unwrap_or(t.seed + i as u64))
            });
            for (i, outcome) in outcomes.into_iter().enumerate() {
                let stem = format!("independent-{}-{i}", cfg.models[i].architecture);
                written.extend(save_outcome(cfg, &stem, &outcome?)?);
            }
        }
        TrainMode::MutualScratch => {
            let models = init_models(&cfg.models, &cfg.model, &prep.layout, t.seed)?;
            let outcome = train_mutual(models, data, t, exec)?;
            written.extend(save_outcome(cfg, "mutual_scratch", &outcome)?);
        }
        TrainMode::MutualFinetune => {
            let models = load_models(cfg, &prep)?;
            let outcome = finetune_mutual(models, data, t, exec)?;
            written.extend(save_outcome(cfg, "mutual_finetune", &outcome)?);
        }
        TrainMode::Kd => {
            let path = cfg.teacher.as_ref().expect("validated");
            let teacher = load_checkpoint(path, Some(&prep.schema.hash()))
                .with_context(|| format!("loading teacher {}", path.display()))?;
            let student = init_models(&cfg.models[..1], &cfg.model, &prep.layout, t.seed)?.remove(0);
            let outcome: RunOutcome = train_kd(teacher, student, data, t, exec)?;
            let stem = format!("kd-{}", cfg.models[0].architecture);
            written.extend(save_outcome(cfg, &stem, &outcome)?);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub checkpoint: PathBuf,
    pub split: SplitPart,
    pub rows: usize,
    pub auc: f64,
    pub logloss: f64,
}

pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, part: SplitPart) -> Result<EvalMetrics> {
    let prep = load_prepared(cfg)?;
    let model = load_checkpoint(checkpoint, Some(&prep.schema.hash()))
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let rows = prep.split.part(part);
    let (auc, logloss) = evaluate(&model, rows, cfg.training.batch_size)
        .with_context(|| format!("evaluating on the {part:?} part"))?;
    Ok(EvalMetrics {
        checkpoint: checkpoint.to_path_buf(),
        split: part,
        rows: rows.len(),
        auc,
        logloss,
    })
}

/// Writes a table in the configured formats.
pub fn write_table(cfg: &ExperimentConfig, table: &ResultTable, stem: &str) -> Result<()> {
    let dir = cfg.tables_dir();
    fs::create_dir_all(&dir)?;
    for f in &cfg.output.formats {
        match f {
            OutputFormat::Csv => fs::write(dir.join(format!("{stem}.csv")), table.to_csv())?,
            OutputFormat::Txt => fs::write(dir.join(format!("{stem}.txt")), table.to_text())?,
        }
    }
    Ok(())
}

/// Tabulates every report under the output directory.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let dir = cfg.reports_dir();
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no reports in {}", dir.display());
    }
    let reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    let table = match assemble_table("All runs", &reports, Grouping::Regime, Baseline::BestIndependent) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("{e}; leaving RelaImp empty");
            assemble_table("All runs", &reports, Grouping::Regime, Baseline::None)?
        }
    };
    write_table(cfg, &table, "report")?;
    Ok(table)
}

