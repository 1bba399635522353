//! Presets for the four research questions, built from plain training runs.
//!
//! Independent run `k` of architecture `a` always uses seed
//! `training.seed + 1000 · rank(a) + k`, so every preset finds and reuses the
//! same pretrained checkpoints.

use anyhow::{bail, Result};
use log::info;

use mutualctr::eval::{assemble_table, Baseline, Grouping, ResultTable};
use mutualctr::models::{Architecture, ModelInstance};
use mutualctr::training::{finetune_mutual, train_mutual, RunOutcome, RunReport, TrainData, TrainMode};

use crate::commands::write_table;
use crate::config::ExperimentConfig;
use crate::prepare::{load_prepared, Prepared};
use crate::runs::{independent, load_outcome, phase_config, read_report, save_outcome, Workers};

/// Models co-trained in each row of the count sweep.
pub const SWEEP_COUNTS: [usize; 4] = [5, 4, 3, 2];

pub fn run_seed(cfg: &ExperimentConfig, architecture: Architecture, k: usize) -> u64 {
    let rank = Architecture::ALL.iter().position(|&a| a == architecture).unwrap_or(0);
    cfg.training.seed + 1000 * rank as u64 + k as u64
}

fn independent_stem(architecture: Architecture, k: usize) -> String {
    format!("rq1-independent-{architecture}-{k}")
}

struct Pretrained {
    report: RunReport,
    model: ModelInstance,
}

/// Loads independent runs from earlier presets, training the missing ones
/// when `allow_train` is set.
fn ensure_independent(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    workers: &Workers,
    jobs: &[(Architecture, usize)],
    allow_train: bool,
) -> Result<Vec<Pretrained>> {
    let mut found: Vec<Option<Pretrained>> = Vec::with_capacity(jobs.len());
    let mut missing = Vec::new();
    for (i, &(a, k)) in jobs.iter().enumerate() {
        let expected = phase_config(cfg, TrainMode::Independent, run_seed(cfg, a, k));
        match load_outcome(cfg, prep, &independent_stem(a, k), 1, &expected)? {
            Some((report, mut models)) => found.push(Some(Pretrained {
                report,
                model: models.remove(0),
            })),
            None => {
                found.push(None);
                missing.push(i);
            }
        }
    }
    if !missing.is_empty() && !allow_train {
        let names: Vec<String> = missing.iter().map(|&i| independent_stem(jobs[i].0, jobs[i].1)).collect();
        bail!(
            "missing pretrained checkpoints {}; run `experiment --rq 1` first or set experiment.auto_pretrain",
            names.join(", ")
        );
    }
    if !missing.is_empty() {
        info!("training {} independent runs", missing.len());
    }
    let outcomes = workers.map(missing.len(), |j| {
        let (a, k) = jobs[missing[j]];
        independent(cfg, prep, a, run_seed(cfg, a, k))
    });
    for (j, outcome) in outcomes.into_iter().enumerate() {
        let mut outcome = outcome?;
        let (a, k) = jobs[missing[j]];
        save_outcome(cfg, &independent_stem(a, k), &outcome)?;
        found[missing[j]] = Some(Pretrained {
            report: outcome.report,
            model: outcome.models.remove(0),
        });
    }
    Ok(found.into_iter().map(|p| p.expect("filled above")).collect())
}

fn existing_report(cfg: &ExperimentConfig, stem: &str) -> Result<Option<RunReport>> {
    let path = cfg.reports_dir().join(format!("{stem}.json"));
    if !path.exists() {
        return Ok(None);
    }
    let report = read_report(&path)?;
    Ok((report.model_config == cfg.model && report.dataset == cfg.dataset.name()).then_some(report))
}

fn finetune(cfg: &ExperimentConfig, prep: &Prepared, models: Vec<ModelInstance>, seed: u64, workers: &Workers) -> Result<RunOutcome> {
    let name = cfg.dataset.name();
    let data = TrainData {
        name: &name,
        split: &prep.split,
    };
    let rc = phase_config(cfg, TrainMode::MutualFinetune, seed);
    Ok(finetune_mutual(models, data, &rc, workers.exec())?)
}

fn jobs(architectures: &[Architecture], runs: usize) -> Vec<(Architecture, usize)> {
    architectures
        .iter()
        .flat_map(|&a| (0..runs).map(move |k| (a, k)))
        .collect()
}

fn need_two(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.experiment.runs < 2 {
        bail!("mutual learning needs experiment.runs ≥ 2, got {}", cfg.experiment.runs);
    }
    Ok(())
}

/// Independent runs against mutual learning from scratch.
fn rq1(cfg: &ExperimentConfig, prep: &Prepared, workers: &Workers) -> Result<ResultTable> {
    need_two(cfg)?;
    let archs = &cfg.experiment.architectures;
    let runs = cfg.experiment.runs;
    let pretrained = ensure_independent(cfg, prep, workers, &jobs(archs, runs), true)?;
    let name = cfg.dataset.name();
    let scratch = workers.map(archs.len(), |i| -> Result<RunOutcome> {
        let a = archs[i];
        let models = (0..runs)
            .map(|k| ModelInstance::new(a, &cfg.model, &prep.layout, run_seed(cfg, a, k)))
            .collect::<mutualctr::Result<Vec<_>>>()?;
        let rc = phase_config(cfg, TrainMode::MutualScratch, run_seed(cfg, a, 0));
        let data = TrainData {
            name: &name,
            split: &prep.split,
        };
        Ok(train_mutual(models, data, &rc, mutualctr::exec::ExecMode::Sequential)?)
    });
    let mut reports: Vec<RunReport> = pretrained.into_iter().map(|p| p.report).collect();
    for (i, outcome) in scratch.into_iter().enumerate() {
        let outcome = outcome?;
        save_outcome(cfg, &format!("rq1-mutual_scratch-{}", archs[i]), &outcome)?;
        reports.push(outcome.report);
    }
    let table = assemble_table(
        "Independent Training vs. Mutual Learning",
        &reports,
        Grouping::Regime,
        Baseline::BestIndependent,
    )?;
    write_table(cfg, &table, "rq1")?;
    Ok(table)
}

/// Mutual finetuning of each architecture's independently trained instances.
fn rq2(cfg: &ExperimentConfig, prep: &Prepared, workers: &Workers) -> Result<ResultTable> {
    need_two(cfg)?;
    let archs = &cfg.experiment.architectures;
    let runs = cfg.experiment.runs;
    let pretrained = ensure_independent(cfg, prep, workers, &jobs(archs, runs), cfg.experiment.auto_pretrain)?;
    let mut reports: Vec<RunReport> = pretrained.iter().map(|p| p.report.clone()).collect();
    for &a in archs {
        if let Some(r) = existing_report(cfg, &format!("rq1-mutual_scratch-{a}"))? {
            reports.push(r);
        }
    }
    for (i, &a) in archs.iter().enumerate() {
        let models = pretrained[i * runs..(i + 1) * runs].iter().map(|p| p.model.clone()).collect();
        let outcome = finetune(cfg, prep, models, run_seed(cfg, a, 0), workers)?;
        save_outcome(cfg, &format!("rq2-mutual_finetune-{a}"), &outcome)?;
        reports.push(outcome.report);
    }
    let table = assemble_table(
        "Independent Training vs. Mutual Learning",
        &reports,
        Grouping::Regime,
        Baseline::BestIndependent,
    )?;
    write_table(cfg, &table, "rq2")?;
    Ok(table)
}

/// Mutual finetuning across the four architectures, each starting from its
/// best independent run by dev AUC.
fn rq3(cfg: &ExperimentConfig, prep: &Prepared, workers: &Workers) -> Result<ResultTable> {
    let archs = &cfg.experiment.architectures;
    let mut distinct = archs.clone();
    distinct.sort();
    distinct.dedup();
    if archs.len() != 4 || distinct.len() != 4 {
        bail!(
            "mixed-model finetuning compares the four architectures; experiment.architectures lists {}",
            archs.len()
        );
    }
    let runs = cfg.experiment.runs;
    let pretrained = ensure_independent(cfg, prep, workers, &jobs(archs, runs), cfg.experiment.auto_pretrain)?;
    let mut reports: Vec<RunReport> = pretrained.iter().map(|p| p.report.clone()).collect();
    let mut best = Vec::with_capacity(4);
    for (i, &a) in archs.iter().enumerate() {
        let group = &pretrained[i * runs..(i + 1) * runs];
        let top = group
            .iter()
            .reduce(|x, y| if y.report.models[0].dev_auc > x.report.models[0].dev_auc { y } else { x })
            .expect("runs ≥ 1");
        best.push(top.model.clone());
        if let Some(r) = existing_report(cfg, &format!("rq2-mutual_finetune-{a}"))? {
            reports.push(r);
        }
    }
    let outcome = finetune(cfg, prep, best, cfg.training.seed, workers)?;
    save_outcome(cfg, "rq3-mutual_finetune-mixed", &outcome)?;
    reports.push(outcome.report);
    let table = assemble_table(
        "Same Model vs. Different Models",
        &reports,
        Grouping::Regime,
        Baseline::BestIndependent,
    )?;
    write_table(cfg, &table, "rq3")?;
    Ok(table)
}

/// Mutual finetuning of 5, 4, 3 and 2 pretrained instances, dropping the
/// worst by dev AUC each time.
fn rq4(cfg: &ExperimentConfig, prep: &Prepared, workers: &Workers) -> Result<ResultTable> {
    let a = cfg.sweep_architecture();
    let most = SWEEP_COUNTS[0];
    let jobs: Vec<(Architecture, usize)> = (0..most).map(|k| (a, k)).collect();
    let pretrained = ensure_independent(cfg, prep, workers, &jobs, cfg.experiment.auto_pretrain)?;
    let mut order: Vec<usize> = (0..most).collect();
    order.sort_by(|&x, &y| {
        let (dx, dy) = (pretrained[x].report.models[0].dev_auc, pretrained[y].report.models[0].dev_auc);
        dy.total_cmp(&dx).then(x.cmp(&y))
    });
    let mut reports = Vec::with_capacity(SWEEP_COUNTS.len());
    for count in SWEEP_COUNTS {
        let models = order[..count].iter().map(|&i| pretrained[i].model.clone()).collect();
        let outcome = finetune(cfg, prep, models, run_seed(cfg, a, 0), workers)?;
        save_outcome(cfg, &format!("rq4-mutual_finetune-{a}-{count}"), &outcome)?;
        reports.push(outcome.report);
    }
    let table = assemble_table(
        "Number of Co-trained Models",
        &reports,
        Grouping::CoTrainedCount,
        Baseline::BestPretrained,
    )?;
    write_table(cfg, &table, "rq4")?;
    Ok(table)
}

pub fn cmd_experiment(cfg: &ExperimentConfig, rq: u8, workers: &Workers) -> Result<ResultTable> {
    let prep = load_prepared(cfg)?;
    match rq {
        1 => rq1(cfg, &prep, workers),
        2 => rq2(cfg, &prep, workers),
        3 => rq3(cfg, &prep, workers),
        4 => rq4(cfg, &prep, workers),
        other => bail!("research question must be 1 to 4, got {other}"),
    }
}
