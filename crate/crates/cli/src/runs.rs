//! Shared plumbing: worker pool, single runs and artifact writing.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use mutualctr::exec::ExecMode;
use mutualctr::models::{load_checkpoint, save_checkpoint, Architecture, ModelInstance};
use mutualctr::training::{train_independent, RunConfig, RunOutcome, RunReport, TrainData, TrainMode};

use crate::config::ExperimentConfig;
use crate::prepare::Prepared;

/// Runs independent jobs on up to `k` threads.
pub struct Workers {
    k: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(k: usize) -> Result<Self> {
        let k = k.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = if k > 1 {
                Some(rayon::ThreadPoolBuilder::new().num_threads(k).build()?)
            } else {
                None
            };
            Ok(Self { k, pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            if k > 1 {
                log::warn!("built without the `parallel` feature; running sequentially");
            }
            Ok(Self { k })
        }
    }

    /// How a cohort spreads its per-model work.
    pub fn exec(&self) -> ExecMode {
        #[cfg(feature = "parallel")]
        if self.k > 1 {
            return ExecMode::Parallel;
        }
        ExecMode::Sequential
    }

    /// `f(0..n)` in index order, concurrently when more than one worker is configured.
    pub fn map<R: Send>(&self, n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| mutualctr::exec::map_range(ExecMode::Parallel, n, f));
        }
        (0..n).map(f).collect()
    }
}

/// Run config for one phase, derived from the `[training]` block.
pub fn phase_config(cfg: &ExperimentConfig, mode: TrainMode, seed: u64) -> RunConfig {
    let mut rc = cfg.training.clone();
    rc.mode = mode;
    rc.seed = seed;
    if mode == TrainMode::MutualFinetune {
        rc.lr0 = Some(cfg.experiment.finetune_lr);
        rc.epochs = Some(cfg.experiment.finetune_epochs);
    }
    rc
}

/// One independent run of `architecture` with model and shuffle seed `seed`.
pub fn independent(cfg: &ExperimentConfig, prep: &Prepared, architecture: Architecture, seed: u64) -> Result<RunOutcome> {
    let model = ModelInstance::new(architecture, &cfg.model, &prep.layout, seed)?;
    let rc = phase_config(cfg, TrainMode::Independent, seed);
    let name = cfg.dataset.name();
    let data = TrainData {
        name: &name,
        split: &prep.split,
    };
    Ok(train_independent(model, data, &rc, ExecMode::Sequential)?)
}

pub fn checkpoint_path(cfg: &ExperimentConfig, stem: &str, index: usize, count: usize) -> PathBuf {
    if count == 1 {
        cfg.checkpoints_dir().join(format!("{stem}.ckpt"))
    } else {
        cfg.checkpoints_dir().join(format!("{stem}-{index}.ckpt"))
    }
}

/// Writes checkpoints, the report (JSON + CSV) and a timing line for `stem`.
pub fn save_outcome(cfg: &ExperimentConfig, stem: &str, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(cfg.checkpoints_dir())?;
    let reports = cfg.reports_dir();
    outcome.report.write(&reports, stem)?;
    let mut paths = Vec::with_capacity(outcome.models.len());
    for (i, m) in outcome.models.iter().enumerate() {
        let p = checkpoint_path(cfg, stem, i, outcome.models.len());
        save_checkpoint(m, &p).with_context(|| format!("writing {}", p.display()))?;
        paths.push(p);
    }
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(reports.join("timing.log"))?;
    writeln!(log, "{stem}\t{:.3}", outcome.elapsed.as_secs_f64())?;
    info!(
        "{stem}: mean test AUC {:.5} ({} models, {:.1}s)",
        outcome.report.mean_test_auc(),
        outcome.models.len(),
        outcome.elapsed.as_secs_f64()
    );
    Ok(paths)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Report and checkpoints previously written for `stem`, if both exist, were
/// produced by `expected` under the current model settings, and match the
/// prepared schema.
pub fn load_outcome(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    stem: &str,
    count: usize,
    expected: &RunConfig,
) -> Result<Option<(RunReport, Vec<ModelInstance>)>> {
    let report_path = cfg.reports_dir().join(format!("{stem}.json"));
    if !report_path.exists() {
        return Ok(None);
    }
    let report = read_report(&report_path)?;
    let stale = report.model_config != cfg.model
        || report.config != *expected
        || report.dataset != cfg.dataset.name()
        || report.models.len() != count;
    if stale {
        return Ok(None);
    }
    let mut models = Vec::with_capacity(count);
    for i in 0..count {
        let p = checkpoint_path(cfg, stem, i, count);
        if !p.exists() {
            return Ok(None);
        }
        models.push(load_checkpoint(&p, Some(&prep.schema.hash()))?);
    }
    Ok(Some((report, models)))
}
