use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::config::{ModelSpec, RunConfig, TrainMode};
use super::loss::{bce_loss, mutual_term};
use super::optim::{adam_step, collect_grads, lr_at, OptimizerState};
use super::report::{EpochRecord, ModelResult, PretrainedScores, RunReport};
use crate::autodiff::{Parameter, Tape, Tensor, Var};
use crate::data::{batches, num_batches, Batch, DatasetSplit, Example};
use crate::error::{Error, Result};
use crate::eval::{auc, logloss};
use crate::exec::{map_mut, map_range, ExecMode};
use crate::models::{FieldLayout, ModelConfig, ModelInstance};

/// A named dataset split to train on.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub name: &'a str,
    pub split: &'a DatasetSplit,
}

/// Trained models, their report and the time the run took.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub models: Vec<ModelInstance>,
    pub report: RunReport,
    pub elapsed: Duration,
}

/// Fresh models for `specs`; model `i` without its own seed uses `run_seed + i`.
pub fn init_models(specs: &[ModelSpec], config: &ModelConfig, layout: &FieldLayout, run_seed: u64) -> Result<Vec<ModelInstance>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = s.seed.unwrap_or(run_seed.wrapping_add(i as u64));
            ModelInstance::new(s.architecture, config, layout, seed)
        })
        .collect()
}

/// Weights of one member's objective:
/// `label_weight · bce + target_weight · mean_t mse(t, p) + l2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Objective {
    label_weight: f64,
    target_weight: f64,
    peers_are_targets: bool,
    detach: bool,
}

#[derive(Debug, Clone)]
struct Member {
    model: ModelInstance,
    state: OptimizerState,
}

struct Pass {
    tape: Tape,
    vars: Vec<Var>,
    pred: Var,
}

/// Models stepped together on shared batches.
#[derive(Debug, Clone)]
pub struct Cohort {
    members: Vec<Member>,
    objective: Objective,
    teacher: Option<ModelInstance>,
    exec: ExecMode,
}

impl Cohort {
    /// Each model trained on labels alone.
    pub fn independent(model: ModelInstance, exec: ExecMode) -> Self {
        Self::build(
            vec![model],
            Objective {
                label_weight: 1.0,
                target_weight: 0.0,
                peers_are_targets: false,
                detach: true,
            },
            None,
            exec,
        )
    }

    /// Mutual learning: every model also matches its peers, weighted by `lambda`.
    pub fn mutual(models: Vec<ModelInstance>, lambda: f64, detach_peers: bool, exec: ExecMode) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::Config(format!(
                "mutual learning needs at least two models, got {}",
                models.len()
            )));
        }
        let hash = &models[0].layout.schema_hash;
        if let Some(m) = models.iter().find(|m| &m.layout.schema_hash != hash) {
            return Err(Error::SchemaMismatch {
                expected: hash.clone(),
                found: m.layout.schema_hash.clone(),
            });
        }
        Ok(Self::build(
            models,
            Objective {
                label_weight: 1.0,
                target_weight: lambda,
                peers_are_targets: true,
                detach: detach_peers,
            },
            None,
            exec,
        ))
    }

    /// A student matching a frozen teacher with weight `1 − alpha`.
    pub fn distill(teacher: ModelInstance, student: ModelInstance, alpha: f64, exec: ExecMode) -> Result<Self> {
        if teacher.layout.schema_hash != student.layout.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: student.layout.schema_hash.clone(),
                found: teacher.layout.schema_hash.clone(),
            });
        }
        Ok(Self::build(
            vec![student],
            Objective {
                label_weight: alpha,
                target_weight: 1.0 - alpha,
                peers_are_targets: false,
                detach: true,
            },
            Some(teacher),
            exec,
        ))
    }

    fn build(models: Vec<ModelInstance>, objective: Objective, teacher: Option<ModelInstance>, exec: ExecMode) -> Self {
        let members = models
            .into_iter()
            .map(|model| Member {
                state: OptimizerState::new(model.params()),
                model,
            })
            .collect();
        Self {
            members,
            objective,
            teacher,
            exec,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelInstance> {
        self.members.iter().map(|m| &m.model)
    }

    pub fn into_models(self) -> Vec<ModelInstance> {
        self.members.into_iter().map(|m| m.model).collect()
    }

    /// One optimizer step for every member. All forward passes run before any
    /// update, so each model sees its peers' pre-update predictions. Returns
    /// each member's objective without the L2 term.
    pub fn step(&mut self, batch: &Batch, lr: f64) -> Result<Vec<f64>> {
        if self.objective.peers_are_targets && !self.objective.detach {
            return self.step_coupled(batch, lr);
        }
        let teacher = self.teacher.as_ref().map(|t| t.predict(batch)).transpose()?;
        let passes = map_mut(self.exec, &mut self.members, |_, m| -> Result<Pass> {
            let mut tape = Tape::new();
            let vars = m.model.bind(&mut tape);
            let pred = m.model.forward(&mut tape, &vars, batch)?;
            Ok(Pass { tape, vars, pred })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let preds: Vec<Tensor> = passes.iter().map(|p| p.tape.value(p.pred).clone()).collect();
        let objective = self.objective;

        let mut work: Vec<(&mut Member, Pass)> = self.members.iter_mut().zip(passes).collect();
        map_mut(self.exec, &mut work, |n, (member, pass)| -> Result<f64> {
            let tape = &mut pass.tape;
            let bce = bce_loss(tape, &batch.labels, pass.pred)?;
            let mut total = tape.scale(bce, objective.label_weight);
            let targets: Vec<Var> = if let Some(t) = &teacher {
                vec![tape.constant(Tensor::new(vec![t.len()], t.clone())?), pass.pred]
            } else if objective.peers_are_targets {
                preds
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if i == n { pass.pred } else { tape.constant(p.clone()) })
                    .collect()
            } else {
                Vec::new()
            };
            if !targets.is_empty() {
                let own = if teacher.is_some() { 1 } else { n };
                let term = mutual_term(tape, own, &targets, true)?;
                let weighted = tape.scale(term, objective.target_weight);
                total = tape.add(total, weighted)?;
            }
            let reported = tape.value(total).data()[0];
            let l2 = member.model.l2_penalty(tape, &pass.vars)?;
            let loss = tape.add(total, l2)?;
            let grads = tape.backward(loss)?;
            let grads = collect_grads(member.model.params(), &grads, "")?;
            adam_step(member.model.params_mut(), &grads, &mut member.state, lr)?;
            Ok(reported)
        })
        .into_iter()
        .collect()
    }

    /// Joint step on the summed objective with peers left attached, so each
    /// model also receives gradient from the terms of its peers' losses.
    fn step_coupled(&mut self, batch: &Batch, lr: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let models: Vec<&ModelInstance> = self.members.iter().map(|m| &m.model).collect();
        let graph = cohort_losses(&mut tape, &models, batch, self.objective.target_weight, false)?;
        let mut reported = Vec::with_capacity(self.members.len());
        let mut terms = Vec::with_capacity(self.members.len());
        for (n, member) in self.members.iter().enumerate() {
            reported.push(tape.value(graph.losses[n]).data()[0]);
            let l2 = member.model.l2_penalty(&mut tape, &graph.vars[n])?;
            terms.push(tape.add(graph.losses[n], l2)?);
        }
        let all = tape.concat(&terms, 0)?;
        let total = tape.sum(all, None)?;
        let grads = tape.backward(total)?;
        for (n, member) in self.members.iter_mut().enumerate() {
            let g = collect_grads(member.model.params(), &grads, &member_prefix(n))?;
            adam_step(member.model.params_mut(), &g, &mut member.state, lr)?;
        }
        Ok(reported)
    }
}

fn member_prefix(n: usize) -> String {
    format!("m{n}/")
}

/// All models of a cohort on one tape.
#[derive(Debug, Clone)]
pub struct CohortGraph {
    /// Parameter vars per model; ids carry an `m{n}/` prefix.
    pub vars: Vec<Vec<Var>>,
    pub predictions: Vec<Var>,
    /// `bce_n + lambda · mutual_term(n)`, without L2.
    pub losses: Vec<Var>,
}

/// Records every model on `tape` and builds each one's mutual-learning loss.
pub fn cohort_losses(tape: &mut Tape, models: &[&ModelInstance], batch: &Batch, lambda: f64, detach: bool) -> Result<CohortGraph> {
    let mut vars = Vec::with_capacity(models.len());
    let mut predictions = Vec::with_capacity(models.len());
    for (n, m) in models.iter().enumerate() {
        let prefix = member_prefix(n);
        let v: Vec<Var> = m
            .params()
            .iter()
            .map(|p: &Parameter| tape.param(&format!("{prefix}{}", p.id), &p.tensor))
            .collect();
        predictions.push(m.forward(tape, &v, batch)?);
        vars.push(v);
    }
    let mut losses = Vec::with_capacity(models.len());
    for n in 0..models.len() {
        let bce = bce_loss(tape, &batch.labels, predictions[n])?;
        let term = mutual_term(tape, n, &predictions, detach)?;
        let weighted = tape.scale(term, lambda);
        losses.push(tape.add(bce, weighted)?);
    }
    Ok(CohortGraph {
        vars,
        predictions,
        losses,
    })
}

/// Probabilities for `rows`, evaluated `batch_size` rows at a time.
pub fn predict_rows(model: &ModelInstance, rows: &[Example], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len());
    for batch in batches(rows, batch_size.max(1), None, 0)? {
        out.extend(model.predict(&batch)?);
    }
    Ok(out)
}

/// AUC and log loss of `model` on `rows`.
pub fn evaluate(model: &ModelInstance, rows: &[Example], batch_size: usize) -> Result<(f64, f64)> {
    let scores = predict_rows(model, rows, batch_size)?;
    let labels: Vec<u8> = rows.iter().map(|e| e.label).collect();
    Ok((auc(&scores, &labels)?, logloss(&scores, &labels)?))
}

fn evaluate_all(models: &[&ModelInstance], rows: &[Example], batch_size: usize, exec: ExecMode) -> Result<Vec<(f64, f64)>> {
    map_range(exec, models.len(), |i| evaluate(models[i], rows, batch_size))
        .into_iter()
        .collect()
}

struct Plan {
    mode: TrainMode,
    /// Keep each model's best-dev parameters and stop once dev AUC stalls.
    early_stopping: bool,
    pretrained: Option<Vec<PretrainedScores>>,
}

fn run(mut cohort: Cohort, data: TrainData<'_>, cfg: &RunConfig, plan: Plan) -> Result<RunOutcome> {
    let start = Instant::now();
    let split = data.split;
    if split.train.is_empty() || split.dev.is_empty() || split.test.is_empty() {
        return Err(Error::Data("train, dev and test parts must all be non-empty".into()));
    }
    let n = cohort.len();
    let ids: Vec<String> = cohort
        .models()
        .enumerate()
        .map(|(i, m)| format!("{}#{i}", m.architecture))
        .collect();
    let model_config = cohort.members[0].model.config.clone();
    let exec = cohort.exec;
    let lr0 = cfg.lr0();
    let steps_per_epoch = num_batches(split.train.len(), cfg.batch_size) as f64;
    let max_steps = cfg.max_steps.unwrap_or(u64::MAX);

    let mut records = Vec::new();
    let mut best: Vec<(f64, usize, Option<Vec<Parameter>>)> = vec![(f64::NEG_INFINITY, 0, None); n];
    let mut stale = 0;
    let mut steps: u64 = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs() {
        if steps >= max_steps {
            break;
        }
        let first_lr = lr_at(lr0, steps as f64 / steps_per_epoch);
        let mut sums = vec![0.0; n];
        let mut count = 0usize;
        for (b, batch) in batches(&split.train, cfg.batch_size, Some(cfg.seed), epoch as u64)?.enumerate() {
            if steps >= max_steps {
                break;
            }
            let lr = lr_at(lr0, steps as f64 / steps_per_epoch);
            let losses = cohort
                .step(&batch, lr)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}, batch {b}: {e}")))?;
            if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}, batch {b}: loss of {} is {}",
                    ids[i], losses[i]
                )));
            }
            sums.iter_mut().zip(&losses).for_each(|(s, l)| *s += l);
            count += 1;
            steps += 1;
        }
        epochs_run = epoch;
        let models: Vec<&ModelInstance> = cohort.models().collect();
        let dev = evaluate_all(&models, &split.dev, cfg.batch_size, exec)?;
        for (i, &(dev_auc, dev_logloss)) in dev.iter().enumerate() {
            let train_loss = sums[i] / count.max(1) as f64;
            info!(
                "epoch {epoch} {}: train loss {train_loss:.5}, dev auc {dev_auc:.5}, dev logloss {dev_logloss:.5}",
                ids[i]
            );
            records.push(EpochRecord {
                epoch,
                model_id: ids[i].clone(),
                train_loss,
                dev_auc,
                dev_logloss,
                lr: first_lr,
            });
        }
        if plan.early_stopping {
            let mut improved = false;
            for (i, &(dev_auc, _)) in dev.iter().enumerate() {
                if dev_auc > best[i].0 {
                    best[i] = (dev_auc, epoch, Some(cohort.members[i].model.params().to_vec()));
                    improved = true;
                }
            }
            stale = if improved { 0 } else { stale + 1 };
            if stale >= cfg.patience {
                debug!("no dev improvement for {stale} epochs, stopping after epoch {epoch}");
                break;
            }
        }
    }

    let mut results = Vec::with_capacity(n);
    for (i, member) in cohort.members.iter_mut().enumerate() {
        if let Some(params) = best[i].2.take() {
            member.model.params_mut().clone_from_slice(&params);
        }
    }
    let models: Vec<&ModelInstance> = cohort.models().collect();
    let dev = evaluate_all(&models, &split.dev, cfg.batch_size, exec)?;
    let test = evaluate_all(&models, &split.test, cfg.batch_size, exec)?;
    for i in 0..n {
        let pretrained = plan.pretrained.as_ref().map(|p| p[i].clone());
        // undefined when the starting point is no better than chance
        let relaimp_test = match &pretrained {
            Some(p) => match crate::eval::relaimp(test[i].0, p.test_auc) {
                Ok(r) => Some(r),
                Err(e) => {
                    warn!("{}: {e}", ids[i]);
                    None
                }
            },
            None => None,
        };
        results.push(ModelResult {
            model_id: ids[i].clone(),
            architecture: models[i].architecture,
            best_epoch: if plan.early_stopping { best[i].1 } else { epochs_run },
            dev_auc: dev[i].0,
            dev_logloss: dev[i].1,
            test_auc: test[i].0,
            test_logloss: test[i].1,
            pretrained,
            relaimp_test,
        });
    }
    let report = RunReport {
        mode: plan.mode,
        dataset: data.name.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        model_config,
        steps,
        epochs: records,
        models: results,
    };
    Ok(RunOutcome {
        models: cohort.into_models(),
        report,
        elapsed: start.elapsed(),
    })
}

fn check_mode(cfg: &RunConfig, expected: TrainMode, models: usize) -> Result<()> {
    if cfg.mode != expected {
        return Err(Error::Config(format!("run configured for {} passed to {expected} training", cfg.mode)));
    }
    cfg.validate(models)
}

/// Trains one model on labels, keeping its best-dev parameters.
pub fn train_independent(model: ModelInstance, data: TrainData<'_>, cfg: &RunConfig, exec: ExecMode) -> Result<RunOutcome> {
    check_mode(cfg, TrainMode::Independent, 1)?;
    let plan = Plan {
        mode: TrainMode::Independent,
        early_stopping: true,
        pretrained: None,
    };
    run(Cohort::independent(model, exec), data, cfg, plan)
}

/// Mutual learning from the given starting parameters, with early stopping.
pub fn train_mutual(models: Vec<ModelInstance>, data: TrainData<'_>, cfg: &RunConfig, exec: ExecMode) -> Result<RunOutcome> {
    check_mode(cfg, TrainMode::MutualScratch, models.len())?;
    let cohort = Cohort::mutual(models, cfg.lambda, cfg.detach_peers, exec)?;
    let plan = Plan {
        mode: TrainMode::MutualScratch,
        early_stopping: true,
        pretrained: None,
    };
    run(cohort, data, cfg, plan)
}

/// Mutual learning on pretrained models for a fixed number of epochs; the
/// report compares each model with its own starting point.
pub fn finetune_mutual(models: Vec<ModelInstance>, data: TrainData<'_>, cfg: &RunConfig, exec: ExecMode) -> Result<RunOutcome> {
    check_mode(cfg, TrainMode::MutualFinetune, models.len())?;
    let refs: Vec<&ModelInstance> = models.iter().collect();
    let dev = evaluate_all(&refs, &data.split.dev, cfg.batch_size, exec)?;
    let test = evaluate_all(&refs, &data.split.test, cfg.batch_size, exec)?;
    let pretrained = dev
        .iter()
        .zip(&test)
        .map(|(d, t)| PretrainedScores {
            dev_auc: d.0,
            test_auc: t.0,
        })
        .collect();
    let cohort = Cohort::mutual(models, cfg.lambda, cfg.detach_peers, exec)?;
    let plan = Plan {
        mode: TrainMode::MutualFinetune,
        early_stopping: false,
        pretrained: Some(pretrained),
    };
    run(cohort, data, cfg, plan)
}

/// Distills a frozen teacher into `student`.
pub fn train_kd(teacher: ModelInstance, student: ModelInstance, data: TrainData<'_>, cfg: &RunConfig, exec: ExecMode) -> Result<RunOutcome> {
    check_mode(cfg, TrainMode::Kd, 1)?;
    let (teacher_auc, _) = evaluate(&teacher, &data.split.dev, cfg.batch_size)?;
    if teacher_auc <= 0.55 {
        warn!("teacher dev AUC is only {teacher_auc:.4}; it may be untrained");
    }
    let cohort = Cohort::distill(teacher, student, cfg.alpha, exec)?;
    let plan = Plan {
        mode: TrainMode::Kd,
        early_stopping: true,
        pretrained: None,
    };
    run(cohort, data, cfg, plan)
}
