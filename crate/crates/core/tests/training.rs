use mutualctr::data::{batches, encode_split, synth_generate, Batch, DatasetSplit, SynthConfig, DEFAULT_RATIOS};
use mutualctr::exec::ExecMode;
use mutualctr::models::{Architecture, FieldLayout, ModelConfig, ModelInstance};
use mutualctr::training::{
    finetune_mutual, predict_rows, train_independent, train_kd, train_mutual, Cohort, RunConfig, TrainData, TrainMode,
};
use mutualctr::Error;

fn data(rows: usize) -> (FieldLayout, DatasetSplit) {
    let ds = synth_generate(&SynthConfig {
        rows,
        ..SynthConfig::default()
    })
    .unwrap();
    let (schema, split) = encode_split(&ds.table, DEFAULT_RATIOS, 1).unwrap();
    (FieldLayout::from_schema(&schema), split)
}

fn small() -> ModelConfig {
    ModelConfig {
        embedding_dim: 8,
        tower: vec![32, 16],
        ..ModelConfig::default()
    }
}

fn quick(mode: TrainMode) -> RunConfig {
    RunConfig {
        batch_size: 200,
        epochs: Some(2),
        ..RunConfig::with_mode(mode)
    }
}

fn max_diff(a: &ModelInstance, b: &ModelInstance) -> f64 {
    a.params()
        .iter()
        .zip(b.params())
        .flat_map(|(x, y)| x.tensor.data().iter().zip(y.tensor.data()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn reruns_are_bit_identical() {
    let (layout, split) = data(4000);
    let d = TrainData { name: "synth", split: &split };
    let run = || {
        let models = (0..2)
            .map(|s| ModelInstance::new(Architecture::Pnn, &small(), &layout, s).unwrap())
            .collect();
        train_mutual(models, d, &quick(TrainMode::MutualScratch), ExecMode::Sequential).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
    assert_eq!(a.models, b.models);
}

#[test]
fn parallel_and_sequential_cohorts_agree() {
    let (layout, split) = data(3000);
    let d = TrainData { name: "synth", split: &split };
    let models = || -> Vec<ModelInstance> {
        Architecture::ALL
            .iter()
            .map(|&a| ModelInstance::new(a, &small(), &layout, 4).unwrap())
            .collect()
    };
    let cfg = quick(TrainMode::MutualScratch);
    let seq = train_mutual(models(), d, &cfg, ExecMode::Sequential).unwrap();
    let par = train_mutual(models(), d, &cfg, ExecMode::default()).unwrap();
    assert_eq!(seq.report, par.report);
    assert_eq!(seq.models, par.models);
}

#[test]
fn identical_twins_train_like_one_model() {
    // equal predictions make the mutual term and its gradient vanish
    let (layout, split) = data(3000);
    let d = TrainData { name: "synth", split: &split };
    let m = ModelInstance::new(Architecture::Dcn, &small(), &layout, 8).unwrap();
    let cfg = RunConfig {
        max_steps: Some(20),
        ..quick(TrainMode::MutualScratch)
    };
    let twins = train_mutual(vec![m.clone(), m.clone()], d, &cfg, ExecMode::Sequential).unwrap();
    let alone_cfg = RunConfig {
        mode: TrainMode::Independent,
        ..cfg
    };
    let alone = train_independent(m, d, &alone_cfg, ExecMode::Sequential).unwrap();
    assert_eq!(twins.models[0], twins.models[1]);
    assert!(max_diff(&twins.models[0], &alone.models[0]) <= 1e-12);
}

#[test]
fn peers_change_the_trajectory() {
    let (layout, split) = data(3000);
    let d = TrainData { name: "synth", split: &split };
    let models = || -> Vec<ModelInstance> {
        (0..2)
            .map(|s| ModelInstance::new(Architecture::Deepfm, &small(), &layout, s).unwrap())
            .collect()
    };
    let base = RunConfig {
        max_steps: Some(20),
        ..quick(TrainMode::MutualScratch)
    };
    let with = train_mutual(models(), d, &base, ExecMode::Sequential).unwrap();
    let without = train_mutual(
        models(),
        d,
        &RunConfig {
            lambda: 0.0,
            ..base.clone()
        },
        ExecMode::Sequential,
    )
    .unwrap();
    assert!(max_diff(&with.models[0], &without.models[0]) > 1e-9);

    let coupled = train_mutual(
        models(),
        d,
        &RunConfig {
            detach_peers: false,
            ..base
        },
        ExecMode::Sequential,
    )
    .unwrap();
    assert!(max_diff(&with.models[0], &coupled.models[0]) > 1e-12);
}

#[test]
fn distillation_with_full_label_weight_is_independent_training() {
    let (layout, split) = data(3000);
    let d = TrainData { name: "synth", split: &split };
    let teacher = ModelInstance::new(Architecture::Fibinet, &small(), &layout, 99).unwrap();
    let student = ModelInstance::new(Architecture::Deepfm, &small(), &layout, 5).unwrap();
    let kd = train_kd(
        teacher,
        student.clone(),
        d,
        &RunConfig {
            alpha: 1.0,
            ..quick(TrainMode::Kd)
        },
        ExecMode::Sequential,
    )
    .unwrap();
    let alone = train_independent(student, d, &quick(TrainMode::Independent), ExecMode::Sequential).unwrap();
    assert!(max_diff(&kd.models[0], &alone.models[0]) <= 1e-12);
}

#[test]
fn distillation_from_a_constant_teacher_pulls_toward_it() {
    let (layout, split) = data(3000);
    // all-zero parameters predict exactly 0.5 everywhere
    let mut teacher = ModelInstance::new(Architecture::Deepfm, &small(), &layout, 1).unwrap();
    for p in teacher.params_mut() {
        p.tensor.data_mut().fill(0.0);
    }
    let mut student = ModelInstance::new(Architecture::Deepfm, &small(), &layout, 2).unwrap();
    student.params_mut().iter_mut().find(|p| p.id == "bias").unwrap().tensor.data_mut()[0] = -1.0;
    let spread = |m: &ModelInstance| {
        let p = predict_rows(m, &split.dev, 500).unwrap();
        p.iter().map(|x| (x - 0.5).abs()).sum::<f64>() / p.len() as f64
    };
    let before = spread(&student);
    let mut cohort = Cohort::distill(teacher, student, 0.0, ExecMode::Sequential).unwrap();
    for epoch in 0..4 {
        for batch in batches(&split.train, 100, Some(1), epoch).unwrap() {
            cohort.step(&batch, 2e-2).unwrap();
        }
    }
    let after = spread(&cohort.into_models()[0]);
    assert!(before > 0.15 && after < 0.02, "{before} -> {after}");
}

#[test]
fn zero_epoch_finetune_is_identity() {
    let (layout, split) = data(2000);
    let d = TrainData { name: "synth", split: &split };
    let models: Vec<ModelInstance> = (0..3)
        .map(|s| ModelInstance::new(Architecture::Pnn, &small(), &layout, s).unwrap())
        .collect();
    let cfg = RunConfig {
        epochs: Some(0),
        ..RunConfig::with_mode(TrainMode::MutualFinetune)
    };
    let out = finetune_mutual(models.clone(), d, &cfg, ExecMode::Sequential).unwrap();
    assert_eq!(out.models, models);
    assert_eq!(out.report.steps, 0);
    for m in &out.report.models {
        assert_eq!(m.test_auc, m.pretrained.as_ref().unwrap().test_auc);
        let expected = (m.test_auc > 0.5).then_some(0.0);
        assert_eq!(m.relaimp_test, expected);
    }
}

#[test]
fn finetune_runs_one_epoch_without_restoring() {
    let (layout, split) = data(2000);
    let d = TrainData { name: "synth", split: &split };
    let models: Vec<ModelInstance> = (0..2)
        .map(|s| ModelInstance::new(Architecture::Dcn, &small(), &layout, s).unwrap())
        .collect();
    let cfg = RunConfig {
        batch_size: 100,
        ..RunConfig::with_mode(TrainMode::MutualFinetune)
    };
    let out = finetune_mutual(models.clone(), d, &cfg, ExecMode::Sequential).unwrap();
    assert_eq!(out.report.steps, 16);
    assert_eq!(out.report.config.lr0(), 7e-4);
    assert!(out.report.models.iter().all(|m| m.best_epoch == 1));
    assert!(max_diff(&out.models[0], &models[0]) > 0.0);
}

#[test]
fn seeds_give_different_models() {
    let (layout, split) = data(2000);
    let d = TrainData { name: "synth", split: &split };
    let run = |seed| {
        let m = ModelInstance::new(Architecture::Fibinet, &small(), &layout, seed).unwrap();
        let cfg = RunConfig {
            seed,
            ..quick(TrainMode::Independent)
        };
        train_independent(m, d, &cfg, ExecMode::Sequential).unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert!(max_diff(&a.models[0], &b.models[0]) > 1e-6);
    assert_ne!(a.report.models[0].test_auc, b.report.models[0].test_auc);
}

#[test]
fn divergence_is_reported() {
    let (layout, split) = data(2000);
    let d = TrainData { name: "synth", split: &split };
    let mut m = ModelInstance::new(Architecture::Deepfm, &small(), &layout, 1).unwrap();
    m.params_mut()[0].tensor.data_mut()[5] = f64::NAN;
    let err = train_independent(m, d, &quick(TrainMode::Independent), ExecMode::Sequential).unwrap_err();
    assert!(matches!(err, Error::Diverged(_)), "{err}");
}

#[test]
fn cohorts_reject_bad_membership() {
    let (layout, _) = data(500);
    let m = ModelInstance::new(Architecture::Deepfm, &small(), &layout, 1).unwrap();
    assert!(Cohort::mutual(vec![m.clone()], 1.0, true, ExecMode::Sequential).is_err());
    let mut other = layout.clone();
    other.schema_hash = "elsewhere".into();
    let n = ModelInstance::new(Architecture::Deepfm, &small(), &other, 1).unwrap();
    assert!(matches!(
        Cohort::mutual(vec![m, n], 1.0, true, ExecMode::Sequential),
        Err(Error::SchemaMismatch { .. })
    ));
}

#[test]
fn step_reports_label_plus_peer_loss() {
    let (layout, split) = data(500);
    let batch = Batch::from_examples(&split.train[..50]);
    let models: Vec<ModelInstance> = (0..3)
        .map(|s| ModelInstance::new(Architecture::Deepfm, &small(), &layout, s).unwrap())
        .collect();
    let mut cohort = Cohort::mutual(models.clone(), 2.0, true, ExecMode::Sequential).unwrap();
    let losses = cohort.step(&batch, 1e-3).unwrap();
    let preds: Vec<Vec<f64>> = models.iter().map(|m| m.predict(&batch).unwrap()).collect();
    for (n, l) in losses.iter().enumerate() {
        let bce = preds[n]
            .iter()
            .zip(&batch.labels)
            .map(|(p, y)| {
                let p = p.clamp(1e-7, 1.0 - 1e-7);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 50.0;
        let peers = (0..3)
            .filter(|&i| i != n)
            .map(|i| preds[i].iter().zip(&preds[n]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 50.0)
            .sum::<f64>()
            / 2.0;
        assert!((l - (bce + 2.0 * peers)).abs() < 1e-12, "{n}: {l}");
    }
}
