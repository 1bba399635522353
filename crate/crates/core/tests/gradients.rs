use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mutualctr::autodiff::{grad_check, Parameter};
use mutualctr::data::{encode_split, Batch, DatasetSplit, RawRow, RawTable};
use mutualctr::models::{Architecture, FieldLayout, ModelConfig, ModelInstance};
use mutualctr::training::{bce_loss, cohort_losses};

/// Three categorical and two numeric fields, some values missing.
fn mixed_table(rows: usize) -> (FieldLayout, DatasetSplit) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = (0..rows)
        .map(|_| RawRow {
            label: rng.gen_bool(0.4) as u8,
            numeric: (0..2)
                .map(|_| rng.gen_bool(0.9).then(|| rng.gen_range(0.0..50.0f64).floor()))
                .collect(),
            categorical: (0..3)
                .map(|j| rng.gen_bool(0.95).then(|| format!("{j}-{}", rng.gen_range(0..4))))
                .collect(),
        })
        .collect();
    let table = RawTable {
        numeric_names: vec!["n0".into(), "n1".into()],
        categorical_names: vec!["c0".into(), "c1".into(), "c2".into()],
        rows,
    };
    let (schema, split) = encode_split(&table, [0.8, 0.1, 0.1], 1).unwrap();
    (FieldLayout::from_schema(&schema), split)
}

fn config() -> ModelConfig {
    ModelConfig {
        embedding_dim: 3,
        tower: vec![6, 4],
        l2_embedding: 1e-2,
        l2_dense: 1e-2,
        ..ModelConfig::default()
    }
}

fn scramble(params: &mut [Parameter], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params {
        for x in p.tensor.data_mut() {
            *x = rng.gen_range(-0.6..0.6);
        }
    }
}

#[test]
fn every_architecture_matches_finite_differences() {
    let (layout, split) = mixed_table(100);
    let batch = Batch::from_examples(&split.train[..12]);
    for (i, arch) in Architecture::ALL.into_iter().enumerate() {
        let mut model = ModelInstance::new(arch, &config(), &layout, 7).unwrap();
        scramble(model.params_mut(), i as u64);
        let r = grad_check(
            |tape, vars| {
                let p = model.forward(tape, vars, &batch)?;
                let bce = bce_loss(tape, &batch.labels, p)?;
                let l2 = model.l2_penalty(tape, vars)?;
                tape.add(bce, l2)
            },
            model.params(),
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-5, "{arch}: {r:?}");
        assert_eq!(r.coordinates, model.num_parameters());
    }
}

#[test]
fn coupled_cohort_objective_matches_finite_differences() {
    let (layout, split) = mixed_table(60);
    let batch = Batch::from_examples(&split.train[..10]);
    let mut a = ModelInstance::new(Architecture::Deepfm, &config(), &layout, 1).unwrap();
    let mut b = ModelInstance::new(Architecture::Fibinet, &config(), &layout, 2).unwrap();
    scramble(a.params_mut(), 10);
    scramble(b.params_mut(), 11);
    let na = a.params().len();
    let mut joint: Vec<Parameter> = a.params().to_vec();
    joint.extend(b.params().iter().map(|p| Parameter::new(format!("b.{}", p.id), p.tensor.clone(), p.l2_group)));

    let r = grad_check(
        |tape, vars| {
            let pa = a.forward(tape, &vars[..na], &batch)?;
            let pb = b.forward(tape, &vars[na..], &batch)?;
            let preds = [pa, pb];
            let mut total = None;
            for n in 0..2 {
                let bce = bce_loss(tape, &batch.labels, preds[n])?;
                let term = mutualctr::training::mutual_term(tape, n, &preds, false)?;
                let term = tape.scale(term, 0.7);
                let l = tape.add(bce, term)?;
                total = Some(match total {
                    None => l,
                    Some(t) => tape.add(t, l)?,
                });
            }
            Ok(total.unwrap())
        },
        &joint,
        1e-6,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");

    // the composite graph helper builds the same losses
    let mut tape = mutualctr::autodiff::Tape::new();
    let g = cohort_losses(&mut tape, &[&a, &b], &batch, 0.7, false).unwrap();
    assert_eq!(g.vars[0].len(), na);
    assert_eq!(g.losses.len(), 2);
}
