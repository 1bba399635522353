use std::fs;

use mutualctr::data::{
    encode_split, read_cache, read_table, synth_generate, write_cache, write_synth_csv, DataFormat, FieldKind, RawRow,
    RawTable, SynthConfig, DEFAULT_RATIOS, OOV_INDEX,
};
use mutualctr::eval::auc;

#[test]
fn signal_free_generator_has_chance_bayes_auc() {
    let ds = synth_generate(&SynthConfig {
        rows: 5000,
        first_order_scale: 0.0,
        interaction_scale: 0.0,
        ..SynthConfig::default()
    })
    .unwrap();
    assert!((ds.meta.bayes_auc - 0.5).abs() < 1e-12, "{}", ds.meta.bayes_auc);
}

#[test]
fn default_generator_is_learnable_but_noisy() {
    let ds = synth_generate(&SynthConfig::default()).unwrap();
    assert_eq!(ds.table.rows.len(), 100_000);
    assert_eq!(ds.table.categorical_names.len(), 8);
    let labels: Vec<u8> = ds.table.rows.iter().map(|r| r.label).collect();
    assert!(ds.meta.bayes_auc > 0.75 && ds.meta.bayes_auc < 0.95, "{}", ds.meta.bayes_auc);
    assert_eq!(auc(&ds.bayes_scores, &labels).unwrap(), ds.meta.bayes_auc);
    let ctr = labels.iter().map(|&y| y as f64).sum::<f64>() / labels.len() as f64;
    assert!(ctr > 0.1 && ctr < 0.6, "{ctr}");
}

#[test]
fn generator_is_seeded() {
    let cfg = SynthConfig {
        rows: 1000,
        ..SynthConfig::default()
    };
    let a = synth_generate(&cfg).unwrap();
    assert_eq!(a.table, synth_generate(&cfg).unwrap().table);
    let b = synth_generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.table, b.table);
}

#[test]
fn held_out_parts_do_not_shape_the_schema() {
    let mut rows: Vec<RawRow> = (0..80)
        .map(|i| RawRow {
            label: (i % 3 == 0) as u8,
            numeric: vec![Some((i % 5) as f64)],
            categorical: vec![Some(format!("seen{}", i % 4))],
        })
        .collect();
    for _ in 0..20 {
        rows.push(RawRow {
            label: 1,
            numeric: vec![Some(1e6)],
            categorical: vec![Some("unseen".into())],
        });
    }
    let table = RawTable {
        numeric_names: vec!["n".into()],
        categorical_names: vec!["c".into()],
        rows,
    };
    let (schema, split) = encode_split(&table, DEFAULT_RATIOS, 1).unwrap();
    assert!(split.dev.iter().chain(&split.test).all(|e| e.cat[0] == OOV_INDEX));
    assert!(split.train.iter().all(|e| e.cat[0] != OOV_INDEX));
    let numeric = schema.numeric().next().unwrap();
    assert_eq!(numeric.kind, FieldKind::Numeric);
    assert!(numeric.mean.unwrap() < 5.0, "{:?}", numeric.mean);
    assert_eq!(schema.categorical().next().unwrap().vocab_size(), 5);
}

#[test]
fn csv_and_cache_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_generate(&SynthConfig {
        rows: 500,
        ..SynthConfig::default()
    })
    .unwrap();
    let csv = dir.path().join("s.csv");
    write_synth_csv(&csv, &ds.table).unwrap();
    let (table, bad) = read_table(&csv, DataFormat::Synth, 0).unwrap();
    assert!(bad.is_empty());
    assert_eq!(table, ds.table);

    let (_, split) = encode_split(&table, DEFAULT_RATIOS, 1).unwrap();
    let bin = dir.path().join("e.bin");
    write_cache(&bin, &split.train).unwrap();
    assert_eq!(read_cache(&bin).unwrap(), split.train);
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_cache(&bin).is_err());
}

#[test]
fn criteo_lines_with_defects_are_skipped_up_to_a_limit() {
    let dir = tempfile::tempdir().unwrap();
    let good = |label: u8| {
        let ints: Vec<String> = (0..13).map(|i| if i == 2 { String::new() } else { i.to_string() }).collect();
        let cats: Vec<String> = (0..26).map(|j| format!("{:08x}", j * 7919)).collect();
        format!("{label}\t{}\t{}", ints.join("\t"), cats.join("\t"))
    };
    let text = [good(1), "2\tbroken".into(), good(0), good(1)].join("\n");
    let path = dir.path().join("day_0");
    fs::write(&path, &text).unwrap();
    let (table, bad) = read_table(&path, DataFormat::Criteo, 5).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(bad.len(), 1);
    assert_eq!(table.rows[0].numeric[2], None);
    assert_eq!(table.numeric_names.len(), 13);
    assert_eq!(table.categorical_names.len(), 26);
    assert!(read_table(&path, DataFormat::Criteo, 0).is_err());
}
