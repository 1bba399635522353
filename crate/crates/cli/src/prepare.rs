use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use mutualctr::data::{
    encode_split, read_cache, read_table, split, split_sizes, synth_generate, write_cache, write_synth_csv, DataFormat,
    DatasetSplit, FeatureSchema,
};
use mutualctr::eval::auc;
use mutualctr::models::FieldLayout;

use crate::config::ExperimentConfig;

/// Sizes and provenance of the cached split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset: String,
    pub source: PathBuf,
    pub ratios: [f64; 3],
    pub sizes: [usize; 3],
    pub schema_hash: String,
    pub skipped_lines: usize,
}

/// A prepared dataset, ready for training.
pub struct Prepared {
    pub schema: FeatureSchema,
    pub split: DatasetSplit,
    pub layout: FieldLayout,
}

pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<SplitManifest> {
    let d = &cfg.dataset;
    let cache = cfg.cache_dir();
    fs::create_dir_all(&cache).with_context(|| format!("creating {}", cache.display()))?;

    let source = match d.format {
        DataFormat::Synth => {
            let synth = synth_generate(&d.synth)?;
            let csv = cache.join("synth.csv");
            write_synth_csv(&csv, &synth.table)?;
            let [train, dev, _] = split_sizes(synth.table.rows.len(), d.split)?;
            let labels: Vec<u8> = synth.table.rows.iter().map(|r| r.label).collect();
            let part = |a: usize, b: usize| auc(&synth.bayes_scores[a..b], &labels[a..b]);
            let n = labels.len();
            let mut meta = synth.meta.clone();
            meta.bayes_auc_by_split = Some([part(0, train)?, part(train, train + dev)?, part(train + dev, n)?]);
            fs::write(cache.join("synth_meta.json"), serde_json::to_string_pretty(&meta)?)?;
            info!("synthetic data: {n} rows, Bayes AUC {:.5}", meta.bayes_auc);
            csv
        }
        _ => d.path.clone().expect("validated"),
    };

    let (table, bad) = read_table(&source, d.format, d.max_bad_lines)
        .with_context(|| format!("reading {}", source.display()))?;
    for e in &bad {
        warn!("skipped {e}");
    }
    let (schema, parts) = encode_split(&table, d.split, d.min_freq())?;
    fs::write(cache.join("schema.json"), schema.to_json()?)?;
    let all: Vec<_> = parts.train.iter().chain(&parts.dev).chain(&parts.test).cloned().collect();
    write_cache(&cache.join("examples.bin"), &all)?;
    let manifest = SplitManifest {
        dataset: d.name(),
        source,
        ratios: d.split,
        sizes: [parts.train.len(), parts.dev.len(), parts.test.len()],
        schema_hash: schema.hash(),
        skipped_lines: bad.len(),
    };
    fs::write(cache.join("split.json"), serde_json::to_string_pretty(&manifest)?)?;
    info!(
        "prepared {}: {} train / {} dev / {} test, schema {}",
        manifest.dataset,
        manifest.sizes[0],
        manifest.sizes[1],
        manifest.sizes[2],
        &manifest.schema_hash[..12]
    );
    Ok(manifest)
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared> {
    let cache = cfg.cache_dir();
    let manifest_path = cache.join("split.json");
    if !manifest_path.exists() {
        bail!("no prepared data in {}; run `prepare` first", cache.display());
    }
    let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let schema = FeatureSchema::from_json(&fs::read_to_string(cache.join("schema.json"))?)?;
    if schema.hash() != manifest.schema_hash {
        bail!("schema.json does not match the split manifest; rerun `prepare`");
    }
    let examples = read_cache(&cache.join("examples.bin"))?;
    let parts = split(examples, manifest.ratios)?;
    if [parts.train.len(), parts.dev.len(), parts.test.len()] != manifest.sizes {
        bail!("example cache does not match the split manifest; rerun `prepare`");
    }
    let layout = FieldLayout::from_schema(&schema);
    Ok(Prepared {
        schema,
        split: parts,
        layout,
    })
}
