//! Synthetic click logs with planted first-order and pairwise signal.
//!
//! Every token of every field carries a first-order weight and a latent
//! vector. The clean logit of a row is
//!
//! ```text
//! bias + Σ_f w[f][tok_f] + interaction_scale · Σ_{(f,g) ∈ pairs} v[f][tok_f] · v[g][tok_g]
//! ```
//!
//! and the label is drawn from `Bernoulli(sigmoid(clean + noise · z))` with
//! `z ~ N(0, 1)`. The click probability given the features is increasing in
//! the clean logit, so `sigmoid(clean)` ranks rows exactly like the Bayes
//! posterior and its AUC is the Bayes AUC.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::parse::{RawRow, RawTable};
use crate::error::{Error, Result};
use crate::eval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub rows: usize,
    pub fields: usize,
    pub vocab: usize,
    pub latent_dim: usize,
    /// Number of field pairs carrying latent interactions.
    pub interaction_pairs: usize,
    pub first_order_scale: f64,
    pub interaction_scale: f64,
    /// Standard deviation of the logit noise.
    pub noise: f64,
    pub bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 100_000,
            fields: 8,
            vocab: 100,
            latent_dim: 4,
            interaction_pairs: 12,
            first_order_scale: 0.6,
            interaction_scale: 0.15,
            noise: 0.5,
            bias: -0.5,
            seed: 42,
        }
    }
}

/// Sidecar metadata written next to a synthetic CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub seed: u64,
    pub config: SynthConfig,
    pub bayes_auc: f64,
    /// Bayes AUC on the train, dev and test parts, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bayes_auc_by_split: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub table: RawTable,
    /// `sigmoid(clean logit)` per row.
    pub bayes_scores: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub meta: SynthMeta,
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthDataset> {
    let c = config;
    if c.rows == 0 || c.fields == 0 || c.vocab == 0 || c.latent_dim == 0 {
        return Err(Error::Config("synthetic sizes must be positive".into()));
    }
    if !(c.noise >= 0.0 && c.first_order_scale >= 0.0 && c.interaction_scale >= 0.0) {
        return Err(Error::Config("synthetic scales must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    // unit-variance dot products between two latent vectors
    let latent_sd = (c.latent_dim as f64).powf(-0.25);

    let first_order: Vec<Vec<f64>> = (0..c.fields)
        .map(|_| (0..c.vocab).map(|_| c.first_order_scale * std_normal.sample(&mut rng)).collect())
        .collect();
    let latent: Vec<Vec<Vec<f64>>> = (0..c.fields)
        .map(|_| {
            (0..c.vocab)
                .map(|_| (0..c.latent_dim).map(|_| latent_sd * std_normal.sample(&mut rng)).collect())
                .collect()
        })
        .collect();
    let mut all_pairs: Vec<(usize, usize)> = (0..c.fields)
        .flat_map(|i| (i + 1..c.fields).map(move |j| (i, j)))
        .collect();
    all_pairs.shuffle(&mut rng);
    all_pairs.truncate(c.interaction_pairs);
    all_pairs.sort_unstable();
    let pairs = all_pairs;

    let mut rows = Vec::with_capacity(c.rows);
    let mut bayes_scores = Vec::with_capacity(c.rows);
    let mut labels = Vec::with_capacity(c.rows);
    let mut tokens = vec![0usize; c.fields];
    for _ in 0..c.rows {
        for t in tokens.iter_mut() {
            *t = rng.gen_range(0..c.vocab);
        }
        let mut clean = c.bias;
        for (f, &t) in tokens.iter().enumerate() {
            clean += first_order[f][t];
        }
        for &(f, g) in &pairs {
            let dot: f64 = latent[f][tokens[f]]
                .iter()
                .zip(&latent[g][tokens[g]])
                .map(|(a, b)| a * b)
                .sum();
            clean += c.interaction_scale * dot;
        }
        let noisy = clean + c.noise * std_normal.sample(&mut rng);
        let p = 1.0 / (1.0 + (-noisy).exp());
        let label = u8::from(rng.gen::<f64>() < p);
        labels.push(label);
        bayes_scores.push(1.0 / (1.0 + (-clean).exp()));
        rows.push(RawRow {
            label,
            numeric: Vec::new(),
            categorical: tokens.iter().map(|t| Some(t.to_string())).collect(),
        });
    }

    let bayes_auc = eval::auc(&bayes_scores, &labels)?;
    Ok(SynthDataset {
        table: RawTable {
            numeric_names: Vec::new(),
            categorical_names: (1..=c.fields).map(|i| format!("c{i}")).collect(),
            rows,
        },
        bayes_scores,
        pairs,
        meta: SynthMeta {
            seed: c.seed,
            config: c.clone(),
            bayes_auc,
            bayes_auc_by_split: None,
        },
    })
}

/// Writes `label,c1..cF` CSV.
pub fn write_synth_csv(path: &Path, table: &RawTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "label")?;
    for name in &table.categorical_names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for row in &table.rows {
        write!(w, "{}", row.label)?;
        for tok in &row.categorical {
            write!(w, ",{}", tok.as_deref().unwrap_or(""))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig {
            rows: 500,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.bayes_scores, b.bayes_scores);
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_synth_csv(&pa, &a.table).unwrap();
        write_synth_csv(&pb, &b.table).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }

    #[test]
    fn pairs_are_capped() {
        let cfg = SynthConfig {
            rows: 50,
            fields: 3,
            interaction_pairs: 99,
            ..SynthConfig::default()
        };
        assert_eq!(synth_generate(&cfg).unwrap().pairs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn rejects_zero_sizes() {
        let cfg = SynthConfig {
            vocab: 0,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&cfg).is_err());
    }
}
