use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::parse::{RawRow, RawTable};
use crate::error::{Error, Result};

/// Index reserved in every categorical vocabulary for unknown or missing tokens.
pub const OOV_INDEX: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Token → index. Index 0 is never assigned to a token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<BTreeMap<String, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdev: Option<f64>,
}

impl FieldSpec {
    /// Vocabulary size including the OOV slot.
    pub fn vocab_size(&self) -> usize {
        self.vocab.as_ref().map_or(0, |v| v.len() + 1)
    }
}

/// Field layout and train-split statistics for one dataset.
///
/// Categorical fields come first, in source order, followed by numeric fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fields: Vec<FieldSpec>,
    pub min_freq: u64,
}

/// One encoded click-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub label: u8,
    pub cat: Vec<u32>,
    pub num: Vec<f64>,
}

impl FeatureSchema {
    pub fn categorical(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.kind == FieldKind::Categorical)
    }

    pub fn numeric(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.kind == FieldKind::Numeric)
    }

    pub fn num_categorical(&self) -> usize {
        self.categorical().count()
    }

    pub fn num_numeric(&self) -> usize {
        self.numeric().count()
    }

    pub fn vocab_sizes(&self) -> Vec<usize> {
        self.categorical().map(FieldSpec::vocab_size).collect()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text)?;
        for f in &schema.fields {
            if let Some(v) = &f.vocab {
                let mut seen: Vec<u32> = v.values().copied().collect();
                seen.sort_unstable();
                if seen.iter().enumerate().any(|(i, &x)| x as usize != i + 1) {
                    return Err(Error::Data(format!("vocab of {} is not dense", f.name)));
                }
            }
        }
        Ok(schema)
    }

    /// Maps a raw row onto indices and standardized values. Total: unknown or
    /// missing tokens become [`OOV_INDEX`], missing numbers become 0.
    pub fn encode(&self, row: &RawRow) -> Example {
        let cat = self
            .categorical()
            .enumerate()
            .map(|(j, f)| {
                let vocab = f.vocab.as_ref().expect("categorical field has a vocab");
                row.categorical
                    .get(j)
                    .and_then(|t| t.as_deref())
                    .and_then(|t| vocab.get(t).copied())
                    .unwrap_or(OOV_INDEX)
            })
            .collect();
        let num = self
            .numeric()
            .enumerate()
            .map(|(k, f)| match row.numeric.get(k).copied().flatten() {
                Some(x) => (x - f.mean.unwrap_or(0.0)) / f.stdev.unwrap_or(1.0),
                None => 0.0,
            })
            .collect();
        Example {
            label: row.label,
            cat,
            num,
        }
    }
}

/// Builds a schema from the training rows only.
///
/// Tokens seen fewer than `min_freq` times map to the OOV slot; surviving
/// tokens get indices `1..` in lexicographic order. Numeric statistics use the
/// population standard deviation over present values, with 1 substituted for
/// zero-variance (or all-missing) columns.
pub fn build_schema(header: &RawTable, train_rows: &[RawRow], min_freq: u64) -> Result<FeatureSchema> {
    if train_rows.is_empty() {
        return Err(Error::Data("cannot build a schema from an empty source".into()));
    }
    if min_freq < 1 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let n_cat = header.categorical_names.len();
    let n_num = header.numeric_names.len();
    if n_cat + n_num == 0 {
        return Err(Error::Data("header declares no fields".into()));
    }

    let mut counts: Vec<HashMap<&str, u64>> = vec![HashMap::new(); n_cat];
    let mut sums = vec![(0.0_f64, 0.0_f64, 0_u64); n_num];
    for (i, row) in train_rows.iter().enumerate() {
        if row.categorical.len() != n_cat || row.numeric.len() != n_num {
            return Err(Error::Data(format!("row {i} does not match the header")));
        }
        for (c, tok) in counts.iter_mut().zip(&row.categorical) {
            if let Some(t) = tok {
                *c.entry(t.as_str()).or_default() += 1;
            }
        }
        for (s, v) in sums.iter_mut().zip(&row.numeric) {
            if let Some(x) = v {
                s.0 += x;
                s.2 += 1;
            }
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .map(|&(sum, _, n)| if n > 0 { sum / n as f64 } else { 0.0 })
        .collect();
    for row in train_rows {
        for ((s, v), m) in sums.iter_mut().zip(&row.numeric).zip(&means) {
            if let Some(x) = v {
                s.1 += (x - m) * (x - m);
            }
        }
    }

    let mut fields = Vec::with_capacity(n_cat + n_num);
    for (name, c) in header.categorical_names.iter().zip(counts) {
        let mut kept: Vec<&str> = c
            .into_iter()
            .filter(|&(_, n)| n >= min_freq)
            .map(|(t, _)| t)
            .collect();
        kept.sort_unstable();
        let vocab = kept
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t.to_owned(), i as u32 + 1))
            .collect();
        fields.push(FieldSpec {
            name: name.clone(),
            kind: FieldKind::Categorical,
            vocab: Some(vocab),
            mean: None,
            stdev: None,
        });
    }
    for ((name, (_, ss, n)), mean) in header.numeric_names.iter().zip(sums).zip(means) {
        let var = if n > 0 { ss / n as f64 } else { 0.0 };
        let stdev = if var > 0.0 { var.sqrt() } else { 1.0 };
        fields.push(FieldSpec {
            name: name.clone(),
            kind: FieldKind::Numeric,
            vocab: None,
            mean: Some(mean),
            stdev: Some(stdev),
        });
    }
    Ok(FeatureSchema { fields, min_freq })
}
