use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::Example;
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];
pub const MIN_SPLIT_EXAMPLES: usize = 10;

/// Sizes of an order-preserving train/dev/test split: train and dev are
/// floored, test takes the remainder.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| r.is_nan() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be nonnegative and sum to 1, got {ratios:?}")));
    }
    if n < MIN_SPLIT_EXAMPLES {
        return Err(Error::Data(format!(
            "need at least {MIN_SPLIT_EXAMPLES} examples to split, got {n}"
        )));
    }
    let train = ((n as f64 * ratios[0]) + 1e-9).floor() as usize;
    let dev = ((n as f64 * ratios[1]) + 1e-9).floor() as usize;
    Ok([train, dev, n - train - dev])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub ratios: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPart {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "dev" => Ok(SplitPart::Dev),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?}; expected train, dev or test"
            ))),
        }
    }
}

impl DatasetSplit {
    pub fn part(&self, part: SplitPart) -> &[Example] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Dev => &self.dev,
            SplitPart::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sequential split: first share train, next dev, rest test.
pub fn split(mut examples: Vec<Example>, ratios: [f64; 3]) -> Result<DatasetSplit> {
    let [train, dev, _] = split_sizes(examples.len(), ratios)?;
    let test = examples.split_off(train + dev);
    let dev_part = examples.split_off(train);
    Ok(DatasetSplit {
        train: examples,
        dev: dev_part,
        test,
        ratios,
    })
}

/// A mini-batch in columnar form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub labels: Vec<f64>,
    /// `[B × n_cat]`, row-major.
    pub cat: Vec<u32>,
    /// `[B × n_num]`, row-major.
    pub num: Vec<f64>,
    pub n_cat: usize,
    pub n_num: usize,
}

impl Batch {
    pub fn from_examples<'a>(rows: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut b = Batch {
            labels: Vec::new(),
            cat: Vec::new(),
            num: Vec::new(),
            n_cat: 0,
            n_num: 0,
        };
        for (i, e) in rows.into_iter().enumerate() {
            if i == 0 {
                b.n_cat = e.cat.len();
                b.n_num = e.num.len();
            }
            b.labels.push(f64::from(e.label));
            b.cat.extend_from_slice(&e.cat);
            b.num.extend_from_slice(&e.num);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cat_column(&self, j: usize) -> Vec<usize> {
        self.cat.iter().skip(j).step_by(self.n_cat).map(|&i| i as usize).collect()
    }

    pub fn num_column(&self, k: usize) -> Vec<f64> {
        self.num.iter().skip(k).step_by(self.n_num).copied().collect()
    }
}

/// Derives the per-epoch shuffle seed.
fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    seed ^ (epoch.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Iterator over mini-batches of one split part.
pub struct Batches<'a> {
    rows: &'a [Example],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = Batch::from_examples(self.order[self.pos..end].iter().map(|&i| &self.rows[i]));
        self.pos = end;
        Some(batch)
    }
}

/// Mini-batches in source order, or in a deterministic per-epoch permutation
/// when `shuffle_seed` is given. The last batch may be short.
pub fn batches(rows: &[Example], batch_size: usize, shuffle_seed: Option<u64>, epoch: u64) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch));
        order.shuffle(&mut rng);
    }
    Ok(Batches {
        rows,
        order,
        batch_size,
        pos: 0,
    })
}

pub fn num_batches(rows: usize, batch_size: usize) -> usize {
    rows.div_ceil(batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| Example {
                label: (i % 2) as u8,
                cat: vec![i as u32],
                num: vec![],
            })
            .collect()
    }

    #[test]
    fn split_rounding() {
        assert_eq!(split_sizes(10, DEFAULT_RATIOS).unwrap(), [8, 1, 1]);
        assert_eq!(split_sizes(45, DEFAULT_RATIOS).unwrap(), [36, 4, 5]);
        assert!(split_sizes(9, DEFAULT_RATIOS).is_err());
        assert!(split_sizes(100, [0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn split_preserves_order() {
        let s = split(examples(45), DEFAULT_RATIOS).unwrap();
        assert_eq!(s.test.last().unwrap().cat[0], 44);
        assert_eq!(s.dev[0].cat[0], 36);
        let all: Vec<u32> = s.train.iter().chain(&s.dev).chain(&s.test).map(|e| e.cat[0]).collect();
        assert_eq!(all, (0..45).collect::<Vec<u32>>());
    }

    #[test]
    fn batch_sizes() {
        let rows = examples(10_000);
        let sizes: Vec<usize> = batches(&rows, 4000, None, 0).unwrap().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4000, 4000, 2000]);
        assert_eq!(num_batches(10_000, 4000), 3);
        assert!(batches(&rows, 0, None, 0).is_err());
    }

    #[test]
    fn shuffle_determinism() {
        let rows = examples(1000);
        let a: Vec<Batch> = batches(&rows, 64, Some(7), 0).unwrap().collect();
        let b: Vec<Batch> = batches(&rows, 64, Some(7), 0).unwrap().collect();
        assert_eq!(a, b);
        let c: Vec<Batch> = batches(&rows, 64, Some(8), 0).unwrap().collect();
        assert_ne!(a, c);
        let d: Vec<Batch> = batches(&rows, 64, Some(7), 1).unwrap().collect();
        assert_ne!(a, d);
    }

    #[test]
    fn split_part_names() {
        assert_eq!("dev".parse::<SplitPart>().unwrap(), SplitPart::Dev);
        assert!("validation".parse::<SplitPart>().is_err());
    }
}
