use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 − PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        validate(&scores, &labels)?;
        Ok(Self { scores, labels })
    }

    pub fn auc(&self) -> Result<f64> {
        auc(&self.scores, &self.labels)
    }

    pub fn logloss(&self) -> Result<f64> {
        logloss(&self.scores, &self.labels)
    }
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Metric(format!("label {l} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Rank-based AUC with tied pairs counted as one half (Mann–Whitney).
///
/// Sorting once gives O(n log n); each tie group contributes
/// `pos_in_group · (neg_below + neg_in_group / 2)`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // doubled to keep every term an integer
    let mut twice_wins: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut n) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        twice_wins += u128::from(p) * u128::from(2 * neg_below + n);
        neg_below += n;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Literal double loop over positive × negative pairs; ties count one half.
pub fn auc_bruteforce(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut total = 0.0;
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 0) {
            if sn < sp {
                total += 1.0;
            } else if sn == sp {
                total += 0.5;
            }
        }
    }
    Ok(total / (pos as f64 * neg as f64))
}

/// Relative AUC improvement over a baseline, measured above the 0.5 floor.
pub fn relaimp(auc_test: f64, auc_baseline: f64) -> Result<f64> {
    if auc_baseline.is_nan() || auc_baseline <= 0.5 {
        return Err(Error::Metric(format!(
            "RelaImp baseline must exceed 0.5, got {auc_baseline}"
        )));
    }
    Ok((auc_test - 0.5) / (auc_baseline - 0.5) - 1.0)
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::Metric("log loss of an empty set".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_hand_cases() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc_bruteforce(&[0.8, 0.5, 0.5], &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc_bruteforce(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert_eq!(auc_bruteforce(&[0.9, 0.2, 0.5], &[1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.2, 0.5], &[1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_names_counts() {
        let err = auc(&[0.1, 0.2], &[1, 1]).unwrap_err().to_string();
        assert!(err.contains("2 positives and 0 negatives"), "{err}");
        assert!(auc_bruteforce(&[0.1], &[0]).is_err());
        assert!(auc(&[0.1], &[0, 1]).is_err());
    }

    #[test]
    fn relaimp_values() {
        assert_eq!(relaimp(0.7, 0.7).unwrap(), 0.0);
        assert!((relaimp(0.79837, 0.79743).unwrap() - 0.0031604).abs() < 1e-6);
        assert!((relaimp(0.81330, 0.81251).unwrap() - 0.0025270).abs() < 1e-6);
        assert!(relaimp(0.6, 0.5).is_err());
    }

    #[test]
    fn logloss_cases() {
        let ln2 = std::f64::consts::LN_2;
        assert!((logloss(&[0.5, 0.5], &[1, 0]).unwrap() - ln2).abs() < 1e-15);
        let perfect = logloss(&[1.0, 0.0], &[1, 0]).unwrap();
        assert!((perfect - 1.0000000494736474e-7).abs() < 1e-15, "{perfect}");
        // −(ln 0.8 + ln 0.6 + ln 0.9) / 3
        let hand = logloss(&[0.8, 0.4, 0.9], &[1, 0, 1]).unwrap();
        assert!((hand - 0.2797765635793423).abs() < 1e-12, "{hand}");
    }
}
