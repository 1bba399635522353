//! Groups run reports into result tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::relaimp;
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::training::{RunReport, TrainMode};

pub const INDEPENDENT: &str = "Independent Runs";
pub const MUTUAL_SCRATCH: &str = "Mutual from scratch";
pub const MUTUAL_PRETRAINED: &str = "Mutual with pretraining";
pub const MIXED_MODELS: &str = "DML of diff. models";
pub const DISTILLATION: &str = "Distillation";

/// Which row a table's RelaImp column is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Best independent run of the same model on the same dataset.
    BestIndependent,
    /// Best starting score among the row's own pretrained models.
    BestPretrained,
    None,
}

/// How reports are split into rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One row per model and training regime.
    Regime,
    /// One row per report, labelled by how many models it trained together.
    CoTrainedCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub model: String,
    pub regime: String,
    /// Test AUCs before the run, when the run started from pretrained models.
    pub pretrained: Vec<f64>,
    /// Test AUCs after the run.
    pub cells: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single cell.
    pub stdev: f64,
    pub relaimp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub rows: Vec<TableRow>,
}

fn regime_rank(regime: &str) -> usize {
    [INDEPENDENT, MUTUAL_SCRATCH, MUTUAL_PRETRAINED, MIXED_MODELS, DISTILLATION]
        .iter()
        .position(|r| *r == regime)
        .unwrap_or(usize::MAX)
}

fn model_rank(model: &str) -> usize {
    Architecture::ALL
        .iter()
        .position(|a| a.display_name() == model)
        .unwrap_or(usize::MAX)
}

fn regime_of(report: &RunReport) -> &'static str {
    let first = report.models.first().map(|m| m.architecture);
    let mixed = report.models.iter().any(|m| Some(m.architecture) != first);
    match report.mode {
        TrainMode::Independent => INDEPENDENT,
        TrainMode::Kd => DISTILLATION,
        _ if mixed => MIXED_MODELS,
        TrainMode::MutualScratch => MUTUAL_SCRATCH,
        TrainMode::MutualFinetune => MUTUAL_PRETRAINED,
    }
}

fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Pending {
    row: TableRow,
    /// `(pretrained test AUC, test AUC)` per cell, when known.
    pairs: Vec<(Option<f64>, f64)>,
    architectures: Vec<Architecture>,
}

/// Builds a table from reports. RelaImp uses the cell of the model that
/// started from the best pretrained score, or the best cell when the row has
/// no pretrained models.
pub fn assemble_table(title: &str, reports: &[RunReport], grouping: Grouping, baseline: Baseline) -> Result<ResultTable> {
    if reports.is_empty() {
        return Err(Error::Metric("no reports to tabulate".into()));
    }
    let mut pending: Vec<Pending> = Vec::new();
    for report in reports {
        match grouping {
            Grouping::Regime => {
                let regime = regime_of(report);
                for m in &report.models {
                    let model = m.architecture.display_name().to_string();
                    let idx = pending.iter().position(|p| {
                        p.row.dataset == report.dataset && p.row.model == model && p.row.regime == regime
                    });
                    let idx = idx.unwrap_or_else(|| {
                        pending.push(Pending {
                            row: TableRow {
                                dataset: report.dataset.clone(),
                                model,
                                regime: regime.to_string(),
                                pretrained: Vec::new(),
                                cells: Vec::new(),
                                mean: 0.0,
                                stdev: 0.0,
                                relaimp: None,
                            },
                            pairs: Vec::new(),
                            architectures: Vec::new(),
                        });
                        pending.len() - 1
                    });
                    let p = &mut pending[idx];
                    p.pairs.push((m.pretrained.as_ref().map(|s| s.test_auc), m.test_auc));
                    p.architectures.push(m.architecture);
                }
            }
            Grouping::CoTrainedCount => {
                let mut names: Vec<&str> = report.models.iter().map(|m| m.architecture.display_name()).collect();
                names.dedup();
                pending.push(Pending {
                    row: TableRow {
                        dataset: report.dataset.clone(),
                        model: names.join("+"),
                        regime: format!("{} co-trained", report.models.len()),
                        pretrained: Vec::new(),
                        cells: Vec::new(),
                        mean: 0.0,
                        stdev: 0.0,
                        relaimp: None,
                    },
                    pairs: report
                        .models
                        .iter()
                        .map(|m| (m.pretrained.as_ref().map(|s| s.test_auc), m.test_auc))
                        .collect(),
                    architectures: report.models.iter().map(|m| m.architecture).collect(),
                });
            }
        }
    }

    let best_independent = |dataset: &str, arch: Architecture| -> Option<f64> {
        reports
            .iter()
            .filter(|r| r.mode == TrainMode::Independent && r.dataset == dataset)
            .flat_map(|r| r.models.iter())
            .filter(|m| m.architecture == arch)
            .map(|m| m.test_auc)
            .reduce(f64::max)
    };

    let mut rows = Vec::with_capacity(pending.len());
    for p in pending {
        let mut row = p.row;
        row.cells = p.pairs.iter().map(|&(_, t)| t).collect();
        row.pretrained = p.pairs.iter().filter_map(|&(pre, _)| pre).collect();
        (row.mean, row.stdev) = mean_stdev(&row.cells);
        let representative = p
            .pairs
            .iter()
            .filter_map(|&(pre, t)| pre.map(|pre| (pre, t)))
            .reduce(|a, b| if b.0 > a.0 { b } else { a })
            .map(|(_, t)| t)
            .unwrap_or_else(|| row.cells.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let base = match baseline {
            Baseline::None => None,
            Baseline::BestIndependent => {
                let arch = p.architectures[0];
                if p.architectures.iter().any(|&a| a != arch) {
                    return Err(Error::Metric(format!(
                        "row {} / {} mixes architectures; no single independent baseline",
                        row.model, row.regime
                    )));
                }
                Some(best_independent(&row.dataset, arch).ok_or_else(|| {
                    Error::Metric(format!(
                        "no independent run of {} on {} to serve as baseline",
                        row.model, row.dataset
                    ))
                })?)
            }
            Baseline::BestPretrained => Some(row.pretrained.iter().copied().reduce(f64::max).ok_or_else(|| {
                Error::Metric(format!("row {} / {} has no pretrained scores", row.model, row.regime))
            })?),
        };
        row.relaimp = base.map(|b| relaimp(representative, b)).transpose()?;
        rows.push(row);
    }
    if grouping == Grouping::Regime {
        rows.sort_by_key(|r| (r.dataset.clone(), model_rank(&r.model), regime_rank(&r.regime)));
    }
    Ok(ResultTable {
        title: title.to_string(),
        rows,
    })
}

impl ResultTable {
    fn widths(&self) -> (usize, usize) {
        let pre = self.rows.iter().map(|r| r.pretrained.len()).max().unwrap_or(0);
        let cells = self.rows.iter().map(|r| r.cells.len()).max().unwrap_or(0);
        (pre, cells)
    }

    /// CSV with one column per cell; shorter rows are padded with empty fields.
    pub fn to_csv(&self) -> String {
        let (pre, cells) = self.widths();
        let mut header = vec!["dataset".to_string(), "model".into(), "regime".into()];
        header.extend((1..=pre).map(|i| format!("pretrained_{i}")));
        header.extend((1..=cells).map(|i| format!("auc_{i}")));
        header.extend(["mean".into(), "stdev".into(), "relaimp".into()]);
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![r.dataset.clone(), r.model.clone(), r.regime.clone()];
            fields.extend((0..pre).map(|i| r.pretrained.get(i).map_or(String::new(), |v| v.to_string())));
            fields.extend((0..cells).map(|i| r.cells.get(i).map_or(String::new(), |v| v.to_string())));
            fields.push(r.mean.to_string());
            fields.push(r.stdev.to_string());
            fields.push(r.relaimp.map_or(String::new(), |v| v.to_string()));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned plain text; AUCs to five decimals, RelaImp in percent.
    pub fn to_text(&self) -> String {
        let (pre, cells) = self.widths();
        let mut grid: Vec<Vec<String>> = Vec::with_capacity(self.rows.len() + 1);
        let mut header = vec!["Dataset".to_string(), "Model".into(), "Regime".into()];
        header.extend((1..=pre).map(|i| format!("Pre {i}")));
        header.extend((1..=cells).map(|i| format!("AUC {i}")));
        header.extend(["Mean".into(), "Stdev".into(), "RelaImp".into()]);
        grid.push(header);
        for r in &self.rows {
            let mut line = vec![r.dataset.clone(), r.model.clone(), r.regime.clone()];
            line.extend((0..pre).map(|i| r.pretrained.get(i).map_or("-".into(), |v| format!("{v:.5}"))));
            line.extend((0..cells).map(|i| r.cells.get(i).map_or("-".into(), |v| format!("{v:.5}"))));
            line.push(format!("{:.5}", r.mean));
            line.push(format!("{:.5}", r.stdev));
            line.push(r.relaimp.map_or("-".into(), |v| format!("{:+.3}%", v * 100.0)));
            grid.push(line);
        }
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.title);
        for line in &grid {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c < 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        Ok(())
    }
}
