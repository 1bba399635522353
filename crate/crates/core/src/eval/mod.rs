//! Ranking and calibration metrics, and result tables.

mod metrics;
mod table;

pub use metrics::{auc, auc_bruteforce, logloss, relaimp, ScoredSet, PROB_EPS};
pub use table::{
    assemble_table, Baseline, Grouping, ResultTable, TableRow, DISTILLATION, INDEPENDENT, MIXED_MODELS,
    MUTUAL_PRETRAINED, MUTUAL_SCRATCH,
};
