//! Losses, Adam with exponential decay, and the training regimes:
//! independent, mutual from scratch, mutual finetuning and distillation.

mod config;
mod loss;
mod optim;
mod report;
mod trainer;

pub use config::{ModelSpec, RunConfig, TrainMode, FINETUNE_EPOCHS, FINETUNE_LR, MAX_EPOCHS, SCRATCH_LR};
pub use loss::{bce_loss, mse_loss, mutual_term};
pub use optim::{adam_step, collect_grads, lr_at, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use report::{EpochRecord, ModelResult, PretrainedScores, RunReport};
pub use trainer::{
    cohort_losses, evaluate, finetune_mutual, init_models, predict_rows, train_independent, train_kd,
    train_mutual, Cohort, CohortGraph, RunOutcome, TrainData,
};
