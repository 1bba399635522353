//! Deep mutual learning for click-through-rate prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense `f64` tensors and a define-by-run reverse-mode tape.
//! - [`data`]: Criteo/Avazu parsing, synthetic click logs, schemas, splits, batches.
//! - [`models`]: DeepFM, DCN, PNN (inner product) and FiBiNET on top of the tape.
//! - [`training`]: losses, Adam with exponential decay, and the independent,
//!   mutual, finetuning and distillation regimes.
//! - [`eval`]: AUC, log loss, RelaImp and result tables.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod models;
pub mod training;

pub use error::{Error, Result};
