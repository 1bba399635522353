//! Dense tensors and tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

use serde::{Deserialize, Serialize};

pub use gradcheck::{grad_check, GradCheck};
pub use tape::{Gradients, ScalarFn, Tape, Var};
pub use tensor::Tensor;

/// Which regularization coefficient applies to a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Group {
    Embedding,
    Dense,
    None,
}

/// A trainable tensor with a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub id: String,
    pub tensor: Tensor,
    pub l2_group: L2Group,
}

impl Parameter {
    pub fn new(id: impl Into<String>, tensor: Tensor, l2_group: L2Group) -> Self {
        Self {
            id: id.into(),
            tensor,
            l2_group,
        }
    }
}

/// Records every parameter on `tape`, returning vars in the same order.
pub fn bind(tape: &mut Tape, params: &[Parameter]) -> Vec<Var> {
    params.iter().map(|p| tape.param(&p.id, &p.tensor)).collect()
}
