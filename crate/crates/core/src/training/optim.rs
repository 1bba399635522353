use crate::autodiff::{Gradients, Parameter, Tensor};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for one model; the step count is shared by all its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &[Parameter]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Gradients for `params` in order, looked up under `prefix + id`.
pub fn collect_grads(params: &[Parameter], grads: &Gradients, prefix: &str) -> Result<Vec<Tensor>> {
    params
        .iter()
        .map(|p| {
            grads
                .get(&format!("{prefix}{}", p.id))
                .cloned()
                .ok_or_else(|| Error::Config(format!("no gradient for parameter {prefix}{}", p.id)))
        })
        .collect()
}

/// One bias-corrected Adam update. A non-finite gradient leaves every
/// parameter untouched and names the offender.
pub fn adam_step(params: &mut [Parameter], grads: &[Tensor], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.tensor.shape() != g.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("gradient {:?} for parameter {} {:?}", g.shape(), p.id, p.tensor.shape()),
            ));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {}", p.id)));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - ADAM_BETA1.powf(t);
    let c2 = 1.0 - ADAM_BETA2.powf(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let values = p.tensor.data_mut();
        for (((x, &gi), mi), vi) in values.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Exponential decay to one tenth every three epochs; `t` is fractional epochs elapsed.
pub fn lr_at(lr0: f64, t: f64) -> f64 {
    lr0 * 10f64.powf(-t / 3.0)
}
