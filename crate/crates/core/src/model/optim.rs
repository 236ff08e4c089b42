use ndarray::Zip;

use super::{ModelParams, TrainingHyper};
use crate::error::Result;

/// `params - lr * grads`.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64) -> Result<ModelParams> {
    params.check_shape(grads)?;
    let mut next = params.clone();
    next.scaled_add(-lr, grads);
    Ok(next)
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn fresh(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Returns the new parameters and state; the
/// inputs are left untouched.
pub fn adam_step(
    params: &ModelParams,
    grads: &ModelParams,
    state: &AdamState,
    hyper: &TrainingHyper,
) -> Result<(ModelParams, AdamState)> {
    let (lr, beta1, beta2, eps) = (hyper.learning_rate(), hyper.beta1, hyper.beta2, hyper.epsilon);
    params.check_shape(grads)?;
    params.check_shape(&state.m)?;
    params.check_shape(&state.v)?;
    let mut next = params.clone();
    let mut state = state.clone();
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 / (1.0 - beta1.powi(t));
    let c2 = 1.0 / (1.0 - beta2.powi(t));

    let update = |w: &mut f64, m: &mut f64, v: &mut f64, &g: &f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *w -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
    };
    for (((layer, m), v), g) in next
        .layers
        .iter_mut()
        .zip(&mut state.m.layers)
        .zip(&mut state.v.layers)
        .zip(&grads.layers)
    {
        Zip::from(&mut layer.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(update);
    }
    Ok((next, state))
}
