//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::grad::GradientSet;
use crate::complex::ComplexMatrix;
use crate::model::PnfModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTrain(format!(
                "Adam needs lr > 0 and 0 < beta1, beta2 < 1, eps > 0; got {self:?}"
            )))
        }
    }
}

/// First and second moments per parameter tensor and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<ComplexMatrix>,
    pub v: Vec<ComplexMatrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &PnfModel) -> Self {
        let zeros: Vec<ComplexMatrix> = model
            .params()
            .iter()
            .map(|(_, p)| ComplexMatrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One update of every parameter whose `trainable` entry is set, with
/// learning rate `lr` (the config's rate unless annealed by the caller).
pub fn adam_step(
    model: &mut PnfModel,
    grads: &GradientSet,
    state: &mut AdamState,
    config: &AdamConfig,
    lr: f64,
    trainable: &[bool],
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let (b1, b2, eps) = (config.beta1, config.beta2, config.eps);
    for (i, (_, p)) in model.params_mut().into_iter().enumerate() {
        if !trainable[i] {
            continue;
        }
        let g = grads.tensors[i].raw();
        let (m, v) = (state.m[i].raw_mut(), state.v[i].raw_mut());
        ndarray::Zip::from(p.raw_mut()).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        });
    }
}
