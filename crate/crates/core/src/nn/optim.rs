use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamSet};
use super::tape::Matrix;
use ndarray::Zip;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

/// v ← ρv + (1-ρ)g², p ← p - lr·g/(√v + ε)
#[derive(Debug, Clone)]
pub struct RmsProp {
    config: RmsPropConfig,
    square_avg: Vec<Matrix>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, params: &ParamSet) -> Self {
        Self {
            config,
            square_avg: params.ids().map(|id| Matrix::zeros(params.get(id).dim())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        let RmsPropConfig { lr, decay, eps } = self.config;
        for (id, g) in grads.iter() {
            let v = &mut self.square_avg[id.0];
            Zip::from(params.get_mut(id))
                .and(v)
                .and(g)
                .for_each(|p, v, g| {
                    *v = decay * *v + (1.0 - decay) * g * g;
                    *p -= lr * g / (v.sqrt() + eps);
                });
        }
    }
}
