use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::Trainable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    /// Plain full-batch gradient descent.
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop once the full-batch loss falls below this value.
    pub loss_threshold: Option<f64>,
    /// Seeds the weight initialization of freshly created models.
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn its_default() -> Self {
        Self {
            lr: 1e-4,
            max_epochs: 1000,
            loss_threshold: Some(1e-5),
            seed: 1,
            optimizer: Optimizer::adam(),
        }
    }

    pub fn f2f_default() -> Self {
        Self {
            lr: 1e-2,
            max_epochs: 1500,
            loss_threshold: None,
            seed: 2,
            optimizer: Optimizer::adam(),
        }
    }

    pub fn tpn_default() -> Self {
        Self {
            lr: 1e-4,
            max_epochs: 1000,
            loss_threshold: Some(1e-8),
            seed: 3,
            optimizer: Optimizer::adam(),
        }
    }

    pub fn with_optimizer(mut self, optimizer: Optimizer) -> Self {
        self.optimizer = optimizer;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full-batch MSE after the last update.
    pub final_loss: f64,
    pub epochs: usize,
    pub stopped_early: bool,
}

/// Full-batch training with the configured optimizer. Optimizer moments
/// start from zero on every call; model parameters are taken as given, so
/// repeated calls continue training the same weights.
pub fn train<M: Trainable>(
    model: &mut M,
    data: &[M::Sample],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let n = model.params().len();
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut epochs = 0;
    let mut stopped_early = false;
    while epochs < config.max_epochs {
        let (loss, grad) = model.loss_and_grad(data);
        if config.loss_threshold.is_some_and(|th| loss < th) {
            stopped_early = true;
            break;
        }
        epochs += 1;
        let params = model.params_mut();
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= config.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = epochs as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..n {
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= config.lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(TrainReport {
        final_loss: model.loss(data),
        epochs,
        stopped_early,
    })
}
