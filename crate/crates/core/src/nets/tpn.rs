use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::fvon::{Fallback, Prediction};
use super::lstm::{LstmModel, SeqSample};
use super::normalize::MinMaxNormalizer;
use super::train::{train, TrainConfig, TrainReport};

/// Recurrent one-step-ahead predictor of the time offset, trained on past
/// window estimates. The network outputs the change from the latest value
/// and its read-out starts at zero, so an untrained predictor repeats the
/// last estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tpn {
    pub model: LstmModel,
    pub norm: Option<MinMaxNormalizer>,
    pub config: TrainConfig,
}

impl Tpn {
    pub fn new(config: TrainConfig) -> Self {
        let mut model = LstmModel::new(1, 2, 1, config.seed);
        model.readout_params_mut().fill(0.0);
        Self {
            model,
            norm: None,
            config,
        }
    }

    /// Trains next-value prediction over the history (oldest first). Returns
    /// `None` when there are fewer than two labels or they are all equal.
    pub fn fit(&mut self, history: &[f64]) -> Result<Option<TrainReport>> {
        if history.len() < 2 {
            self.norm = None;
            return Ok(None);
        }
        let norm = MinMaxNormalizer::fit(history.iter().map(std::slice::from_ref))?;
        let degenerate = norm.is_degenerate();
        let xs: Vec<Vec<f64>> = history.iter().map(|&t| norm.normalize(&[t])).collect();
        self.norm = Some(norm);
        if degenerate {
            return Ok(None);
        }
        let n = xs.len();
        let sample = SeqSample {
            inputs: xs[..n - 1].to_vec(),
            targets: xs
                .windows(2)
                .map(|w| Some(vec![w[1][0] - w[0][0]]))
                .collect(),
        };
        train(&mut self.model, &[sample], &self.config).map(Some)
    }

    /// Replays the history from a zero state and returns the prediction for
    /// the value following its last element.
    pub fn predict(&self, history: &[f64]) -> Result<Prediction<f64>> {
        let Some(&last) = history.last() else {
            return Ok(Prediction::fallback(0.0, Fallback::InsufficientHistory));
        };
        if history.len() < 2 {
            return Ok(Prediction::fallback(last, Fallback::InsufficientHistory));
        }
        let Some(norm) = self.norm.as_ref().filter(|n| !n.is_degenerate()) else {
            return Ok(Prediction::fallback(last, Fallback::DegenerateNormalizer));
        };
        let mut state = self.model.initial_state();
        let mut out = vec![0.0];
        let mut x = vec![0.0];
        for &t in history {
            x = norm.normalize(&[t]);
            out = self.model.step(&mut state, &x)?;
        }
        Ok(Prediction {
            value: norm.denormalize(&[x[0] + out[0]])[0],
            fallback: None,
        })
    }
}
