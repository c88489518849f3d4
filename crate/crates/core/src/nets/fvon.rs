use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lstm::{LstmModel, SeqSample};
use super::mlp::{MlpModel, Sample};
use super::normalize::MinMaxNormalizer;
use super::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// A label normalizer had zero range in some dimension.
    DegenerateNormalizer,
    /// Fewer labels than the network needs.
    InsufficientHistory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub value: T,
    pub fallback: Option<Fallback>,
}

impl<T> Prediction<T> {
    pub(crate) fn model(value: T) -> Self {
        Self {
            value,
            fallback: None,
        }
    }

    pub(crate) fn fallback(value: T, why: Fallback) -> Self {
        Self {
            value,
            fallback: Some(why),
        }
    }
}

fn v2(v: &Vector2<f64>) -> Vec<f64> {
    vec![v.x, v.y]
}

/// Recurrent velocity network run over a feature's future-to-past velocity
/// sequence to infer its velocity in the frame where it first appeared.
/// The output is a correction added to the most recent input, so an
/// untrained network starts at the copy-last guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItsFvon {
    pub model: LstmModel,
    pub norm: Option<MinMaxNormalizer>,
    pub config: TrainConfig,
}

impl ItsFvon {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            model: LstmModel::new(2, 2, 2, config.seed),
            norm: None,
            config,
        }
    }

    /// Trains on velocity runs given in forward time order. Each run is fed
    /// reversed and every step is supervised with the next-earlier velocity.
    /// Runs shorter than 2 are ignored. Returns `None` when the labels are
    /// degenerate and the network is left untouched.
    pub fn fit(&mut self, runs: &[Vec<Vector2<f64>>]) -> Result<Option<TrainReport>> {
        let runs: Vec<&Vec<Vector2<f64>>> = runs.iter().filter(|r| r.len() >= 2).collect();
        if runs.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        let flat: Vec<Vec<f64>> = runs.iter().flat_map(|r| r.iter().map(v2)).collect();
        let norm = MinMaxNormalizer::fit(flat.iter().map(Vec::as_slice))?;
        let degenerate = norm.is_degenerate();
        self.norm = Some(norm);
        if degenerate {
            return Ok(None);
        }
        let norm = self.norm.as_ref().expect("just set");
        let data: Vec<SeqSample> = runs
            .iter()
            .map(|r| {
                let rev: Vec<Vec<f64>> = r.iter().rev().map(|v| norm.normalize(&v2(v))).collect();
                let mut targets: Vec<Option<Vec<f64>>> = rev
                    .windows(2)
                    .map(|w| Some(vec![w[1][0] - w[0][0], w[1][1] - w[0][1]]))
                    .collect();
                targets.push(None);
                SeqSample {
                    inputs: rev,
                    targets,
                }
            })
            .collect();
        Ok(Some(train(&mut self.model, &data, &self.config)?))
    }

    /// `future` is ordered from the latest frame back to frame k+1.
    pub fn predict(&self, future: &[Vector2<f64>]) -> Result<Prediction<Vector2<f64>>> {
        let last = *future
            .last()
            .ok_or(Error::SeriesTooShort { needed: 1, got: 0 })?;
        let Some(norm) = self.norm.as_ref().filter(|n| !n.is_degenerate()) else {
            return Ok(Prediction::fallback(last, Fallback::DegenerateNormalizer));
        };
        let mut state = self.model.initial_state();
        let mut out = Vec::new();
        let mut x = Vec::new();
        for v in future {
            x = norm.normalize(&v2(v));
            out = self.model.step(&mut state, &x)?;
        }
        let y = norm.denormalize(&[x[0] + out[0], x[1] + out[1]]);
        Ok(Prediction::model(Vector2::new(y[0], y[1])))
    }
}

/// Perceptron mapping a camera-frame point to its image velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F2fFvon {
    pub model: MlpModel,
    pub input_norm: Option<MinMaxNormalizer>,
    pub output_norm: Option<MinMaxNormalizer>,
    pub mean_label: [f64; 2],
    pub config: TrainConfig,
}

impl F2fFvon {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            model: MlpModel::new(&[3, 5, 5, 2], config.seed),
            input_norm: None,
            output_norm: None,
            mean_label: [0.0; 2],
            config,
        }
    }

    /// Trains on (camera-frame point, velocity) pairs. Returns `None` when
    /// the labels are degenerate and the network is left untouched.
    pub fn fit(&mut self, labels: &[(Vector3<f64>, Vector2<f64>)]) -> Result<Option<TrainReport>> {
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        let xs: Vec<Vec<f64>> = labels.iter().map(|(p, _)| vec![p.x, p.y, p.z]).collect();
        let ys: Vec<Vec<f64>> = labels.iter().map(|(_, v)| v2(v)).collect();
        let mean = labels.iter().map(|(_, v)| v).sum::<Vector2<f64>>() / labels.len() as f64;
        self.mean_label = [mean.x, mean.y];
        let in_norm = MinMaxNormalizer::fit(xs.iter().map(Vec::as_slice))?;
        let out_norm = MinMaxNormalizer::fit(ys.iter().map(Vec::as_slice))?;
        let degenerate = out_norm.is_degenerate();
        let data: Vec<Sample> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| Sample::new(in_norm.normalize(x), out_norm.normalize(y)))
            .collect();
        self.input_norm = Some(in_norm);
        self.output_norm = Some(out_norm);
        if degenerate {
            return Ok(None);
        }
        Ok(Some(train(&mut self.model, &data, &self.config)?))
    }

    pub fn predict(&self, point: &Vector3<f64>) -> Result<Prediction<Vector2<f64>>> {
        let mean = Vector2::new(self.mean_label[0], self.mean_label[1]);
        let (Some(inn), Some(out)) = (&self.input_norm, &self.output_norm) else {
            return Ok(Prediction::fallback(mean, Fallback::InsufficientHistory));
        };
        if out.is_degenerate() {
            return Ok(Prediction::fallback(mean, Fallback::DegenerateNormalizer));
        }
        let y = self
            .model
            .forward(&inn.normalize(&[point.x, point.y, point.z]))?;
        let y = out.denormalize(&y);
        Ok(Prediction::model(Vector2::new(y[0], y[1])))
    }
}
