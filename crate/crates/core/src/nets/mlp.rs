use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{init_uniform, seeded, Trainable};

/// One (input, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

/// Fully connected network, tanh on hidden layers and identity on the
/// output. Parameters are stored layer by layer as a row-major weight matrix
/// (out x in) followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl MlpModel {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(
            sizes.len() >= 2,
            "an MLP needs at least input and output sizes"
        );
        let mut params = vec![0.0; Self::param_count(sizes)];
        let mut rng = seeded(seed);
        let mut off = 0;
        for w in sizes.windows(2) {
            init_uniform(&mut rng, &mut params[off..off + w[1] * w[0]], w[0]);
            off += w[1] * w[0] + w[1];
        }
        Self {
            sizes: sizes.to_vec(),
            params,
            seed,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
            seed: 0,
        }
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of (weights, bias) for layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[1] * w[0] + w[1];
        }
        (off, off + self.sizes[l + 1] * self.sizes[l])
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let (w, b) = self.offsets(l);
        &mut self.params[w..b]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (_, b) = self.offsets(l);
        let n = self.sizes[l + 1];
        &mut self.params[b..b + n]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.sizes[0] {
            return Err(Error::DimensionMismatch {
                expected: self.sizes[0],
                got: input.len(),
            });
        }
        let mut buf = Activations::new(self);
        buf.run(self, input);
        Ok(buf.layer(self.layers()).to_vec())
    }
}

/// Reusable forward buffer: all layer activations stored back to back.
struct Activations {
    starts: Vec<usize>,
    weights: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl Activations {
    fn new(m: &MlpModel) -> Self {
        let mut starts = vec![0];
        for n in &m.sizes {
            starts.push(starts.last().unwrap() + n);
        }
        let weights = (0..m.layers()).map(|l| m.offsets(l)).collect();
        Self {
            values: vec![0.0; *starts.last().unwrap()],
            starts,
            weights,
        }
    }

    fn layer(&self, l: usize) -> &[f64] {
        &self.values[self.starts[l]..self.starts[l + 1]]
    }

    fn run(&mut self, m: &MlpModel, input: &[f64]) {
        self.values[..input.len()].copy_from_slice(input);
        let layers = m.layers();
        for l in 0..layers {
            let (wo, bo) = self.weights[l];
            let (n_in, n_out) = (m.sizes[l], m.sizes[l + 1]);
            let (prev, next) = self.values.split_at_mut(self.starts[l + 1]);
            let a = &prev[self.starts[l]..];
            for (r, z) in next[..n_out].iter_mut().enumerate() {
                let row = &m.params[wo + r * n_in..wo + (r + 1) * n_in];
                let s = m.params[bo + r] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
                *z = if l + 1 == layers { s } else { s.tanh() };
            }
        }
    }
}

impl Trainable for MlpModel {
    type Sample = Sample;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss(&self, data: &[Sample]) -> f64 {
        let mut buf = Activations::new(self);
        let out_layer = self.layers();
        let mut total = 0.0;
        for s in data {
            buf.run(self, &s.input);
            let out = buf.layer(out_layer);
            total += out
                .iter()
                .zip(&s.target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        total / data.len().max(1) as f64
    }

    fn loss_and_grad(&self, data: &[Sample]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let scale = 2.0 / data.len().max(1) as f64;
        let mut buf = Activations::new(self);
        let widest = *self.sizes.iter().max().expect("non-empty sizes");
        let mut delta = vec![0.0; widest];
        let mut next_delta = vec![0.0; widest];
        for s in data {
            buf.run(self, &s.input);
            let out = buf.layer(self.layers());
            for (d, (a, b)) in delta.iter_mut().zip(out.iter().zip(&s.target)) {
                total += (a - b).powi(2);
                *d = scale * (a - b);
            }
            for l in (0..self.layers()).rev() {
                let (wo, bo) = buf.weights[l];
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let a_prev = buf.layer(l);
                for (r, d) in delta[..n_out].iter().enumerate() {
                    grad[bo + r] += d;
                    for (c, x) in a_prev.iter().enumerate() {
                        grad[wo + r * n_in + c] += d * x;
                    }
                }
                if l > 0 {
                    for (c, nd) in next_delta[..n_in].iter_mut().enumerate() {
                        let back: f64 = delta[..n_out]
                            .iter()
                            .enumerate()
                            .map(|(r, d)| self.params[wo + r * n_in + c] * d)
                            .sum();
                        *nd = back * (1.0 - a_prev[c] * a_prev[c]);
                    }
                    std::mem::swap(&mut delta, &mut next_delta);
                }
            }
        }
        (total / data.len().max(1) as f64, grad)
    }
}
