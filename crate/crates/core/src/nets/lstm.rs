use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{init_uniform, seeded, sigmoid, Trainable};

/// An input sequence with optional per-step targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqSample {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Option<Vec<f64>>>,
}

impl SeqSample {
    /// Target only on the last step.
    pub fn last_only(inputs: Vec<Vec<f64>>, target: Vec<f64>) -> Self {
        let mut targets = vec![None; inputs.len()];
        if let Some(t) = targets.last_mut() {
            *t = Some(target);
        }
        Self { inputs, targets }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Four-gate LSTM cell (input, forget, candidate, output) with a linear
/// read-out of the hidden state.
///
/// Parameter layout: `W` (4H x I), `U` (4H x H), `b` (4H), `Wy` (O x H),
/// `by` (O), all row-major, gates stacked in the order i, f, g, o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub params: Vec<f64>,
    pub seed: u64,
}

struct Layout {
    w: usize,
    u: usize,
    b: usize,
    wy: usize,
    by: usize,
    len: usize,
}

/// Forward activations of one sequence, stored flat per step. `h` and `c`
/// hold T+1 rows with the zero initial state first.
#[derive(Default)]
struct Trace {
    gates: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmModel {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        4 * hidden * (input + hidden + 1) + output * (hidden + 1)
    }

    fn layout(&self) -> Layout {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let w = 0;
        let u = w + 4 * h * i;
        let b = u + 4 * h * h;
        let wy = b + 4 * h;
        let by = wy + o * h;
        Layout {
            w,
            u,
            b,
            wy,
            by,
            len: by + o,
        }
    }

    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input, hidden, output);
        m.seed = seed;
        let lay = m.layout();
        let mut rng = seeded(seed);
        init_uniform(&mut rng, &mut m.params[lay.w..lay.b], input + hidden);
        init_uniform(&mut rng, &mut m.params[lay.wy..lay.by], hidden);
        m
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            params: vec![0.0; Self::param_count(input, hidden, output)],
            seed: 0,
        }
    }

    /// Read-out weights and bias.
    pub fn readout_params_mut(&mut self) -> &mut [f64] {
        let lay = self.layout();
        &mut self.params[lay.wy..lay.len]
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.hidden)
    }

    /// One cell update writing gates (4H), new cell and hidden state (H).
    #[allow(clippy::too_many_arguments)]
    fn cell(
        &self,
        lay: &Layout,
        h_prev: &[f64],
        c_prev: &[f64],
        x: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let (ni, nh) = (self.input, self.hidden);
        let p = &self.params;
        for (r, gate) in gates.iter_mut().enumerate() {
            let mut z = p[lay.b + r];
            for (c, xv) in x.iter().enumerate() {
                z += p[lay.w + r * ni + c] * xv;
            }
            for (c, hv) in h_prev.iter().enumerate() {
                z += p[lay.u + r * nh + c] * hv;
            }
            *gate = if r / nh == 2 { z.tanh() } else { sigmoid(z) };
        }
        for j in 0..nh {
            let (ig, fg, gg, og) = (
                gates[j],
                gates[nh + j],
                gates[2 * nh + j],
                gates[3 * nh + j],
            );
            c[j] = fg * c_prev[j] + ig * gg;
            tanh_c[j] = c[j].tanh();
            h[j] = og * tanh_c[j];
        }
    }

    fn readout(&self, lay: &Layout, h: &[f64]) -> Vec<f64> {
        (0..self.output)
            .map(|r| {
                self.params[lay.by + r]
                    + h.iter()
                        .enumerate()
                        .map(|(c, hv)| self.params[lay.wy + r * self.hidden + c] * hv)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Advances `state` by one input and returns the read-out.
    pub fn step(&self, state: &mut LstmState, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input {
            return Err(Error::DimensionMismatch {
                expected: self.input,
                got: x.len(),
            });
        }
        let lay = self.layout();
        let nh = self.hidden;
        let mut gates = vec![0.0; 4 * nh];
        let mut c = vec![0.0; nh];
        let mut tanh_c = vec![0.0; nh];
        let mut h = vec![0.0; nh];
        self.cell(
            &lay,
            &state.h,
            &state.c,
            x,
            &mut gates,
            &mut c,
            &mut tanh_c,
            &mut h,
        );
        state.c = c;
        state.h = h;
        Ok(self.readout(&lay, &state.h))
    }

    /// Runs a sequence from the zero state and returns every read-out.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut state = self.initial_state();
        inputs.iter().map(|x| self.step(&mut state, x)).collect()
    }

    fn sample_loss_grad(
        &self,
        lay: &Layout,
        s: &SeqSample,
        scale: f64,
        grad: Option<&mut [f64]>,
        tr: &mut Trace,
    ) -> f64 {
        let (ni, nh, no) = (self.input, self.hidden, self.output);
        let steps = s.inputs.len();
        tr.gates.resize(4 * nh * steps, 0.0);
        tr.tanh_c.resize(nh * steps, 0.0);
        tr.h.resize(nh * (steps + 1), 0.0);
        tr.c.resize(nh * (steps + 1), 0.0);
        tr.h[..nh].iter_mut().for_each(|v| *v = 0.0);
        tr.c[..nh].iter_mut().for_each(|v| *v = 0.0);
        let p = &self.params;
        let mut total = 0.0;
        let mut dy = vec![0.0; no * steps];
        for (t, (x, target)) in s.inputs.iter().zip(&s.targets).enumerate() {
            let (h_prev, h) = tr.h[t * nh..(t + 2) * nh].split_at_mut(nh);
            let (c_prev, c) = tr.c[t * nh..(t + 2) * nh].split_at_mut(nh);
            self.cell(
                lay,
                h_prev,
                c_prev,
                x,
                &mut tr.gates[4 * nh * t..4 * nh * (t + 1)],
                c,
                &mut tr.tanh_c[nh * t..nh * (t + 1)],
                h,
            );
            if let Some(target) = target {
                for r in 0..no {
                    let mut y = p[lay.by + r];
                    for j in 0..nh {
                        y += p[lay.wy + r * nh + j] * h[j];
                    }
                    let e = y - target[r];
                    total += e * e;
                    dy[t * no + r] = scale * e;
                }
            }
        }
        let Some(grad) = grad else { return total };

        let mut dh_next = vec![0.0; nh];
        let mut dc_next = vec![0.0; nh];
        let mut dh = vec![0.0; nh];
        let mut dz = vec![0.0; 4 * nh];
        for t in (0..steps).rev() {
            let h = &tr.h[(t + 1) * nh..(t + 2) * nh];
            let h_prev = &tr.h[t * nh..(t + 1) * nh];
            let c_prev = &tr.c[t * nh..(t + 1) * nh];
            let x = &s.inputs[t];
            dh.copy_from_slice(&dh_next);
            if s.targets[t].is_some() {
                for r in 0..no {
                    let d = dy[t * no + r];
                    grad[lay.by + r] += d;
                    for j in 0..nh {
                        grad[lay.wy + r * nh + j] += d * h[j];
                        dh[j] += p[lay.wy + r * nh + j] * d;
                    }
                }
            }
            let g = &tr.gates[4 * nh * t..4 * nh * (t + 1)];
            for j in 0..nh {
                let (ig, fg, gg, og) = (g[j], g[nh + j], g[2 * nh + j], g[3 * nh + j]);
                let tc = tr.tanh_c[nh * t + j];
                let d_o = dh[j] * tc;
                let dc = dh[j] * og * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * ig * (1.0 - ig);
                dz[nh + j] = dc * c_prev[j] * fg * (1.0 - fg);
                dz[2 * nh + j] = dc * ig * (1.0 - gg * gg);
                dz[3 * nh + j] = d_o * og * (1.0 - og);
                dc_next[j] = dc * fg;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, d) in dz.iter().enumerate() {
                grad[lay.b + r] += d;
                for (col, xv) in x.iter().enumerate() {
                    grad[lay.w + r * ni + col] += d * xv;
                }
                for (col, hv) in h_prev.iter().enumerate() {
                    grad[lay.u + r * nh + col] += d * hv;
                    dh_next[col] += p[lay.u + r * nh + col] * d;
                }
            }
        }
        total
    }

    fn target_count(data: &[SeqSample]) -> usize {
        data.iter()
            .map(|s| s.targets.iter().filter(|t| t.is_some()).count())
            .sum()
    }
}

impl Trainable for LstmModel {
    type Sample = SeqSample;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss(&self, data: &[SeqSample]) -> f64 {
        let lay = self.layout();
        let n = Self::target_count(data).max(1) as f64;
        let mut tr = Trace::default();
        data.iter()
            .map(|s| self.sample_loss_grad(&lay, s, 0.0, None, &mut tr))
            .sum::<f64>()
            / n
    }

    fn loss_and_grad(&self, data: &[SeqSample]) -> (f64, Vec<f64>) {
        let lay = self.layout();
        debug_assert_eq!(lay.len, self.params.len());
        let n = Self::target_count(data).max(1) as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let mut tr = Trace::default();
        for s in data {
            total += self.sample_loss_grad(&lay, s, 2.0 / n, Some(&mut grad), &mut tr);
        }
        (total / n, grad)
    }
}
