//! Single-hidden-layer Elman network mapping a scalar input sequence to an
//! `n`-step-ahead forecast vector read after the last input.
//!
//! Training is full-batch gradient descent on mean squared error, with
//! gradients from backpropagation through time truncated to the last
//! `truncation` inputs of every training window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::predictor::{PredictError, Predictor};

pub const DEFAULT_HIDDEN: usize = 8;
pub const DEFAULT_TRUNCATION: usize = 8;
pub const MIN_SERIES_LEN: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training series has {len} points, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    DivergedTraining { epoch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub horizon: usize,
    pub truncation: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN,
            horizon: 1,
            truncation: DEFAULT_TRUNCATION,
            epochs: 200,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentPredictor {
    hidden: usize,
    horizon: usize,
    truncation: usize,
    w_in: Vec<f64>,
    /// Row-major: `w_rec[i * hidden + j]` maps `h_j(t-1)` into `h_i(t)`.
    w_rec: Vec<f64>,
    b_h: Vec<f64>,
    /// Row-major: `w_out[k * hidden + i]` maps `h_i` into output `k`.
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
}

impl RecurrentPredictor {
    pub fn zeros(hidden: usize, horizon: usize, truncation: usize) -> Self {
        assert!(hidden >= 1 && horizon >= 1 && truncation >= 1);
        RecurrentPredictor {
            hidden,
            horizon,
            truncation,
            w_in: vec![0.0; hidden],
            w_rec: vec![0.0; hidden * hidden],
            b_h: vec![0.0; hidden],
            w_out: vec![0.0; horizon * hidden],
            b_out: vec![0.0; horizon],
        }
    }

    /// Small uniform random weights scaled by `1/sqrt(hidden)`; biases zero.
    pub fn random(hidden: usize, horizon: usize, truncation: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden, horizon, truncation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (hidden as f64).sqrt();
        for w in p
            .w_in
            .iter_mut()
            .chain(p.w_rec.iter_mut())
            .chain(p.w_out.iter_mut())
        {
            *w = rng.gen_range(-scale..scale);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn parameter_count(&self) -> usize {
        self.w_in.len() + self.w_rec.len() + self.b_h.len() + self.w_out.len() + self.b_out.len()
    }

    /// All weights flattened as `w_in, w_rec, b_h, w_out, b_out`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for block in [&self.w_in, &self.w_rec, &self.b_h, &self.w_out, &self.b_out] {
            out.extend_from_slice(block);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut rest = params;
        for block in [
            &mut self.w_in,
            &mut self.w_rec,
            &mut self.b_h,
            &mut self.w_out,
            &mut self.b_out,
        ] {
            let (head, tail) = rest.split_at(block.len());
            block.copy_from_slice(head);
            rest = tail;
        }
    }

    /// Unclamped output after running `inputs` from a zero hidden state.
    pub fn raw_output(&self, inputs: &[f64]) -> Vec<f64> {
        let h = self.run(inputs).pop().unwrap_or_else(|| vec![0.0; self.hidden]);
        self.readout(&h)
    }

    fn readout(&self, h: &[f64]) -> Vec<f64> {
        (0..self.horizon)
            .map(|k| {
                let row = &self.w_out[k * self.hidden..(k + 1) * self.hidden];
                self.b_out[k] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Hidden states after each input (h_1..h_T).
    fn run(&self, inputs: &[f64]) -> Vec<Vec<f64>> {
        let hs = self.hidden;
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
        let mut prev = vec![0.0; hs];
        for &x in inputs {
            let mut h = vec![0.0; hs];
            for (i, hi) in h.iter_mut().enumerate() {
                let row = &self.w_rec[i * hs..(i + 1) * hs];
                let a = self.w_in[i] * x
                    + self.b_h[i]
                    + row.iter().zip(&prev).map(|(w, p)| w * p).sum::<f64>();
                *hi = a.tanh();
            }
            states.push(h.clone());
            prev = h;
        }
        states
    }

    /// Mean squared error over every training window of `series`.
    pub fn training_loss(&self, series: &[f64]) -> f64 {
        let windows = training_windows(series, self.truncation, self.horizon);
        if windows.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / (windows.len() * self.horizon) as f64;
        windows
            .iter()
            .map(|&(inputs, targets)| {
                self.raw_output(inputs)
                    .iter()
                    .zip(targets)
                    .map(|(y, t)| (y - t).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * scale
    }

    /// Loss and its gradient with respect to [`RecurrentPredictor::parameters`].
    pub fn loss_gradient(&self, series: &[f64]) -> (f64, Vec<f64>) {
        let hs = self.hidden;
        let n = self.horizon;
        let windows = training_windows(series, self.truncation, n);
        let mut g_in = vec![0.0; hs];
        let mut g_rec = vec![0.0; hs * hs];
        let mut g_bh = vec![0.0; hs];
        let mut g_out = vec![0.0; n * hs];
        let mut g_bout = vec![0.0; n];
        let mut loss = 0.0;
        if windows.is_empty() {
            return (0.0, vec![0.0; self.parameter_count()]);
        }
        let scale = 1.0 / (windows.len() * n) as f64;

        for &(inputs, targets) in &windows {
            let states = self.run(inputs);
            let last = states.last().expect("windows are non-empty");
            let y = self.readout(last);
            let mut dh = vec![0.0; hs];
            for k in 0..n {
                let err = y[k] - targets[k];
                loss += err * err * scale;
                let dy = 2.0 * err * scale;
                g_bout[k] += dy;
                for i in 0..hs {
                    g_out[k * hs + i] += dy * last[i];
                    dh[i] += dy * self.w_out[k * hs + i];
                }
            }
            for t in (0..inputs.len()).rev() {
                let h = &states[t];
                let da: Vec<f64> = (0..hs).map(|i| dh[i] * (1.0 - h[i] * h[i])).collect();
                let mut next = vec![0.0; hs];
                for i in 0..hs {
                    g_in[i] += da[i] * inputs[t];
                    g_bh[i] += da[i];
                    if t > 0 {
                        let prev = &states[t - 1];
                        for j in 0..hs {
                            g_rec[i * hs + j] += da[i] * prev[j];
                            next[j] += da[i] * self.w_rec[i * hs + j];
                        }
                    }
                }
                dh = next;
            }
        }

        let mut grad = Vec::with_capacity(self.parameter_count());
        for block in [g_in, g_rec, g_bh, g_out, g_bout] {
            grad.extend(block);
        }
        (loss, grad)
    }
}

impl Predictor for RecurrentPredictor {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, history: &[f64]) -> Result<Vec<f64>, PredictError> {
        if history.is_empty() {
            return Err(PredictError::EmptyHistory);
        }
        let start = history.len().saturating_sub(self.truncation);
        Ok(self
            .raw_output(&history[start..])
            .into_iter()
            .map(|y| if y.is_finite() { y.clamp(0.0, 1.0) } else { 0.0 })
            .collect())
    }
}

/// `(inputs, targets)` pairs: `truncation` consecutive inputs followed by the
/// next `horizon` values.
fn training_windows(series: &[f64], truncation: usize, horizon: usize) -> Vec<(&[f64], &[f64])> {
    if series.len() < truncation + horizon {
        return Vec::new();
    }
    (0..=series.len() - truncation - horizon)
        .map(|s| {
            (
                &series[s..s + truncation],
                &series[s + truncation..s + truncation + horizon],
            )
        })
        .collect()
}

/// Trains a fresh network on `series`, returning the lowest-loss iterate.
pub fn train_recurrent(
    series: &[f64],
    config: &TrainConfig,
) -> Result<(RecurrentPredictor, TrainingSummary), TrainError> {
    let min = MIN_SERIES_LEN.max(config.truncation + config.horizon);
    if series.len() < min {
        return Err(TrainError::SeriesTooShort {
            len: series.len(),
            min,
        });
    }
    let init = RecurrentPredictor::random(config.hidden, config.horizon, config.truncation, config.seed);
    fit(init, series, config.epochs, config.learning_rate)
}

/// Continues gradient descent from `model`.
pub fn fit(
    mut model: RecurrentPredictor,
    series: &[f64],
    epochs: usize,
    learning_rate: f64,
) -> Result<(RecurrentPredictor, TrainingSummary), TrainError> {
    let mut params = model.parameters();
    let mut best = params.clone();
    let (initial_loss, mut grad) = model.loss_gradient(series);
    if !initial_loss.is_finite() {
        return Err(TrainError::DivergedTraining { epoch: 0 });
    }
    let mut best_loss = initial_loss;
    for epoch in 1..=epochs {
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        model.set_parameters(&params);
        let (loss, next) = model.loss_gradient(series);
        if !loss.is_finite() {
            return Err(TrainError::DivergedTraining { epoch });
        }
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&params);
        }
        grad = next;
    }
    model.set_parameters(&best);
    Ok((
        model,
        TrainingSummary {
            initial_loss,
            final_loss: best_loss,
            epochs_run: epochs,
        },
    ))
}
