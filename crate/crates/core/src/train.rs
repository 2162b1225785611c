//! Unsupervised training of the forecaster on masked one-step-ahead L1 loss.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{forward, DgNcdeModel, Parameters};
use crate::rng::SeededRng;
use crate::series::{make_windows, SeriesDataset, Window};
use crate::spline::WindowPath;

pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub val_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            patience: 15,
            batch_size: 64,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.001,
            clip_norm: 5.0,
            val_ratio: 0.1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::arg("epochs, patience and batch_size must be positive"));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::arg("lr and clip_norm must be positive, weight_decay nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::arg("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.val_ratio > 0.0 && self.val_ratio <= 0.5) {
            return Err(Error::arg(format!("val_ratio {} outside (0, 0.5]", self.val_ratio)));
        }
        Ok(())
    }
}

/// `Σ m_i |y_i - ŷ_i| / N`, divided by the channel count, not the
/// observed count.
pub fn masked_l1(y: &[f64], y_hat: &[f64], mask: &[bool]) -> f64 {
    assert!(y.len() == y_hat.len() && y.len() == mask.len(), "masked_l1: length mismatch");
    if y.is_empty() {
        return 0.0;
    }
    let total: f64 = y.iter().zip(y_hat).zip(mask).filter(|(_, &m)| m).map(|((a, b), _)| (a - b).abs()).sum();
    total / y.len() as f64
}

/// Scales all gradients by `min(1, c / ‖g‖)` where `‖g‖` is the global
/// Euclidean norm; returns that factor.
pub fn clip_global_norm<'a>(grads: impl IntoIterator<Item = &'a mut Matrix>, c: f64) -> f64 {
    let mut grads: Vec<&mut Matrix> = grads.into_iter().collect();
    let norm = libm::sqrt(grads.iter().map(|g| g.squared_norm()).sum::<f64>());
    if norm > c {
        let factor = c / norm;
        for g in &mut grads {
            g.scale_in_place(factor);
        }
        factor
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        Self { lr: c.lr, beta1: c.beta1, beta2: c.beta2, weight_decay: c.weight_decay }
    }
}

/// First and second moments, one pair per parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn for_shapes<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self { v: m.clone(), m, step: 0 }
    }
}

/// One Adam update with L2 weight decay folded into the gradient.
pub fn adam_step<'a>(
    state: &mut OptimizerState,
    params: impl IntoIterator<Item = &'a mut Matrix>,
    grads: &[Matrix],
    cfg: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (k, p) in params.into_iter().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (i, w) in p.as_mut_slice().iter_mut().enumerate() {
            let gi = g[i] + cfg.weight_decay * *w;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *w -= cfg.lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPSILON);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Waiting,
    Stop,
}

/// Stops once `patience` consecutive epochs fail to improve on the best
/// validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, waited: 0 }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn update(&mut self, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.waited = 0;
            StopDecision::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Waiting
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Temporal split: the last `val_ratio` of rows become validation rows.
/// Returns `(train_rows, val_rows)`.
pub fn temporal_split(dataset: &SeriesDataset, val_ratio: f64) -> Result<(SeriesDataset, SeriesDataset)> {
    let t = dataset.len();
    let n_val = libm::round(t as f64 * val_ratio) as usize;
    if n_val == 0 || n_val >= t {
        return Err(Error::arg(format!("val_ratio {val_ratio} leaves no rows on one side of a {t}-row split")));
    }
    Ok((dataset.slice_rows(0, t - n_val)?, dataset.slice_rows(t - n_val, t)?))
}

/// Windows with at least one observed target entry.
pub fn trainable_windows(dataset: &SeriesDataset, w_s: usize) -> Vec<Window> {
    make_windows(dataset, w_s).into_iter().filter(Window::target_observed).collect()
}

fn batch_loss(tape: &mut Tape, pred: Var, windows: &[&Window], n: usize) -> Result<Var> {
    let b = windows.len();
    let mut target = Matrix::zeros(n * b, 1);
    let mut mask = Matrix::zeros(n * b, 1);
    for (w, win) in windows.iter().enumerate() {
        for i in 0..n {
            target[(i * b + w, 0)] = win.target[i];
            mask[(i * b + w, 0)] = if win.target_mask[i] { 1.0 } else { 0.0 };
        }
    }
    let target = tape.constant(target);
    let mask = tape.constant(mask);
    let diff = tape.sub(pred, target)?;
    let diff = tape.abs(diff);
    let masked = tape.mul(diff, mask)?;
    let total = tape.sum(masked);
    Ok(tape.scale(total, 1.0 / (n * b) as f64))
}

/// Mean masked L1 of the model over `windows`.
pub fn evaluate_loss(model: &DgNcdeModel, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Ok(0.0);
    }
    let preds = model.forecast_batch(windows)?;
    let total: f64 = windows.iter().zip(&preds).map(|(w, p)| masked_l1(&w.target, p, &w.target_mask)).sum();
    Ok(total / windows.len() as f64)
}

/// Trains on a normalized, unlabeled series; keeps the parameters of the
/// best validation epoch.
pub fn train(model: DgNcdeModel, train_set: &SeriesDataset, cfg: &TrainConfig) -> Result<(DgNcdeModel, TrainHistory)> {
    cfg.validate()?;
    let w_s = model.config().window;
    if train_set.n_channels() != model.config().n_channels {
        return Err(Error::arg("training set channel count differs from model"));
    }
    let (fit_rows, val_rows) = temporal_split(train_set, cfg.val_ratio)?;
    let train_windows = trainable_windows(&fit_rows, w_s);
    let val_windows = trainable_windows(&val_rows, w_s);
    if train_windows.is_empty() {
        return Err(Error::arg("no training windows with an observed target"));
    }
    let paths: Vec<WindowPath> = train_windows.iter().map(|w| model.path(w)).collect::<Result<_>>()?;
    Trainer::new(model, cfg).run(&train_windows, &paths, &val_windows)
}

struct Trainer<'a> {
    model: DgNcdeModel,
    cfg: &'a TrainConfig,
    adam: AdamConfig,
    state: OptimizerState,
    rng: SeededRng,
}

impl<'a> Trainer<'a> {
    fn new(model: DgNcdeModel, cfg: &'a TrainConfig) -> Self {
        let state = OptimizerState::for_shapes(model.params().iter());
        Self { adam: cfg.into(), state, rng: SeededRng::new(cfg.seed), model, cfg }
    }

    fn run(mut self, windows: &[Window], paths: &[WindowPath], val: &[Window]) -> Result<(DgNcdeModel, TrainHistory)> {
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut stopper = EarlyStopping::new(self.cfg.patience);
        let mut best: Option<Parameters<Matrix>> = None;
        let mut history = TrainHistory::default();

        for epoch in 1..=self.cfg.epochs {
            self.rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for batch in order.chunks(self.cfg.batch_size) {
                loss_sum += self.step(batch, windows, paths)? * batch.len() as f64;
            }
            let train_loss = loss_sum / windows.len() as f64;
            let val_loss = if val.is_empty() { train_loss } else { evaluate_loss(&self.model, val)? };
            let decision = stopper.update(val_loss);
            if decision == StopDecision::Improved {
                best = Some(self.model.params().clone());
                history.best_epoch = epoch;
                history.best_val_loss = val_loss;
            }
            let stopped = decision == StopDecision::Stop;
            history.epochs.push(EpochRecord { epoch, train_loss, val_loss, stopped });
            if stopped {
                break;
            }
        }
        if let Some(p) = best {
            *self.model.params_mut() = p;
        }
        Ok((self.model, history))
    }

    fn step(&mut self, batch: &[usize], windows: &[Window], paths: &[WindowPath]) -> Result<f64> {
        let cfg = self.model.config().clone();
        let batch_paths: Vec<WindowPath> = batch.iter().map(|&i| paths[i].clone()).collect();
        let batch_windows: Vec<&Window> = batch.iter().map(|&i| &windows[i]).collect();
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, true);
        let pred = forward(&mut tape, &bound, &cfg, &batch_paths)?;
        let loss = batch_loss(&mut tape, pred, &batch_windows, cfg.n_channels)?;
        tape.backward(loss)?;
        let loss_value = tape.scalar(loss);
        let mut grads: Vec<Matrix> = bound.iter().map(|&v| tape.grad(v)).collect();
        drop(tape);
        clip_global_norm(grads.iter_mut(), self.cfg.clip_norm);
        adam_step(&mut self.state, self.model.params_mut().iter_mut(), &grads, &self.adam);
        Ok(loss_value)
    }
}
