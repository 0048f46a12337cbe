use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rollout::{batch_loss_grad, WindowView};
use super::{NlarxConfig, NlarxError, NlarxModel, Result};
use crate::data::{anchor_indices, DatasetSplit, NormalizationStats, SignalFrame};
use crate::eval::{criterion, horizon_rmse_sections, EvalSettings};
use crate::simulator::stream_rng;

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update of `theta` against `grad`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for k in 0..theta.len() {
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g;
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g;
            theta[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Full-horizon accuracy on the validation sections.
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub stopped_early: bool,
    pub train_windows: usize,
}

struct Series {
    u: Vec<f64>,
    y: Vec<f64>,
}

impl Series {
    fn new(f: &SignalFrame) -> Self {
        let n = f.n_samples();
        let flat = |m: nalgebra::DMatrix<f64>| m.transpose().as_slice().to_vec();
        Self {
            u: flat(f.inputs(0, n)),
            y: flat(f.outputs(0, n)),
        }
    }
}

/// Trains on the train sections of a normalized split, early-stopping on
/// the validation sections; `stats` is attached to the returned model.
pub fn train(
    config: &NlarxConfig,
    split: &DatasetSplit,
    stats: Option<&NormalizationStats>,
) -> Result<(NlarxModel, TrainingLog)> {
    let tr: Vec<&SignalFrame> = split.train.iter().map(|s| &s.frame).collect();
    let va: Vec<&SignalFrame> = split.validation.iter().map(|s| &s.frame).collect();
    let (mut model, log) = train_sections(config, &tr, &va)?;
    model.stats = stats.cloned();
    Ok((model, log))
}

pub fn train_sections(
    config: &NlarxConfig,
    train: &[&SignalFrame],
    validation: &[&SignalFrame],
) -> Result<(NlarxModel, TrainingLog)> {
    config.validate()?;
    let (Some(first), false) = (train.first(), validation.is_empty()) else {
        return Err(NlarxError::NoData("training needs train and validation sections".into()));
    };
    let (n_u, n_y) = (first.n_inputs(), first.n_outputs());
    let need = config.required_past();
    let steps = config.loss_horizon;
    let series: Vec<Series> = train.iter().map(|f| Series::new(f)).collect();
    let mut windows = Vec::new();
    for (s, f) in train.iter().enumerate() {
        if f.n_inputs() != n_u || f.n_outputs() != n_y {
            return Err(NlarxError::Shape("train sections disagree on channel roles".into()));
        }
        for a in anchor_indices(f.n_samples(), need, steps, config.train_stride) {
            windows.push((s, a));
        }
    }
    if windows.is_empty() {
        return Err(NlarxError::NoData(format!("no train section holds {} samples", need + steps)));
    }
    let settings = EvalSettings {
        past_len: need.max(crate::linid::DEFAULT_PAST_LEN),
        stride: config.val_stride,
        ..EvalSettings::default()
    };
    let val: Vec<(&str, &SignalFrame)> = validation
        .iter()
        .filter(|f| f.n_samples() >= settings.past_len + settings.horizon)
        .map(|f| ("validation", *f))
        .collect();
    if val.is_empty() {
        return Err(NlarxError::NoData("no validation section is long enough to score".into()));
    }

    let mut model = NlarxModel::new(config.clone(), n_u, n_y)?;
    let mut adam = AdamState::new(model.params.len());
    let mut rng = stream_rng(config.seed, "nlarx/shuffle");
    let (n_a, n_b) = (config.n_a, config.n_b);
    let view = |&(s, a): &(usize, usize)| {
        let d = &series[s];
        WindowView {
            y0: &d.y[(a - n_a) * n_y..(a + 1) * n_y],
            u: &d.u[(a - n_b) * n_u..(a + steps) * n_u],
            target: Some(&d.y[(a + 1) * n_y..(a + 1 + steps) * n_y]),
        }
    };
    let per_epoch = match config.windows_per_epoch {
        0 => windows.len(),
        k => k.min(windows.len()),
    };
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_acc: f64::INFINITY,
        stopped_early: false,
        train_windows: windows.len(),
    };
    let mut best = model.params.clone();
    let mut wait = 0;
    for epoch in 1..=config.epochs {
        windows.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in windows[..per_epoch].chunks(config.batch_size).enumerate() {
            let views: Vec<WindowView> = chunk.iter().map(view).collect();
            let (loss, grad) = batch_loss_grad(&model, &views, steps);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NlarxError::Diverged { epoch, batch: b, loss });
            }
            adam.step(model.params.theta_mut(), &grad, config.learning_rate);
            loss_sum += loss;
            batches += 1;
        }
        let metrics = horizon_rmse_sections(&model, &val, &settings).map_err(|e| NlarxError::Eval(e.to_string()))?;
        let val_acc = criterion(&metrics, 1, settings.horizon).map_err(|e| NlarxError::Eval(e.to_string()))?;
        let train_loss = loss_sum / batches as f64;
        log::debug!("nlarx epoch {epoch}: train loss {train_loss:.6}, validation acc {val_acc:.6}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_acc,
        });
        if !val_acc.is_finite() {
            return Err(NlarxError::Diverged {
                epoch,
                batch: batches,
                loss: val_acc,
            });
        }
        if val_acc < log.best_val_acc {
            log.best_val_acc = val_acc;
            log.best_epoch = epoch;
            best.clone_from(&model.params);
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience.max(1) {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.params = best;
    Ok((model, log))
}
