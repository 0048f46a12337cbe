//! Horizon RMSE over convolutive anchors and the derived accuracy criteria.

mod report;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{anchor_indices, AnchorWindow, DatasetSplit, NormalizationStats, SignalFrame};
use crate::linid::StateObserver;

pub use report::{export_report, ordering_warnings, ModelReport, REFERENCE_LSS, REFERENCE_NLARX, REFERENCE_ROWS};

/// Benchmark horizon: 48 ten-minute steps.
pub const DEFAULT_HORIZON: usize = 48;

const ANCHOR_CHUNK: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("section `{0}` is too short for a single anchor")]
    TooShort(String),
    #[error("criterion bounds 1 <= {i} <= {j} <= {h} violated")]
    Bounds { i: usize, j: usize, h: usize },
    #[error("missing sections: {0:?}")]
    MissingSections(Vec<String>),
    #[error("forecast failed: {0}")]
    Forecast(String),
    #[error("model needs {need} past samples, evaluation provides {have}")]
    PastTooShort { need: usize, have: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Anything producing an `H`-step output prediction from a past window and
/// the known future inputs.
pub trait Forecaster: Sync {
    fn required_past(&self) -> usize;
    /// `[H × n_y]`, `H = future_inputs.nrows()`.
    fn forecast(
        &self,
        past_inputs: &DMatrix<f64>,
        past_outputs: &DMatrix<f64>,
        future_inputs: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>, String>;
}

impl Forecaster for StateObserver {
    fn required_past(&self) -> usize {
        self.past_len()
    }

    fn forecast(&self, pi: &DMatrix<f64>, po: &DMatrix<f64>, fi: &DMatrix<f64>) -> Result<DMatrix<f64>, String> {
        StateObserver::forecast(self, pi, po, fi).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub horizon: usize,
    pub past_len: usize,
    pub stride: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            past_len: crate::linid::DEFAULT_PAST_LEN,
            stride: 1,
        }
    }
}

/// Squared-error sums per depth and channel, pooled over anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonAccumulator {
    pub sq: DMatrix<f64>,
    pub anchors: usize,
}

impl HorizonAccumulator {
    pub fn new(horizon: usize, n_y: usize) -> Self {
        Self {
            sq: DMatrix::zeros(horizon, n_y),
            anchors: 0,
        }
    }

    /// Adds one anchor's `[H × n_y]` prediction error.
    pub fn add_error(&mut self, err: &DMatrix<f64>) {
        self.sq += err.component_mul(err);
        self.anchors += 1;
    }

    pub fn merge(&mut self, other: &HorizonAccumulator) {
        self.sq += &other.sq;
        self.anchors += other.anchors;
    }

    pub fn metrics(&self) -> HorizonMetrics {
        let k = self.anchors.max(1) as f64;
        let per_channel = self.sq.map(|s| (s / k).sqrt());
        let aggregate = self.sq.row_iter().map(|r| (r.sum() / k).sqrt()).collect();
        HorizonMetrics {
            per_channel,
            aggregate,
            anchors: self.anchors,
        }
    }
}

/// Per-depth RMSE. Row `i-1` holds depth `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonMetrics {
    pub per_channel: DMatrix<f64>,
    /// `sqrt((1/K) Σ_k ‖ŷ[k+i|k] − y[k+i]‖²)` with the norm summed over
    /// output channels.
    pub aggregate: Vec<f64>,
    pub anchors: usize,
}

impl HorizonMetrics {
    pub fn horizon(&self) -> usize {
        self.aggregate.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.per_channel.ncols()
    }

    /// Per-channel RMSE scaled back to physical units.
    pub fn per_channel_physical(&self, scales: &[f64]) -> DMatrix<f64> {
        let mut m = self.per_channel.clone();
        for (c, s) in scales.iter().enumerate().take(m.ncols()) {
            m.column_mut(c).scale_mut(*s);
        }
        m
    }

    pub fn per_channel_criterion(&self, channel: usize, i: usize, j: usize) -> Result<f64> {
        check_bounds(i, j, self.horizon())?;
        Ok(self.per_channel.column(channel).rows(i - 1, j - i + 1).mean())
    }
}

fn check_bounds(i: usize, j: usize, h: usize) -> Result<()> {
    if i < 1 || i > j || j > h {
        return Err(EvalError::Bounds { i, j, h });
    }
    Ok(())
}

/// `L(I, J)`: mean of the aggregate per-depth RMSE over depths `I..=J`.
pub fn criterion(m: &HorizonMetrics, i: usize, j: usize) -> Result<f64> {
    check_bounds(i, j, m.horizon())?;
    Ok(m.aggregate[i - 1..j].iter().sum::<f64>() / (j - i + 1) as f64)
}

/// `(full, short, long)` = `L(1,H)`, `L(1,H/4)`, `L(3H/4,H)`.
pub fn standard_criteria(m: &HorizonMetrics) -> Result<(f64, f64, f64)> {
    let h = m.horizon();
    Ok((criterion(m, 1, h)?, criterion(m, 1, (h / 4).max(1))?, criterion(m, (3 * h / 4).max(1), h)?))
}

/// Accumulates prediction errors from the given anchors of one section.
pub fn accumulate_anchors(
    model: &dyn Forecaster,
    section: &SignalFrame,
    anchors: &[usize],
    settings: &EvalSettings,
) -> Result<HorizonAccumulator> {
    if model.required_past() > settings.past_len {
        return Err(EvalError::PastTooShort {
            need: model.required_past(),
            have: settings.past_len,
        });
    }
    let n_y = section.n_outputs();
    let partial: Vec<Result<HorizonAccumulator>> = anchors
        .par_chunks(ANCHOR_CHUNK)
        .map(|chunk| {
            let mut acc = HorizonAccumulator::new(settings.horizon, n_y);
            for &a in chunk {
                let w = AnchorWindow::from_frame(section, a, settings.past_len, settings.horizon);
                let pred = model
                    .forecast(&w.past_inputs, &w.past_outputs, &w.future_inputs)
                    .map_err(EvalError::Forecast)?;
                if pred.nrows() != settings.horizon || pred.ncols() != n_y {
                    return Err(EvalError::Forecast(format!(
                        "prediction is {}x{}, expected {}x{n_y}",
                        pred.nrows(),
                        pred.ncols(),
                        settings.horizon
                    )));
                }
                acc.add_error(&(pred - &w.future_outputs));
            }
            Ok(acc)
        })
        .collect();
    let mut acc = HorizonAccumulator::new(settings.horizon, n_y);
    for p in partial {
        acc.merge(&p?);
    }
    Ok(acc)
}

/// Pooled horizon metrics over every admissible anchor of every section.
pub fn horizon_rmse_sections(
    model: &dyn Forecaster,
    sections: &[(&str, &SignalFrame)],
    settings: &EvalSettings,
) -> Result<HorizonMetrics> {
    let n_y = sections.first().map(|s| s.1.n_outputs()).unwrap_or(0);
    let mut acc = HorizonAccumulator::new(settings.horizon, n_y);
    for (label, f) in sections {
        let anchors = anchor_indices(f.n_samples(), settings.past_len, settings.horizon, settings.stride);
        if anchors.is_empty() {
            return Err(EvalError::TooShort(label.to_string()));
        }
        acc.merge(&accumulate_anchors(model, f, &anchors, settings)?);
    }
    Ok(acc.metrics())
}

pub fn horizon_rmse(model: &dyn Forecaster, section: &SignalFrame, settings: &EvalSettings) -> Result<HorizonMetrics> {
    horizon_rmse_sections(model, &[("section", section)], settings)
}

/// Full/short/long criteria on the test set and full-horizon accuracy per
/// scenario, aggregate and per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub full: f64,
    pub short: f64,
    pub long: f64,
    /// `(label, full-horizon acc)` in label order.
    pub scenarios: Vec<(String, f64)>,
    pub full_per_channel: Vec<f64>,
    pub short_per_channel: Vec<f64>,
    pub long_per_channel: Vec<f64>,
    pub scenarios_per_channel: Vec<(String, Vec<f64>)>,
}

impl CriteriaReport {
    pub fn scenario(&self, label: &str) -> Option<f64> {
        self.scenarios.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
    }
}

/// Test-set criteria plus per-scenario full-horizon accuracy.
pub fn scenario_eval(
    model: &dyn Forecaster,
    split: &DatasetSplit,
    settings: &EvalSettings,
) -> Result<(CriteriaReport, HorizonMetrics)> {
    let mut missing = Vec::new();
    if split.test.is_empty() {
        missing.push("test".to_string());
    }
    if split.scenario.is_empty() {
        missing.push("scenario".to_string());
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingSections(missing));
    }
    let test: Vec<(&str, &SignalFrame)> = split.test.iter().map(|s| (s.label.as_str(), &s.frame)).collect();
    let tm = horizon_rmse_sections(model, &test, settings)?;
    let h = settings.horizon;
    let (full, short, long) = standard_criteria(&tm)?;
    let per = |i, j| -> Result<Vec<f64>> { (0..tm.n_outputs()).map(|c| tm.per_channel_criterion(c, i, j)).collect() };
    let mut scenarios = Vec::new();
    let mut scenarios_per_channel = Vec::new();
    let mut sorted: Vec<_> = split.scenario.iter().collect();
    sorted.sort_by(|a, b| a.label.cmp(&b.label));
    for s in sorted {
        let m = horizon_rmse_sections(model, &[(s.label.as_str(), &s.frame)], settings)?;
        scenarios.push((s.label.clone(), criterion(&m, 1, h)?));
        let pc = (0..m.n_outputs()).map(|c| m.per_channel_criterion(c, 1, h)).collect::<Result<_>>()?;
        scenarios_per_channel.push((s.label.clone(), pc));
    }
    let report = CriteriaReport {
        full,
        short,
        long,
        full_per_channel: per(1, h)?,
        short_per_channel: per(1, (h / 4).max(1))?,
        long_per_channel: per((3 * h / 4).max(1), h)?,
        scenarios,
        scenarios_per_channel,
    };
    Ok((report, tm))
}

/// Output-channel scales of `stats`, in frame output order.
pub fn output_scales(stats: &NormalizationStats, frame: &SignalFrame) -> Vec<f64> {
    frame
        .output_indices()
        .iter()
        .map(|&c| stats.index_of(&frame.channels[c].name).map(|i| stats.scale[i]).unwrap_or(1.0))
        .collect()
}
