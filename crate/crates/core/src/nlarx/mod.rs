//! Multi-layer-perceptron NLARX predictor
//! `y[k+1] = f_θ(y[k], …, y[k−n_a], u[k], …, u[k−n_b])`, trained on
//! recursive multi-step rollouts.

mod mlp;
mod rollout;
mod train;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AnchorWindow, NormalizationStats};
use crate::matrix_io;

pub use mlp::MlpParams;
pub use rollout::{grad_bptt, loss};
pub use train::{train, train_sections, AdamState, EpochRecord, TrainingLog};

#[derive(Debug, thiserror::Error)]
pub enum NlarxError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no usable data: {0}")]
    NoData(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NlarxError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlarxConfig {
    pub n_a: usize,
    pub n_b: usize,
    pub hidden_layers: Vec<usize>,
    pub l2: f64,
    /// Rollout length `P` of the training loss.
    pub loss_horizon: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Predict `y[k+1] − y[k]` instead of `y[k+1]`.
    pub residual: bool,
    /// Anchor spacing of training windows.
    pub train_stride: usize,
    /// Anchor spacing when scoring validation sections.
    pub val_stride: usize,
    /// Cap on windows drawn per epoch; 0 uses all of them.
    pub windows_per_epoch: usize,
}

impl Default for NlarxConfig {
    fn default() -> Self {
        Self {
            n_a: 5,
            n_b: 5,
            hidden_layers: vec![32],
            l2: 1e-4,
            loss_horizon: 8,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            patience: 20,
            seed: 0,
            residual: true,
            train_stride: 1,
            val_stride: 1,
            windows_per_epoch: 0,
        }
    }
}

impl NlarxConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NlarxError::Config(m));
        if self.hidden_layers.iter().any(|w| *w == 0) {
            return bad(format!("hidden widths {:?} must be positive", self.hidden_layers));
        }
        if self.loss_horizon == 0 {
            return bad("loss horizon must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 {} must be non-negative", self.l2));
        }
        if self.batch_size == 0 || self.train_stride == 0 || self.val_stride == 0 {
            return bad("batch size and strides must be positive".into());
        }
        Ok(())
    }

    pub fn input_width(&self, n_u: usize, n_y: usize) -> usize {
        (self.n_a + 1) * n_y + (self.n_b + 1) * n_u
    }

    /// Past samples needed to fill the lag buffers.
    pub fn required_past(&self) -> usize {
        self.n_a.max(self.n_b) + 1
    }

    pub fn layer_sizes(&self, n_u: usize, n_y: usize) -> Vec<usize> {
        let mut s = vec![self.input_width(n_u, n_y)];
        s.extend(&self.hidden_layers);
        s.push(n_y);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlarxModel {
    pub config: NlarxConfig,
    pub params: MlpParams,
    n_u: usize,
    n_y: usize,
    pub stats: Option<NormalizationStats>,
}

/// Output-layer gain at initialization; keeps the initial rollout close to
/// persistence (residual) or zero.
const OUT_GAIN: f64 = 0.1;

impl NlarxModel {
    /// Randomly initialized from `config.seed`.
    pub fn new(config: NlarxConfig, n_u: usize, n_y: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = MlpParams::init(&config.layer_sizes(n_u, n_y), OUT_GAIN, &mut rng);
        Ok(Self {
            config,
            params,
            n_u,
            n_y,
            stats: None,
        })
    }

    pub fn from_params(config: NlarxConfig, n_u: usize, n_y: usize, params: MlpParams) -> Result<Self> {
        let want = config.layer_sizes(n_u, n_y);
        if params.sizes() != want.as_slice() {
            return Err(NlarxError::Shape(format!("layer sizes {:?}, expected {want:?}", params.sizes())));
        }
        Ok(Self {
            config,
            params,
            n_u,
            n_y,
            stats: None,
        })
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn required_past(&self) -> usize {
        self.config.required_past()
    }

    /// One forward pass. Row `i` of `lagged_y` is `y[k−i]`, row `j` of
    /// `lagged_u` is `u[k−j]`. With `residual`, `y[k]` is added back.
    pub fn predict_one_step(&self, lagged_y: &DMatrix<f64>, lagged_u: &DMatrix<f64>) -> Result<DVector<f64>> {
        let c = &self.config;
        if lagged_y.shape() != (c.n_a + 1, self.n_y) || lagged_u.shape() != (c.n_b + 1, self.n_u) {
            return Err(NlarxError::Shape(format!(
                "lags {:?} / {:?}, expected ({}, {}) / ({}, {})",
                lagged_y.shape(),
                lagged_u.shape(),
                c.n_a + 1,
                self.n_y,
                c.n_b + 1,
                self.n_u
            )));
        }
        let mut acts = vec![0.0; self.params.act_len()];
        let mut k = 0;
        for r in 0..=c.n_a {
            for j in 0..self.n_y {
                acts[k] = lagged_y[(r, j)];
                k += 1;
            }
        }
        for r in 0..=c.n_b {
            for j in 0..self.n_u {
                acts[k] = lagged_u[(r, j)];
                k += 1;
            }
        }
        let out = self.params.forward(&mut acts);
        Ok(DVector::from_fn(self.n_y, |j, _| {
            out[j] + if c.residual { lagged_y[(0, j)] } else { 0.0 }
        }))
    }

    /// Recursive `steps`-ahead prediction from the last rows of the past
    /// window. `future_inputs` needs at least `steps − 1` rows.
    pub fn rollout_from(
        &self,
        past_inputs: &DMatrix<f64>,
        past_outputs: &DMatrix<f64>,
        future_inputs: &DMatrix<f64>,
        steps: usize,
    ) -> Result<DMatrix<f64>> {
        let seq = rollout::WindowData::from_parts(self, past_inputs, past_outputs, future_inputs, None, steps)?;
        let mut ws = rollout::Workspace::new(self, steps);
        let pred = ws.run(self, &seq.view(), steps);
        Ok(DMatrix::from_row_slice(steps, self.n_y, pred))
    }

    /// `[P × n_y]` rollout over the window's full horizon.
    pub fn rollout(&self, w: &AnchorWindow) -> Result<DMatrix<f64>> {
        self.rollout_from(&w.past_inputs, &w.past_outputs, &w.future_inputs, w.horizon())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| NlarxError::Format(e.to_string()))?;
        f.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl crate::eval::Forecaster for NlarxModel {
    fn required_past(&self) -> usize {
        self.config.required_past()
    }

    fn forecast(&self, pi: &DMatrix<f64>, po: &DMatrix<f64>, fi: &DMatrix<f64>) -> Result<DMatrix<f64>, String> {
        self.rollout_from(pi, po, fi, fi.nrows()).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    config: NlarxConfig,
    n_u: usize,
    n_y: usize,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerFile>,
    stats: Option<NormalizationStats>,
}

const KIND: &str = "nlarx";

impl From<&NlarxModel> for ModelFile {
    fn from(m: &NlarxModel) -> Self {
        Self {
            kind: KIND.into(),
            config: m.config.clone(),
            n_u: m.n_u,
            n_y: m.n_y,
            layer_sizes: m.params.sizes().to_vec(),
            layers: (0..m.params.n_layers())
                .map(|l| LayerFile {
                    weights: matrix_io::to_rows(&m.params.weight(l)),
                    bias: m.params.bias(l).as_slice().to_vec(),
                })
                .collect(),
            stats: m.stats.clone(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<NlarxModel> {
        if self.kind != KIND {
            return Err(NlarxError::Format(format!("kind `{}` is not `{KIND}`", self.kind)));
        }
        let sizes = &self.layer_sizes;
        if sizes.len() != self.layers.len() + 1 {
            return Err(NlarxError::Format("layer count does not match layer sizes".into()));
        }
        let mut layers = Vec::new();
        for (l, f) in self.layers.into_iter().enumerate() {
            let w = matrix_io::from_rows(&f.weights, sizes[l]).map_err(NlarxError::Format)?;
            layers.push((w, DVector::from_vec(f.bias)));
        }
        let params = MlpParams::from_layers(&layers).map_err(NlarxError::Format)?;
        let mut m = NlarxModel::from_params(self.config, self.n_u, self.n_y, params)?;
        m.stats = self.stats;
        Ok(m)
    }
}
