use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{HyperoptError, Result};
use crate::linid::{BlockHorizon, Focus, NoiseModel, SubspaceOptions};
use crate::nlarx::NlarxConfig;
use crate::simulator::{derive_seed, stream_rng};

/// Subspace model grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LssSpace {
    pub n_x: Vec<usize>,
    pub focus: Vec<Focus>,
    pub block_horizon: Vec<BlockHorizon>,
    pub noise_model: Vec<NoiseModel>,
    pub stabilize: bool,
}

impl Default for LssSpace {
    fn default() -> Self {
        Self {
            n_x: vec![2, 3, 4],
            focus: vec![Focus::Simulation, Focus::Prediction],
            block_horizon: vec![BlockHorizon::Fixed(48), BlockHorizon::Fixed(24), BlockHorizon::Auto],
            noise_model: vec![NoiseModel::None, NoiseModel::Estimate],
            stabilize: false,
        }
    }
}

/// NLARX grid plus continuous ranges. Every layer of a trial has the same
/// width. `lags` is an extension of the published grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlarxSpace {
    pub n_layers: Vec<usize>,
    pub units: Vec<usize>,
    pub l2: Vec<f64>,
    pub loss_horizon: Vec<usize>,
    pub lags: Vec<(usize, usize)>,
    /// Log-uniform.
    pub learning_rate: (f64, f64),
    /// Uniform over integers, inclusive.
    pub batch_size: (usize, usize),
    /// Fields not searched (epochs, patience, strides, residual).
    pub base: NlarxConfig,
}

impl Default for NlarxSpace {
    fn default() -> Self {
        Self {
            n_layers: vec![1, 2, 3],
            units: vec![8, 16, 32, 64],
            l2: vec![0.0, 1e-4, 1e-3],
            loss_horizon: vec![3, 5, 8, 15],
            lags: vec![(5, 5)],
            learning_rate: (1e-5, 1e-2),
            batch_size: (16, 256),
            base: NlarxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SearchSpace {
    Lss(LssSpace),
    Nlarx(NlarxSpace),
}

impl SearchSpace {
    pub fn family(&self) -> &'static str {
        match self {
            SearchSpace::Lss(_) => "lss",
            SearchSpace::Nlarx(_) => "nlarx",
        }
    }

    pub fn grid_size(&self) -> usize {
        match self {
            SearchSpace::Lss(s) => s.n_x.len() * s.focus.len() * s.block_horizon.len() * s.noise_model.len(),
            SearchSpace::Nlarx(s) => s.n_layers.len() * s.units.len() * s.l2.len() * s.loss_horizon.len() * s.lags.len(),
        }
    }

    fn has_continuous(&self) -> bool {
        matches!(self, SearchSpace::Nlarx(_))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HyperoptError::Invalid(m.to_string()));
        if self.grid_size() == 0 {
            return bad("every discrete dimension needs at least one value");
        }
        if let SearchSpace::Nlarx(s) = self {
            let (lo, hi) = s.learning_rate;
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("learning-rate range must be positive and ordered");
            }
            if s.batch_size.0 == 0 || s.batch_size.0 > s.batch_size.1 {
                return bad("batch-size range must be positive and ordered");
            }
            if s.n_layers.contains(&0) || s.units.contains(&0) || s.loss_horizon.contains(&0) {
                return bad("layer counts, widths and loss horizons must be positive");
            }
        }
        Ok(())
    }

    /// Whether `c` lies inside this space.
    pub fn contains(&self, c: &TrialConfig) -> bool {
        match (self, c) {
            (SearchSpace::Lss(s), TrialConfig::Lss(o)) => {
                s.n_x.contains(&o.n_x)
                    && s.focus.contains(&o.focus)
                    && s.block_horizon.contains(&o.block_horizon)
                    && s.noise_model.contains(&o.noise_model)
            }
            (SearchSpace::Nlarx(s), TrialConfig::Nlarx(c)) => {
                let w = c.hidden_layers.first().copied().unwrap_or(0);
                s.n_layers.contains(&c.hidden_layers.len())
                    && c.hidden_layers.iter().all(|h| *h == w)
                    && s.units.contains(&w)
                    && s.l2.contains(&c.l2)
                    && s.loss_horizon.contains(&c.loss_horizon)
                    && s.lags.contains(&(c.n_a, c.n_b))
                    && (s.learning_rate.0..=s.learning_rate.1).contains(&c.learning_rate)
                    && (s.batch_size.0..=s.batch_size.1).contains(&c.batch_size)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrialConfig {
    Lss(SubspaceOptions),
    Nlarx(NlarxConfig),
}

impl TrialConfig {
    pub fn family(&self) -> &'static str {
        match self {
            TrialConfig::Lss(_) => "lss",
            TrialConfig::Nlarx(_) => "nlarx",
        }
    }

    /// Free parameters for `n_u` inputs and `n_y` outputs.
    pub fn n_params(&self, n_u: usize, n_y: usize) -> usize {
        match self {
            TrialConfig::Lss(o) => {
                let n = o.n_x;
                let k = if o.noise_model == NoiseModel::Estimate { n * n_y } else { 0 };
                n * n + n * n_u + n_y * n + k
            }
            TrialConfig::Nlarx(c) => {
                let s = c.layer_sizes(n_u, n_y);
                s.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        }
    }

    /// Flat `(name, value)` pairs in a fixed order, values as JSON text.
    pub fn fields(&self) -> Vec<(String, String)> {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        if let serde_json::Value::Object(m) = v {
            for (k, val) in m {
                match val {
                    _ if k == "family" => {}
                    serde_json::Value::String(s) => out.push((k, s)),
                    other => out.push((k, other.to_string())),
                }
            }
        }
        out
    }

    /// Canonical text used for lexicographic tie-breaking.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// The configurations a search of `budget` trials evaluates. The discrete
/// grid is visited in a seeded order; continuous dimensions are drawn per
/// trial from a seeded stream. A purely discrete space caps the budget at
/// its grid size.
pub fn sample_configs(space: &SearchSpace, budget: usize, seed: u64) -> Result<Vec<TrialConfig>> {
    space.validate()?;
    if budget == 0 {
        return Err(HyperoptError::Invalid("budget must be at least 1".into()));
    }
    let g = space.grid_size();
    let n = if space.has_continuous() { budget } else { budget.min(g) };
    let mut order: Vec<usize> = (0..g).collect();
    order.shuffle(&mut stream_rng(seed, "hyperopt/grid"));
    let mut rng = stream_rng(seed, "hyperopt/continuous");
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut idx = order[t % g];
        let mut pick = |len: usize| {
            let i = idx % len;
            idx /= len;
            i
        };
        out.push(match space {
            SearchSpace::Lss(s) => TrialConfig::Lss(SubspaceOptions {
                n_x: s.n_x[pick(s.n_x.len())],
                focus: s.focus[pick(s.focus.len())],
                block_horizon: s.block_horizon[pick(s.block_horizon.len())],
                noise_model: s.noise_model[pick(s.noise_model.len())],
                stabilize: s.stabilize,
            }),
            SearchSpace::Nlarx(s) => {
                let layers = s.n_layers[pick(s.n_layers.len())];
                let units = s.units[pick(s.units.len())];
                let l2 = s.l2[pick(s.l2.len())];
                let p = s.loss_horizon[pick(s.loss_horizon.len())];
                let (n_a, n_b) = s.lags[pick(s.lags.len())];
                let (lo, hi) = s.learning_rate;
                let lr = if lo == hi { lo } else { (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp().clamp(lo, hi) };
                let batch = rng.random_range(s.batch_size.0..=s.batch_size.1);
                TrialConfig::Nlarx(NlarxConfig {
                    n_a,
                    n_b,
                    hidden_layers: vec![units; layers],
                    l2,
                    loss_horizon: p,
                    learning_rate: lr,
                    batch_size: batch,
                    seed: derive_seed(seed, &format!("trial/{t}")),
                    ..s.base.clone()
                })
            }
        });
    }
    Ok(out)
}
