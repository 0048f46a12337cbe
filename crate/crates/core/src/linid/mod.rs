//! Linear state-space models `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k]`
//! estimated by a subspace method, with least-squares initial-state
//! estimation and multi-step forecasting.

mod forecast;
mod subspace;

use std::path::Path;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::data::NormalizationStats;
use crate::matrix_io::{from_rows, to_rows};

pub use forecast::{estimate_initial_state, forecast, StateObserver, DEFAULT_PAST_LEN};
pub use subspace::{estimate_subspace, estimate_subspace_io, markov_parameters, markov_relative_error};

#[derive(Debug, thiserror::Error)]
pub enum LinIdError {
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
    #[error("estimated model is unstable (spectral radius {0:.6})")]
    Unstable(f64),
    #[error("not enough data: {0}")]
    TooShort(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LinIdError> = std::result::Result<T, E>;

/// Past/future block length of the Hankel matrices. Serialized as an
/// integer, `-1` meaning automatic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i64", try_from = "i64")]
pub enum BlockHorizon {
    Auto,
    Fixed(usize),
}

impl From<BlockHorizon> for i64 {
    fn from(b: BlockHorizon) -> i64 {
        match b {
            BlockHorizon::Auto => -1,
            BlockHorizon::Fixed(s) => s as i64,
        }
    }
}

impl TryFrom<i64> for BlockHorizon {
    type Error = String;
    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(BlockHorizon::Auto),
            v if v > 0 => Ok(BlockHorizon::Fixed(v as usize)),
            v => Err(format!("block horizon must be positive or -1, got {v}")),
        }
    }
}

impl BlockHorizon {
    /// `max(24, 3 n_x)` when automatic.
    pub fn resolve(self, n_x: usize) -> usize {
        match self {
            BlockHorizon::Auto => (3 * n_x).max(24),
            BlockHorizon::Fixed(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    None,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Focus {
    Simulation,
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceOptions {
    pub n_x: usize,
    pub block_horizon: BlockHorizon,
    pub noise_model: NoiseModel,
    pub focus: Focus,
    /// Pull eigenvalues with `|λ| ≥ 1` radially onto `|λ| = 0.999`.
    pub stabilize: bool,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            n_x: 3,
            block_horizon: BlockHorizon::Auto,
            noise_model: NoiseModel::None,
            focus: Focus::Prediction,
            stabilize: false,
        }
    }
}

impl SubspaceOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 {
            return Err(LinIdError::Options("n_x must be at least 1".into()));
        }
        if let BlockHorizon::Fixed(s) = self.block_horizon {
            if s <= self.n_x {
                return Err(LinIdError::Options(format!("block horizon {s} must exceed n_x = {}", self.n_x)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: Option<DMatrix<f64>>,
    pub options: SubspaceOptions,
    pub stats: Option<NormalizationStats>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, k: Option<DMatrix<f64>>) -> Result<Self> {
        let n = a.nrows();
        let ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && k.as_ref().is_none_or(|k| k.nrows() == n && k.ncols() == c.nrows());
        if !ok {
            return Err(LinIdError::Shape(format!(
                "A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(Self {
            options: SubspaceOptions {
                n_x: n,
                ..SubspaceOptions::default()
            },
            a,
            b,
            c,
            k,
            stats: None,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    /// Model in the state basis `x' = T x`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| LinIdError::Numeric("singular similarity transform".into()))?;
        Ok(Self {
            a: t * &self.a * &ti,
            b: t * &self.b,
            c: &self.c * &ti,
            k: self.k.as_ref().map(|k| t * k),
            options: self.options,
            stats: self.stats.clone(),
        })
    }

    /// Noise-free response from `x0` over the rows of `inputs`.
    pub fn simulate(&self, x0: &nalgebra::DVector<f64>, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = x0.clone();
        let mut y = DMatrix::zeros(inputs.nrows(), self.n_y());
        for t in 0..inputs.nrows() {
            y.set_row(t, &(&self.c * &x).transpose());
            x = &self.a * &x + &self.b * inputs.row(t).transpose();
        }
        y
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| LinIdError::Format(e.to_string()))?;
        f.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub const MODEL_KIND: &str = "linear_state_space";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    n_x: usize,
    n_u: usize,
    n_y: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    k: Option<Vec<Vec<f64>>>,
    options: SubspaceOptions,
    stats: Option<NormalizationStats>,
}

impl From<&StateSpaceModel> for ModelFile {
    fn from(m: &StateSpaceModel) -> Self {
        Self {
            kind: MODEL_KIND.into(),
            n_x: m.n_x(),
            n_u: m.n_u(),
            n_y: m.n_y(),
            a: to_rows(&m.a),
            b: to_rows(&m.b),
            c: to_rows(&m.c),
            k: m.k.as_ref().map(to_rows),
            options: m.options,
            stats: m.stats.clone(),
        }
    }
}

impl TryFrom<ModelFile> for StateSpaceModel {
    type Error = LinIdError;
    fn try_from(f: ModelFile) -> Result<Self> {
        if f.kind != MODEL_KIND {
            return Err(LinIdError::Format(format!("expected kind `{MODEL_KIND}`, found `{}`", f.kind)));
        }
        let shape = |rows: &[Vec<f64>], r: usize, c: usize, name: &str| {
            if rows.len() != r {
                return Err(LinIdError::Format(format!("{name}: {} rows, expected {r}", rows.len())));
            }
            from_rows(rows, c).map_err(|e| LinIdError::Format(format!("{name}: {e}")))
        };
        let a = shape(&f.a, f.n_x, f.n_x, "A")?;
        let b = shape(&f.b, f.n_x, f.n_u, "B")?;
        let c = shape(&f.c, f.n_y, f.n_x, "C")?;
        let k = f.k.as_ref().map(|k| shape(k, f.n_x, f.n_y, "K")).transpose()?;
        let mut m = StateSpaceModel::new(a, b, c, k)?;
        m.options = f.options;
        m.stats = f.stats;
        Ok(m)
    }
}
