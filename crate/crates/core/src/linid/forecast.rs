use nalgebra::{DMatrix, DVector};

use super::{LinIdError, Result, StateSpaceModel};

/// Past window length used for initial-state estimation.
pub const DEFAULT_PAST_LEN: usize = 20;

const RANK_TOL: f64 = 1e-10;

/// Least-squares state estimator for a fixed past length. The pseudo-inverse
/// of the extended observability matrix is computed once and reused.
#[derive(Debug, Clone)]
pub struct StateObserver {
    model: StateSpaceModel,
    past_len: usize,
    /// `A − K C`, or `A` without an innovation gain.
    a_bar: DMatrix<f64>,
    a_bar_last: DMatrix<f64>,
    obs_pinv: DMatrix<f64>,
}

impl StateObserver {
    pub fn new(model: &StateSpaceModel, past_len: usize) -> Result<Self> {
        let (n_x, n_y) = (model.n_x(), model.n_y());
        if past_len == 0 {
            return Err(LinIdError::TooShort("past window is empty".into()));
        }
        let a_bar = match &model.k {
            Some(k) => &model.a - k * &model.c,
            None => model.a.clone(),
        };
        let mut obs = DMatrix::zeros(past_len * n_y, n_x);
        let mut pw = DMatrix::identity(n_x, n_x);
        for t in 0..past_len {
            obs.rows_mut(t * n_y, n_y).copy_from(&(&model.c * &pw));
            if t + 1 < past_len {
                pw = &a_bar * pw;
            }
        }
        let svd = obs.clone().svd(true, true);
        let top = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|s| **s > RANK_TOL * top).count();
        if !(top > 0.0) || rank < n_x {
            return Err(LinIdError::RankDeficient(format!(
                "observability matrix over {past_len} samples has rank {rank} < n_x = {n_x}"
            )));
        }
        let obs_pinv = svd
            .pseudo_inverse(RANK_TOL * top)
            .map_err(|e| LinIdError::Numeric(e.to_string()))?;
        Ok(Self {
            model: model.clone(),
            past_len,
            a_bar,
            a_bar_last: pw,
            obs_pinv,
        })
    }

    pub fn model(&self) -> &StateSpaceModel {
        &self.model
    }

    pub fn past_len(&self) -> usize {
        self.past_len
    }

    /// State at the last row of the past window.
    pub fn estimate(&self, past_inputs: &DMatrix<f64>, past_outputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        let m = &self.model;
        let (n_x, n_y, n_u) = (m.n_x(), m.n_y(), m.n_u());
        let l = self.past_len;
        if past_inputs.nrows() < l || past_outputs.nrows() < l || past_inputs.ncols() != n_u || past_outputs.ncols() != n_y
        {
            return Err(LinIdError::Shape(format!(
                "past window {}x{} / {}x{}, expected {l} rows of {n_u} inputs and {n_y} outputs",
                past_inputs.nrows(),
                past_inputs.ncols(),
                past_outputs.nrows(),
                past_outputs.ncols()
            )));
        }
        let (u0, y0) = (past_inputs.nrows() - l, past_outputs.nrows() - l);
        let mut forced = DVector::zeros(n_x);
        let mut resid = DVector::zeros(l * n_y);
        for t in 0..l {
            let y = past_outputs.row(y0 + t).transpose();
            let r = &y - &m.c * &forced;
            resid.rows_mut(t * n_y, n_y).copy_from(&r);
            if t + 1 < l {
                let mut next = &self.a_bar * &forced + &m.b * past_inputs.row(u0 + t).transpose();
                if let Some(k) = &m.k {
                    next += k * y;
                }
                forced = next;
            }
        }
        let x0 = &self.obs_pinv * resid;
        Ok(&self.a_bar_last * x0 + forced)
    }

    /// `H`-step prediction after the window, `H = future_inputs.nrows()`.
    /// Row `h` of the result predicts the output `h + 1` samples after the
    /// last past row; the innovation correction is applied once at the
    /// anchor, then the model runs open loop.
    pub fn forecast(
        &self,
        past_inputs: &DMatrix<f64>,
        past_outputs: &DMatrix<f64>,
        future_inputs: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let m = &self.model;
        if future_inputs.ncols() != m.n_u() {
            return Err(LinIdError::Shape("future inputs have the wrong width".into()));
        }
        let mut x = self.estimate(past_inputs, past_outputs)?;
        let horizon = future_inputs.nrows();
        let mut out = DMatrix::zeros(horizon, m.n_y());
        let u_anchor = past_inputs.row(past_inputs.nrows() - 1).transpose();
        let mut next = &m.a * &x + &m.b * u_anchor;
        if let Some(k) = &m.k {
            let y_anchor = past_outputs.row(past_outputs.nrows() - 1).transpose();
            next += k * (y_anchor - &m.c * &x);
        }
        x = next;
        for h in 0..horizon {
            out.set_row(h, &(&m.c * &x).transpose());
            if h + 1 < horizon {
                x = &m.a * &x + &m.b * future_inputs.row(h).transpose();
            }
        }
        Ok(out)
    }
}

/// One-shot [`StateObserver::estimate`] over the whole past window.
pub fn estimate_initial_state(
    model: &StateSpaceModel,
    past_inputs: &DMatrix<f64>,
    past_outputs: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    StateObserver::new(model, past_outputs.nrows())?.estimate(past_inputs, past_outputs)
}

pub fn forecast(
    model: &StateSpaceModel,
    past_inputs: &DMatrix<f64>,
    past_outputs: &DMatrix<f64>,
    future_inputs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    StateObserver::new(model, past_outputs.nrows())?.forecast(past_inputs, past_outputs, future_inputs)
}
