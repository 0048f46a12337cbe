use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{NlarxError, NlarxModel, Result};
use crate::data::AnchorWindow;

/// Windows per parallel work item. Fixed so the reduction order does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Flat, row-major view of one training window: `y0` holds the `n_a+1`
/// newest past outputs (oldest first), `u` the `n_b+1` newest past inputs
/// followed by the future inputs, `target` the `P` future outputs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowView<'a> {
    pub y0: &'a [f64],
    pub u: &'a [f64],
    pub target: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub(crate) struct WindowData {
    y0: Vec<f64>,
    u: Vec<f64>,
    target: Option<Vec<f64>>,
}

impl WindowData {
    pub fn from_parts(
        m: &NlarxModel,
        past_inputs: &DMatrix<f64>,
        past_outputs: &DMatrix<f64>,
        future_inputs: &DMatrix<f64>,
        future_outputs: Option<&DMatrix<f64>>,
        steps: usize,
    ) -> Result<Self> {
        let c = &m.config;
        let need = c.required_past();
        if past_inputs.nrows() < need || past_outputs.nrows() < need {
            return Err(NlarxError::Shape(format!(
                "past window has {} rows, the lags need {need}",
                past_outputs.nrows().min(past_inputs.nrows())
            )));
        }
        if past_inputs.ncols() != m.n_u
            || future_inputs.ncols() != m.n_u
            || past_outputs.ncols() != m.n_y
            || future_outputs.is_some_and(|f| f.ncols() != m.n_y)
        {
            return Err(NlarxError::Shape(format!("expected {} inputs and {} outputs", m.n_u, m.n_y)));
        }
        if steps == 0 || future_inputs.nrows() + 1 < steps || future_outputs.is_some_and(|f| f.nrows() < steps) {
            return Err(NlarxError::Shape(format!("future window too short for {steps} steps")));
        }
        let rows = |mat: &DMatrix<f64>, from: usize, to: usize, out: &mut Vec<f64>| {
            for r in from..to {
                out.extend(mat.row(r).iter());
            }
        };
        let (pn, un) = (past_outputs.nrows(), past_inputs.nrows());
        let mut y0 = Vec::new();
        rows(past_outputs, pn - c.n_a - 1, pn, &mut y0);
        let mut u = Vec::new();
        rows(past_inputs, un - c.n_b - 1, un, &mut u);
        rows(future_inputs, 0, steps - 1, &mut u);
        let target = future_outputs.map(|f| {
            let mut t = Vec::new();
            rows(f, 0, steps, &mut t);
            t
        });
        Ok(Self { y0, u, target })
    }

    pub fn from_window(m: &NlarxModel, w: &AnchorWindow) -> Result<Self> {
        Self::from_parts(m, &w.past_inputs, &w.past_outputs, &w.future_inputs, Some(&w.future_outputs), w.horizon())
    }

    pub fn view(&self) -> WindowView<'_> {
        WindowView {
            y0: &self.y0,
            u: &self.u,
            target: self.target.as_deref(),
        }
    }
}

pub(crate) struct Workspace {
    ybuf: Vec<f64>,
    acts: Vec<f64>,
    gy: Vec<f64>,
    gout: Vec<f64>,
    gin: Vec<f64>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl Workspace {
    pub fn new(m: &NlarxModel, steps: usize) -> Self {
        let p = &m.params;
        Self {
            ybuf: vec![0.0; (m.config.n_a + 1 + steps) * m.n_y],
            acts: vec![0.0; steps * p.act_len()],
            gy: Vec::new(),
            gout: vec![0.0; m.n_y],
            gin: vec![0.0; p.input_width()],
            delta: Vec::with_capacity(p.max_width()),
            prev: Vec::with_capacity(p.max_width()),
        }
    }

    fn ensure(&mut self, m: &NlarxModel, steps: usize) {
        let yl = (m.config.n_a + 1 + steps) * m.n_y;
        if self.ybuf.len() < yl {
            self.ybuf.resize(yl, 0.0);
        }
        let al = steps * m.params.act_len();
        if self.acts.len() < al {
            self.acts.resize(al, 0.0);
        }
    }

    /// Rolls out `steps` predictions; returns them row-major.
    pub fn run(&mut self, m: &NlarxModel, w: &WindowView, steps: usize) -> &[f64] {
        self.ensure(m, steps);
        let (n_a, n_b, n_y, n_u) = (m.config.n_a, m.config.n_b, m.n_y, m.n_u);
        let al = m.params.act_len();
        self.ybuf[..(n_a + 1) * n_y].copy_from_slice(w.y0);
        for p in 0..steps {
            let acts = &mut self.acts[p * al..(p + 1) * al];
            let mut k = 0;
            for i in 0..=n_a {
                let r = n_a + p - i;
                acts[k..k + n_y].copy_from_slice(&self.ybuf[r * n_y..(r + 1) * n_y]);
                k += n_y;
            }
            for j in 0..=n_b {
                let r = n_b + p - j;
                acts[k..k + n_u].copy_from_slice(&w.u[r * n_u..(r + 1) * n_u]);
                k += n_u;
            }
            let out = m.params.forward(acts);
            let (last, next) = self.ybuf.split_at_mut((n_a + 1 + p) * n_y);
            let last = &last[(n_a + p) * n_y..];
            for j in 0..n_y {
                next[j] = out[j] + if m.config.residual { last[j] } else { 0.0 };
            }
        }
        &self.ybuf[(n_a + 1) * n_y..(n_a + 1 + steps) * n_y]
    }

    /// Runs the window, then accumulates `scale · ∂(Σ e²)/∂θ` into `grad`.
    /// Returns `Σ e²`.
    pub fn run_and_grad(&mut self, m: &NlarxModel, w: &WindowView, steps: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let target = w.target.expect("training window has targets");
        self.run(m, w, steps);
        let (n_a, n_y) = (m.config.n_a, m.n_y);
        let al = m.params.act_len();
        let base = (n_a + 1) * n_y;
        self.gy.clear();
        self.gy.resize((n_a + 1 + steps) * n_y, 0.0);
        let mut sq = 0.0;
        for k in 0..steps * n_y {
            let e = self.ybuf[base + k] - target[k];
            sq += e * e;
            self.gy[base + k] = 2.0 * scale * e;
        }
        for p in (0..steps).rev() {
            let row = n_a + 1 + p;
            self.gout.copy_from_slice(&self.gy[row * n_y..(row + 1) * n_y]);
            if m.config.residual {
                for j in 0..n_y {
                    self.gy[(row - 1) * n_y + j] += self.gout[j];
                }
            }
            m.params.backward(
                &self.acts[p * al..(p + 1) * al],
                &self.gout,
                grad,
                &mut self.gin,
                &mut self.delta,
                &mut self.prev,
            );
            for i in 0..=n_a {
                let r = n_a + p - i;
                for j in 0..n_y {
                    self.gy[r * n_y + j] += self.gin[i * n_y + j];
                }
            }
        }
        sq
    }
}

/// Mean rollout loss over `windows` (each of `steps` rows) plus the weight
/// penalty, and its exact gradient.
pub(crate) fn batch_loss_grad(m: &NlarxModel, windows: &[WindowView], steps: usize) -> (f64, Vec<f64>) {
    let n = windows.len();
    let scale = 1.0 / (n * steps * m.n_y) as f64;
    let parts: Vec<(f64, Vec<f64>)> = windows
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::new(m, steps);
            let mut g = vec![0.0; m.params.len()];
            let sq: f64 = chunk.iter().map(|w| ws.run_and_grad(m, w, steps, scale, &mut g)).sum();
            (sq, g)
        })
        .collect();
    let mut grad = vec![0.0; m.params.len()];
    let mut sq = 0.0;
    for (s, g) in parts {
        sq += s;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    m.params.add_l2_grad(m.config.l2, &mut grad);
    (sq * scale + m.config.l2 * m.params.weight_norm_sq(), grad)
}

fn to_data(m: &NlarxModel, batch: &[AnchorWindow]) -> Result<Vec<WindowData>> {
    if batch.is_empty() {
        return Err(NlarxError::NoData("empty batch".into()));
    }
    batch.iter().map(|w| WindowData::from_window(m, w)).collect()
}

/// Mean over windows of the per-window mean squared rollout error, plus
/// `l2·‖W‖²` over weights (biases excluded).
pub fn loss(m: &NlarxModel, batch: &[AnchorWindow]) -> Result<f64> {
    let data = to_data(m, batch)?;
    let mut ws = Workspace::new(m, 1);
    let mut total = 0.0;
    for (d, w) in data.iter().zip(batch) {
        let steps = w.horizon();
        let v = d.view();
        let pred = ws.run(m, &v, steps);
        let sq: f64 = pred.iter().zip(v.target.unwrap()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sq / (steps * m.n_y) as f64;
    }
    Ok(total / batch.len() as f64 + m.config.l2 * m.params.weight_norm_sq())
}

/// Exact gradient of [`loss`] with respect to `θ`, backpropagated through
/// the predicted outputs that re-enter the lag buffer.
pub fn grad_bptt(m: &NlarxModel, batch: &[AnchorWindow]) -> Result<Vec<f64>> {
    let data = to_data(m, batch)?;
    let steps = batch[0].horizon();
    if batch.iter().any(|w| w.horizon() != steps) {
        // Mixed horizons: weight each window by its own 1/(P·n_y).
        let mut grad = vec![0.0; m.params.len()];
        let mut ws = Workspace::new(m, steps);
        for (d, w) in data.iter().zip(batch) {
            let s = 1.0 / (batch.len() * w.horizon() * m.n_y) as f64;
            ws.run_and_grad(m, &d.view(), w.horizon(), s, &mut grad);
        }
        m.params.add_l2_grad(m.config.l2, &mut grad);
        return Ok(grad);
    }
    let views: Vec<_> = data.iter().map(|d| d.view()).collect();
    Ok(batch_loss_grad(m, &views, steps).1)
}
