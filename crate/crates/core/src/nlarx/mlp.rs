use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense tanh network with a linear output layer. All weights and biases
/// live in one flat vector `θ`; layer `l` stores its `out × in` weight
/// matrix row-major, followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    theta: Vec<f64>,
    w_off: Vec<usize>,
    b_off: Vec<usize>,
    act_off: Vec<usize>,
}

impl MlpParams {
    /// `sizes = [input, hidden.., output]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        let (mut w_off, mut b_off, mut act_off) = (Vec::new(), Vec::new(), Vec::new());
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            w_off.push(off);
            off += sizes[l] * sizes[l + 1];
            b_off.push(off);
            off += sizes[l + 1];
        }
        let mut a = 0;
        for s in sizes {
            act_off.push(a);
            a += s;
        }
        act_off.push(a);
        Self {
            sizes: sizes.to_vec(),
            theta: vec![0.0; off],
            w_off,
            b_off,
            act_off,
        }
    }

    /// Uniform fan-in initialization, `U(−√(3/fan_in), √(3/fan_in))`, zero
    /// biases. The output layer is scaled by `out_gain`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(sizes);
        let n = p.n_layers();
        for l in 0..n {
            let fan_in = sizes[l].max(1) as f64;
            let a = (3.0 / fan_in).sqrt() * if l + 1 == n { out_gain } else { 1.0 };
            let (w, len) = (p.w_off[l], sizes[l] * sizes[l + 1]);
            for v in &mut p.theta[w..w + len] {
                *v = rng.random_range(-1.0..=1.0) * a;
            }
        }
        p
    }

    pub fn from_layers(layers: &[(DMatrix<f64>, DVector<f64>)]) -> Result<Self, String> {
        let Some(first) = layers.first() else {
            return Err("no layers".into());
        };
        let mut sizes = vec![first.0.ncols()];
        for (k, (w, b)) in layers.iter().enumerate() {
            if w.ncols() != *sizes.last().unwrap() || b.len() != w.nrows() {
                return Err(format!("layer {k}: weight {}x{}, bias {}", w.nrows(), w.ncols(), b.len()));
            }
            sizes.push(w.nrows());
        }
        let mut p = Self::zeros(&sizes);
        for (l, (w, b)) in layers.iter().enumerate() {
            p.set_layer(l, w, b);
        }
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn weight(&self, l: usize) -> DMatrix<f64> {
        let (o, i) = (self.sizes[l + 1], self.sizes[l]);
        DMatrix::from_row_slice(o, i, &self.theta[self.w_off[l]..self.w_off[l] + o * i])
    }

    pub fn bias(&self, l: usize) -> DVector<f64> {
        let o = self.sizes[l + 1];
        DVector::from_column_slice(&self.theta[self.b_off[l]..self.b_off[l] + o])
    }

    pub fn set_layer(&mut self, l: usize, w: &DMatrix<f64>, b: &DVector<f64>) {
        let (o, i) = (self.sizes[l + 1], self.sizes[l]);
        assert_eq!((w.nrows(), w.ncols(), b.len()), (o, i, o), "layer {l} shape");
        for r in 0..o {
            for c in 0..i {
                self.theta[self.w_off[l] + r * i + c] = w[(r, c)];
            }
        }
        self.theta[self.b_off[l]..self.b_off[l] + o].copy_from_slice(b.as_slice());
    }

    /// True where `θ[idx]` is a weight (as opposed to a bias).
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for l in 0..self.n_layers() {
            let w = self.w_off[l];
            m[w..self.b_off[l]].iter_mut().for_each(|v| *v = true);
        }
        m
    }

    pub fn weight_norm_sq(&self) -> f64 {
        (0..self.n_layers())
            .map(|l| self.theta[self.w_off[l]..self.b_off[l]].iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Adds `2·l2·W` to the weight entries of `grad`.
    pub(crate) fn add_l2_grad(&self, l2: f64, grad: &mut [f64]) {
        for l in 0..self.n_layers() {
            for k in self.w_off[l]..self.b_off[l] {
                grad[k] += 2.0 * l2 * self.theta[k];
            }
        }
    }

    /// Length of the activation buffer used by `forward`/`backward`.
    pub(crate) fn act_len(&self) -> usize {
        *self.act_off.last().unwrap()
    }

    pub(crate) fn max_width(&self) -> usize {
        *self.sizes.iter().max().unwrap()
    }

    /// `acts[..input]` must hold the input; every layer output is written
    /// behind it. Returns the output slice.
    pub(crate) fn forward<'a>(&self, acts: &'a mut [f64]) -> &'a [f64] {
        let n = self.n_layers();
        for l in 0..n {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let (lo, hi) = acts.split_at_mut(self.act_off[l + 1]);
            let x = &lo[self.act_off[l]..];
            let y = &mut hi[..no];
            let w = &self.theta[self.w_off[l]..self.w_off[l] + ni * no];
            let b = &self.theta[self.b_off[l]..self.b_off[l] + no];
            for o in 0..no {
                let s = b[o] + dot(&w[o * ni..(o + 1) * ni], x);
                y[o] = if l + 1 < n { s.tanh() } else { s };
            }
        }
        &acts[self.act_off[n]..self.act_off[n + 1]]
    }

    /// Accumulates `∂/∂θ` of `gout·output` into `grad` and writes the input
    /// gradient into `gin`. `acts` must come from `forward`.
    pub(crate) fn backward(
        &self,
        acts: &[f64],
        gout: &[f64],
        grad: &mut [f64],
        gin: &mut [f64],
        delta: &mut Vec<f64>,
        prev: &mut Vec<f64>,
    ) {
        let n = self.n_layers();
        delta.clear();
        delta.extend_from_slice(gout);
        for l in (0..n).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[self.act_off[l]..self.act_off[l] + ni];
            let (w0, b0) = (self.w_off[l], self.b_off[l]);
            prev.clear();
            prev.resize(ni, 0.0);
            for o in 0..no {
                let d = delta[o];
                grad[b0 + o] += d;
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[w0 + o * ni..w0 + (o + 1) * ni];
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += d * xi;
                }
                let wr = &self.theta[w0 + o * ni..w0 + (o + 1) * ni];
                for (p, wi) in prev.iter_mut().zip(wr) {
                    *p += d * wi;
                }
            }
            if l > 0 {
                for (p, xi) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - xi * xi;
                }
                std::mem::swap(delta, prev);
            } else {
                gin.copy_from_slice(prev);
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut t = (s[0] + s[1]) + (s[2] + s[3]);
    for (x, y) in ra.iter().zip(rb) {
        t += x * y;
    }
    t
}
