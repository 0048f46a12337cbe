use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use super::{Focus, LinIdError, NoiseModel, Result, StateSpaceModel, SubspaceOptions};
use crate::data::SignalFrame;

const EXCITATION_TOL: f64 = 1e-12;
const PINV_TOL: f64 = 1e-12;
const WEIGHT_TOL: f64 = 1e-10;
const STABLE_RADIUS: f64 = 0.999;

/// Subspace estimate from normalized sections. Inputs and outputs are taken
/// from the channel roles of each frame.
pub fn estimate_subspace(frames: &[&SignalFrame], opts: &SubspaceOptions) -> Result<StateSpaceModel> {
    let data: Vec<(DMatrix<f64>, DMatrix<f64>)> = frames
        .iter()
        .map(|f| (f.inputs(0, f.n_samples()), f.outputs(0, f.n_samples())))
        .collect();
    estimate_subspace_io(&data, opts)
}

/// Subspace estimate from `(inputs [N × n_u], outputs [N × n_y])` pairs, one
/// per contiguous section. Hankel columns never span two sections.
pub fn estimate_subspace_io(data: &[(DMatrix<f64>, DMatrix<f64>)], opts: &SubspaceOptions) -> Result<StateSpaceModel> {
    opts.validate()?;
    let n_x = opts.n_x;
    let s = opts.block_horizon.resolve(n_x);
    let (n_u, n_y) = match data.first() {
        Some((u, y)) => (u.ncols(), y.ncols()),
        None => return Err(LinIdError::TooShort("no sections".into())),
    };
    if n_u == 0 || n_y == 0 {
        return Err(LinIdError::Shape("need at least one input and one output".into()));
    }
    for (u, y) in data {
        if u.ncols() != n_u || y.ncols() != n_y || u.nrows() != y.nrows() {
            return Err(LinIdError::Shape("sections disagree on dimensions".into()));
        }
    }
    let used: Vec<&(DMatrix<f64>, DMatrix<f64>)> = data.iter().filter(|(u, _)| u.nrows() >= 2 * s + n_x).collect();
    if used.is_empty() {
        return Err(LinIdError::TooShort(format!("every section is shorter than {} samples", 2 * s + n_x)));
    }
    let n = n_u + n_y;
    let stacked: Vec<Vec<f64>> = used.iter().map(|(u, y)| interleave(u, y)).collect();
    let mut h = DMatrix::<f64>::zeros(2 * s * n, 2 * s * n);
    let mut columns = 0usize;
    for z in &stacked {
        accumulate_gram(z, n, 2 * s, &mut h);
        columns += z.len() / n + 1 - 2 * s;
    }
    h /= columns as f64;

    let wp: Vec<usize> = (0..s * n).collect();
    let uf: Vec<usize> = (s..2 * s).flat_map(|t| (0..n_u).map(move |c| t * n + c)).collect();
    let yf: Vec<usize> = (s..2 * s).flat_map(|t| (n_u..n).map(move |c| t * n + c)).collect();
    let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| h[(r[i], c[j])]);

    let phi_ff = sub(&uf, &uf);
    let eig = SymmetricEigen::new(phi_ff.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    if !(hi > 0.0) || lo <= EXCITATION_TOL * hi {
        return Err(LinIdError::RankDeficient(format!(
            "future input Hankel block is not persistently exciting (eigenvalues in [{lo:.3e}, {hi:.3e}])"
        )));
    }
    let ff_inv = sym_pinv(&phi_ff, PINV_TOL);
    let f_wp = sub(&uf, &wp);
    let m = sub(&yf, &wp) - sub(&yf, &uf) * &ff_inv * &f_wp;
    let w = sub(&wp, &wp) - f_wp.transpose() * &ff_inv * &f_wp;
    let weighted = &m * sym_inv_sqrt(&w, WEIGHT_TOL);
    let svd = weighted.svd(true, false);
    let u_mat = svd.u.ok_or_else(|| LinIdError::Numeric("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    if order.len() < n_x {
        return Err(LinIdError::RankDeficient("fewer singular values than n_x".into()));
    }
    let sv = |k: usize| svd.singular_values[order[k]];
    if !(sv(0) > 0.0) || sv(n_x - 1) <= PINV_TOL * sv(0) {
        return Err(LinIdError::RankDeficient(format!(
            "projection rank below n_x = {n_x} (singular values {:.3e} .. {:.3e})",
            sv(0),
            sv(n_x - 1)
        )));
    }
    let gamma = DMatrix::from_fn(s * n_y, n_x, |r, k| u_mat[(r, order[k])] * sv(k).sqrt());
    let c = gamma.rows(0, n_y).into_owned();
    let up = gamma.rows(0, (s - 1) * n_y).into_owned();
    let down = gamma.rows(n_y, (s - 1) * n_y).into_owned();
    let mut a = lstsq(&up, &down)?;
    if opts.stabilize {
        a = stabilize(&a, STABLE_RADIUS);
    }
    let radius = spectral_radius(&a);
    let chunk = match opts.focus {
        Focus::Prediction => Some(2 * s),
        Focus::Simulation => {
            if radius >= 1.0 {
                return Err(LinIdError::Unstable(radius));
            }
            None
        }
    };
    let b = estimate_b(&a, &c, &used, chunk)?;
    let k = match opts.noise_model {
        NoiseModel::None => None,
        NoiseModel::Estimate => {
            let q: Vec<usize> = wp.iter().chain(&uf).copied().collect();
            let theta = sub(&yf, &q) * sym_pinv(&sub(&q, &q), PINV_TOL);
            let l_w = theta.columns(0, wp.len()).into_owned();
            let g_pinv = gamma
                .clone()
                .pseudo_inverse(PINV_TOL)
                .map_err(|e| LinIdError::Numeric(e.to_string()))?;
            let state_map = g_pinv * l_w;
            Some(estimate_k(&a, &b, &c, &state_map, &used, &stacked, s))
        }
    };
    let mut model = StateSpaceModel::new(a, b, c, k)?;
    model.options = *opts;
    Ok(model)
}

/// Rows `[u[t] y[t]]` flattened.
fn interleave(u: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let (n_u, n_y) = (u.ncols(), y.ncols());
    let mut z = Vec::with_capacity(u.nrows() * (n_u + n_y));
    for t in 0..u.nrows() {
        z.extend(u.row(t).iter());
        z.extend(y.row(t).iter());
    }
    z
}

/// Adds `Σ_j w_j w_jᵀ` to `h`, where `w_j` stacks `z[j], …, z[j+lags-1]`.
/// Only the first block row is summed directly; the rest follows from
/// `G(p+1,q+1) = G(p,q) − z[p]z[q]ᵀ + z[p+K]z[q+K]ᵀ` with `K` columns.
fn accumulate_gram(z: &[f64], n: usize, lags: usize, h: &mut DMatrix<f64>) {
    let rows = z.len() / n;
    let ncol = rows + 1 - lags;
    let zr = |t: usize| &z[t * n..(t + 1) * n];
    let mut g = vec![vec![0.0; n * n]; lags * lags];
    for q in 0..lags {
        let blk = &mut g[q];
        for j in 0..ncol {
            let (a, b) = (zr(j), zr(j + q));
            for i in 0..n {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                let row = &mut blk[i * n..(i + 1) * n];
                for (r, bk) in row.iter_mut().zip(b) {
                    *r += ai * bk;
                }
            }
        }
    }
    for p in 1..lags {
        for q in p..lags {
            let mut blk = g[(p - 1) * lags + q - 1].clone();
            let (a0, b0) = (zr(p - 1), zr(q - 1));
            let (a1, b1) = (zr(ncol + p - 1), zr(ncol + q - 1));
            for i in 0..n {
                for k in 0..n {
                    blk[i * n + k] += a1[i] * b1[k] - a0[i] * b0[k];
                }
            }
            g[p * lags + q] = blk;
        }
    }
    for p in 0..lags {
        for q in p..lags {
            let blk = &g[p * lags + q];
            for i in 0..n {
                for k in 0..n {
                    let v = blk[i * n + k];
                    h[(p * n + i, q * n + k)] += v;
                    if q > p {
                        h[(q * n + k, p * n + i)] += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn sym_pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    sym_fn(m, rel_tol, |l| 1.0 / l)
}

fn sym_inv_sqrt(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    sym_fn(m, rel_tol, |l| 1.0 / l.sqrt())
}

/// `V f(Λ) Vᵀ` over eigenvalues above `rel_tol · λ_max`; others map to 0.
fn sym_fn(m: &DMatrix<f64>, rel_tol: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let top = e.eigenvalues.iter().copied().fold(0.0, f64::max);
    let d = e.eigenvalues.map(|l| if top > 0.0 && l > rel_tol * top { f(l) } else { 0.0 });
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .svd(true, true)
        .solve(b, PINV_TOL * a.norm())
        .map_err(|e| LinIdError::Numeric(e.to_string()))
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Moves eigenvalues with `|λ| ≥ 1` onto the circle of radius `limit`,
/// keeping eigenvectors. Falls back to uniform scaling when the eigenvector
/// basis is singular.
fn stabilize(a: &DMatrix<f64>, limit: f64) -> DMatrix<f64> {
    let lams: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    let radius = lams.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if radius < 1.0 {
        return a.clone();
    }
    let n = a.nrows();
    let ac = a.map(|v| Complex::new(v, 0.0));
    let mut v = DMatrix::<Complex<f64>>::zeros(n, n);
    for (i, lam) in lams.iter().enumerate() {
        let eps = 1e-9 * (1.0 + lam.norm());
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * (lam + Complex::new(eps, eps));
        let lu = shifted.lu();
        let mut x = DVector::from_fn(n, |k, _| Complex::new(1.0 + k as f64 * 0.37, 0.1 * k as f64));
        for _ in 0..4 {
            match lu.solve(&x) {
                Some(next) => x = next.unscale(next.norm()),
                None => break,
            }
        }
        v.set_column(i, &x);
    }
    let scaled = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        lams.iter().map(|l| if l.norm() >= 1.0 { l * (limit / l.norm()) } else { *l }),
    ));
    match v.clone().try_inverse() {
        Some(vi) => {
            let out = (&v * scaled * vi).map(|c| c.re);
            if spectral_radius(&out) < 1.0 {
                out
            } else {
                a * (limit / radius)
            }
        }
        None => a * (limit / radius),
    }
}

/// Output-error least squares for `B` with `A`, `C` fixed and `D = 0`. Data
/// is cut into chunks of `chunk` samples (whole sections when `None`), each
/// with its own free initial state, which is eliminated from the normal
/// equations.
fn estimate_b(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    data: &[&(DMatrix<f64>, DMatrix<f64>)],
    chunk: Option<usize>,
) -> Result<DMatrix<f64>> {
    let (n_x, n_y) = (a.nrows(), c.nrows());
    let n_u = data[0].0.ncols();
    let np = n_x * n_u;
    let mut gram = DMatrix::<f64>::zeros(np, np);
    let mut rhs = DVector::<f64>::zeros(np);
    for (u, y) in data {
        let n = u.nrows();
        let len_max = chunk.unwrap_or(n).max(1);
        let mut start = 0;
        while start < n {
            let len = len_max.min(n - start);
            let first = start;
            start += len;
            if len * n_y <= n_x {
                continue;
            }
            let rows = len * n_y;
            let mut psi = DMatrix::<f64>::zeros(rows, np);
            let mut phi = DMatrix::<f64>::zeros(rows, n_x);
            let mut yv = DVector::<f64>::zeros(rows);
            let mut xs = vec![DMatrix::<f64>::zeros(n_x, n_x); n_u];
            let mut apow = DMatrix::<f64>::identity(n_x, n_x);
            for t in 0..len {
                let ca = c * &apow;
                for r in 0..n_y {
                    let row = t * n_y + r;
                    yv[row] = y[(first + t, r)];
                    for i in 0..n_x {
                        phi[(row, i)] = ca[(r, i)];
                    }
                }
                for (j, xj) in xs.iter_mut().enumerate() {
                    let cx = c * &*xj;
                    for r in 0..n_y {
                        for i in 0..n_x {
                            psi[(t * n_y + r, i + n_x * j)] = cx[(r, i)];
                        }
                    }
                    let uj = u[(first + t, j)];
                    let mut next = a * &*xj;
                    for d in 0..n_x {
                        next[(d, d)] += uj;
                    }
                    *xj = next;
                }
                apow = a * apow;
            }
            let pf = psi.transpose() * &phi;
            let ffi = sym_pinv(&(phi.transpose() * &phi), PINV_TOL);
            gram += psi.transpose() * &psi - &pf * &ffi * pf.transpose();
            rhs += psi.transpose() * &yv - &pf * &ffi * (phi.transpose() * &yv);
        }
    }
    if !(gram.norm() > 0.0) {
        return Err(LinIdError::RankDeficient("no input response to fit B".into()));
    }
    let b = sym_pinv(&gram, PINV_TOL) * rhs;
    Ok(DMatrix::from_fn(n_x, n_u, |i, j| b[i + n_x * j]))
}

/// Innovation gain by least squares on one-step residuals of the state
/// sequence `x̂(j+s) = S w_p(j)` recovered from past data.
fn estimate_k(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    state_map: &DMatrix<f64>,
    data: &[&(DMatrix<f64>, DMatrix<f64>)],
    stacked: &[Vec<f64>],
    s: usize,
) -> DMatrix<f64> {
    let (n_x, n_y) = (a.nrows(), c.nrows());
    let n = b.ncols() + n_y;
    let mut re = DMatrix::<f64>::zeros(n_x, n_y);
    let mut ee = DMatrix::<f64>::zeros(n_y, n_y);
    for ((u, y), z) in data.iter().zip(stacked) {
        let ncol = u.nrows() + 1 - 2 * s;
        let states: Vec<DVector<f64>> = (0..ncol)
            .map(|j| state_map * DVector::from_column_slice(&z[j * n..(j + s) * n]))
            .collect();
        for j in 0..ncol - 1 {
            let tau = j + s;
            let e = y.row(tau).transpose() - c * &states[j];
            let r = &states[j + 1] - a * &states[j] - b * u.row(tau).transpose();
            re += &r * e.transpose();
            ee += &e * e.transpose();
        }
    }
    re * sym_pinv(&ee, PINV_TOL)
}

/// `C Aⁱ B` for `i = 0..count`.
pub fn markov_parameters(m: &StateSpaceModel, count: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut ab = m.b.clone();
    for _ in 0..count {
        out.push(&m.c * &ab);
        ab = &m.a * ab;
    }
    out
}

/// `‖M̂ − M‖_F / ‖M‖_F` over the stacked first `count` Markov parameters.
pub fn markov_relative_error(estimate: &StateSpaceModel, truth: &StateSpaceModel, count: usize) -> f64 {
    let (e, t) = (markov_parameters(estimate, count), markov_parameters(truth, count));
    let num: f64 = e.iter().zip(&t).map(|(a, b)| (a - b).norm_squared()).sum();
    let den: f64 = t.iter().map(|m| m.norm_squared()).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_recurrence_matches_direct_sum() {
        let n = 3;
        let rows = 40;
        let lags = 5;
        let z: Vec<f64> = (0..rows * n).map(|i| ((i * 7919) % 113) as f64 / 17.0 - 3.0).collect();
        let mut h = DMatrix::zeros(lags * n, lags * n);
        accumulate_gram(&z, n, lags, &mut h);
        let mut direct = DMatrix::<f64>::zeros(lags * n, lags * n);
        for j in 0..rows + 1 - lags {
            let w = DVector::from_column_slice(&z[j * n..(j + lags) * n]);
            direct += &w * w.transpose();
        }
        assert!((h - direct).amax() < 1e-10);
    }

    #[test]
    fn stabilize_moves_only_unstable_modes() {
        let a = DMatrix::from_row_slice(3, 3, &[1.2, 0.0, 0.0, 0.0, 0.5, 0.3, 0.0, -0.3, 0.5]);
        let s = stabilize(&a, 0.999);
        let mut mags: Vec<f64> = s.complex_eigenvalues().iter().map(|l| l.norm()).collect();
        mags.sort_by(f64::total_cmp);
        let inner = (0.5f64 * 0.5 + 0.3 * 0.3).sqrt();
        assert!((mags[0] - inner).abs() < 1e-9 && (mags[1] - inner).abs() < 1e-9);
        assert!((mags[2] - 0.999).abs() < 1e-9);
    }
}
