use chrono::{TimeZone, Utc};
use nalgebra::{DMatrix, DVector};
use poolid::data::{make_anchor_windows, AnchorWindow, ChannelSpec, Role, SignalFrame};
use poolid::eval::{criterion, horizon_rmse_sections, EvalSettings};
use poolid::linid::{estimate_subspace, StateObserver, StateSpaceModel, SubspaceOptions};
use poolid::nlarx::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn frame(u: &DMatrix<f64>, y: &DMatrix<f64>) -> SignalFrame {
    let mut ch: Vec<_> = (0..u.ncols()).map(|j| ChannelSpec::new(&format!("u{j}"), "", Role::Input)).collect();
    ch.extend((0..y.ncols()).map(|j| ChannelSpec::new(&format!("y{j}"), "", Role::Output)));
    let mut v = DMatrix::zeros(u.nrows(), u.ncols() + y.ncols());
    v.columns_mut(0, u.ncols()).copy_from(u);
    v.columns_mut(u.ncols(), y.ncols()).copy_from(y);
    SignalFrame::new(Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), 600, ch, v).unwrap()
}

fn random_windows(n_u: usize, n_y: usize, past: usize, p: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<AnchorWindow> {
    let mut g = |r, c| DMatrix::from_fn(r, c, |_, _| normal(rng));
    (0..count)
        .map(|k| AnchorWindow {
            anchor_index: k,
            past_inputs: g(past, n_u),
            past_outputs: g(past, n_y),
            future_inputs: g(p, n_u),
            future_outputs: g(p, n_y),
        })
        .collect()
}

fn perturbed(mut m: NlarxModel, sd: f64, rng: &mut ChaCha8Rng) -> NlarxModel {
    for v in m.params.theta_mut() {
        *v += sd * normal(rng);
    }
    m
}

/// Central differences at step 1e-5 against the BPTT gradient, over every
/// hidden-layer depth and width and every loss horizon.
#[test]
fn bptt_matches_finite_differences() {
    let started = std::time::Instant::now();
    let widths = [8, 16, 32, 64];
    let horizons = [3, 5, 8, 15];
    let l2s = [0.0, 1e-4, 1e-3];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut configs, mut coords, mut worst) = (0, 0, 0.0f64);
    for depth in 1..=3 {
        for (wi, &w) in widths.iter().enumerate() {
            for p in [horizons[wi], horizons[(wi + depth) % 4]] {
                let cfg = NlarxConfig {
                    n_a: rng.random_range(0..=3),
                    n_b: rng.random_range(0..=3),
                    hidden_layers: (0..depth).map(|d| if d == 0 { w } else { widths[rng.random_range(0..4)] }).collect(),
                    l2: l2s[rng.random_range(0..3)],
                    loss_horizon: p,
                    residual: rng.random(),
                    seed: rng.random(),
                    ..NlarxConfig::default()
                };
                let m = perturbed(NlarxModel::new(cfg.clone(), 3, 2).unwrap(), 0.05, &mut rng);
                let batch = random_windows(3, 2, cfg.required_past() + 1, p, 3, &mut rng);
                let g = grad_bptt(&m, &batch).unwrap();
                for _ in 0..10 {
                    let k = rng.random_range(0..m.params.len());
                    let h = 1e-5;
                    let mut plus = m.clone();
                    plus.params.theta_mut()[k] += h;
                    let mut minus = m.clone();
                    minus.params.theta_mut()[k] -= h;
                    let fd = (loss(&plus, &batch).unwrap() - loss(&minus, &batch).unwrap()) / (2.0 * h);
                    let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(rel);
                    assert!(rel <= 1e-5, "config {cfg:?} coord {k}: bptt {} vs fd {fd} (rel {rel:e})", g[k]);
                    coords += 1;
                }
                configs += 1;
            }
        }
    }
    assert!(configs >= 20 && coords >= 200, "{configs} configs, {coords} coordinates");
    assert!(started.elapsed().as_secs() < 60);
    eprintln!("finite differences: {configs} configs, {coords} coordinates, worst rel err {worst:e}");
}

/// Plain one-step backprop written against nalgebra matrices.
fn one_step_grad(m: &NlarxModel, w: &AnchorWindow) -> Vec<f64> {
    let p = &m.params;
    let c = &m.config;
    let n_y = m.n_y();
    let pr = w.past_outputs.nrows();
    let pu = w.past_inputs.nrows();
    let mut x = Vec::new();
    for i in 0..=c.n_a {
        x.extend(w.past_outputs.row(pr - 1 - i).iter());
    }
    for i in 0..=c.n_b {
        x.extend(w.past_inputs.row(pu - 1 - i).iter());
    }
    let mut acts = vec![DVector::from_vec(x)];
    let nl = p.n_layers();
    for l in 0..nl {
        let z = p.weight(l) * acts.last().unwrap() + p.bias(l);
        acts.push(if l + 1 < nl { z.map(f64::tanh) } else { z });
    }
    let mut yhat = acts[nl].clone();
    if c.residual {
        yhat += w.past_outputs.row(pr - 1).transpose();
    }
    let e = yhat - w.future_outputs.row(0).transpose();
    let mut delta = e * (2.0 / n_y as f64);
    let mut grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); nl];
    for l in (0..nl).rev() {
        grads[l] = (&delta * acts[l].transpose(), delta.clone());
        if l > 0 {
            let back = p.weight(l).transpose() * &delta;
            delta = back.component_mul(&acts[l].map(|a| 1.0 - a * a));
        }
    }
    let mut out = MlpParams::zeros(p.sizes());
    for (l, (gw, gb)) in grads.iter().enumerate() {
        out.set_layer(l, gw, gb);
    }
    out.theta().to_vec()
}

#[test]
fn horizon_one_gradient_is_plain_backprop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for hidden in [vec![8], vec![16, 8], vec![32, 16, 8]] {
        for residual in [false, true] {
            let cfg = NlarxConfig {
                n_a: 2,
                n_b: 1,
                hidden_layers: hidden.clone(),
                l2: 0.0,
                loss_horizon: 1,
                residual,
                ..NlarxConfig::default()
            };
            let m = perturbed(NlarxModel::new(cfg, 3, 2).unwrap(), 0.1, &mut rng);
            let w = random_windows(3, 2, 4, 1, 1, &mut rng);
            let g = grad_bptt(&m, &w).unwrap();
            let r = one_step_grad(&m, &w[0]);
            for (a, b) in g.iter().zip(&r) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
            let one = m.rollout(&w[0]).unwrap();
            let pr = w[0].past_outputs.nrows();
            let ly = DMatrix::from_fn(3, 2, |i, j| w[0].past_outputs[(pr - 1 - i, j)]);
            let lu = DMatrix::from_fn(2, 3, |i, j| w[0].past_inputs[(3 - i, j)]);
            let step = m.predict_one_step(&ly, &lu).unwrap();
            assert!((one.row(0).transpose() - step).amax() <= 1e-15);
        }
    }
}

#[test]
fn forward_matches_hand_rolled_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = NlarxConfig {
        n_a: 1,
        n_b: 2,
        hidden_layers: vec![16, 8],
        residual: false,
        ..NlarxConfig::default()
    };
    let m = perturbed(NlarxModel::new(cfg, 2, 2).unwrap(), 0.2, &mut rng);
    let ly = DMatrix::from_fn(2, 2, |_, _| normal(&mut rng));
    let lu = DMatrix::from_fn(3, 2, |_, _| normal(&mut rng));
    let x: Vec<f64> = ly.row_iter().chain(lu.row_iter()).flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
    let mut h = x;
    for l in 0..3 {
        let w = m.params.weight(l);
        let b = m.params.bias(l);
        h = (0..w.nrows())
            .map(|o| {
                let s: f64 = b[o] + (0..w.ncols()).map(|i| w[(o, i)] * h[i]).sum::<f64>();
                if l < 2 { s.tanh() } else { s }
            })
            .collect();
    }
    let y = m.predict_one_step(&ly, &lu).unwrap();
    for j in 0..2 {
        assert!((y[j] - h[j]).abs() <= 1e-13);
    }
}

#[test]
fn zero_and_affine_networks() {
    let cfg = NlarxConfig {
        n_a: 1,
        n_b: 0,
        hidden_layers: vec![8],
        residual: false,
        l2: 1e-3,
        ..NlarxConfig::default()
    };
    let sizes = cfg.layer_sizes(2, 2);
    let zero = NlarxModel::from_params(cfg.clone(), 2, 2, MlpParams::zeros(&sizes)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = random_windows(2, 2, 3, 6, 4, &mut rng);
    assert_eq!(zero.predict_one_step(&DMatrix::repeat(2, 2, 3.0), &DMatrix::repeat(1, 2, -1.0)).unwrap(), DVector::zeros(2));
    assert_eq!(zero.rollout(&w[0]).unwrap(), DMatrix::zeros(6, 2));
    let data: f64 = w.iter().map(|x| x.future_outputs.norm_squared() / 12.0).sum::<f64>() / 4.0;
    assert!((loss(&zero, &w).unwrap() - data).abs() <= 1e-14);

    let affine_cfg = NlarxConfig {
        hidden_layers: vec![],
        ..cfg
    };
    let wm = DMatrix::from_row_slice(2, 6, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, -1.0, 0.5, 0.0, 2.0, 1.0, -3.0]);
    let b = DVector::from_vec(vec![0.25, -0.5]);
    let params = MlpParams::from_layers(&[(wm.clone(), b.clone())]).unwrap();
    let affine = NlarxModel::from_params(affine_cfg, 2, 2, params).unwrap();
    let ly = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
    let lu = DMatrix::from_row_slice(1, 2, &[0.5, 0.6]);
    let x = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    assert!((affine.predict_one_step(&ly, &lu).unwrap() - (wm * x + b)).amax() <= 1e-15);
}

/// Linear plant with poles 0.9, 0.6, −0.3 and its exact ARX form.
struct LinearPlant {
    sys: StateSpaceModel,
    /// Characteristic polynomial `z³ + a1 z² + a2 z + a3`.
    a: [f64; 3],
}

fn linear_plant(seed: u64) -> LinearPlant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poles = [0.9, 0.6, -0.3];
    let t = DMatrix::from_fn(3, 3, |_, _| normal(&mut rng)) + DMatrix::identity(3, 3) * 2.0;
    let a = &t * DMatrix::from_diagonal(&DVector::from_row_slice(&poles)) * t.clone().try_inverse().unwrap();
    let b = DMatrix::from_fn(3, 2, |_, _| normal(&mut rng) * 0.5);
    let c = DMatrix::from_fn(2, 3, |_, _| normal(&mut rng));
    let (p1, p2, p3) = (poles[0], poles[1], poles[2]);
    LinearPlant {
        sys: StateSpaceModel::new(a, b, c, None).unwrap(),
        a: [-(p1 + p2 + p3), p1 * p2 + p1 * p3 + p2 * p3, -(p1 * p2 * p3)],
    }
}

/// Single affine layer reproducing the plant exactly:
/// `y[k+1] = −Σ a_i y[k+1−i] + Σ b_i u[k+1−i]`,
/// `b_i = Σ_{j<i} a_j C A^{i−1−j} B`, `a_0 = 1`.
fn arx_embedding(p: &LinearPlant, residual: bool) -> NlarxModel {
    let s = &p.sys;
    let (n_y, n_u) = (s.n_y(), s.n_u());
    let coef = [1.0, p.a[0], p.a[1], p.a[2]];
    let cfg = NlarxConfig {
        n_a: 2,
        n_b: 2,
        hidden_layers: vec![],
        l2: 0.0,
        residual,
        ..NlarxConfig::default()
    };
    let mut w = DMatrix::zeros(n_y, cfg.input_width(n_u, n_y));
    for i in 0..3 {
        for c in 0..n_y {
            w[(c, i * n_y + c)] = -coef[i + 1] - if residual && i == 0 { 1.0 } else { 0.0 };
        }
        let mut bi = DMatrix::zeros(n_y, n_u);
        for j in 0..=i {
            bi += coef[j] * &s.c * s.a.pow((i - j) as u32) * &s.b;
        }
        w.view_mut((0, 3 * n_y + i * n_u), (n_y, n_u)).copy_from(&bi);
    }
    let params = MlpParams::from_layers(&[(w, DVector::zeros(n_y))]).unwrap();
    NlarxModel::from_params(cfg, n_u, n_y, params).unwrap()
}

fn plant_data(p: &LinearPlant, n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DMatrix::from_fn(n, 2, |_, _| normal(&mut rng));
    let y = p.sys.simulate(&DVector::from_fn(3, |_, _| normal(&mut rng)), &u);
    (u, y)
}

#[test]
fn arx_embedding_reproduces_state_space_forecast() {
    let plant = linear_plant(3);
    let (u, y) = plant_data(&plant, 200, 4);
    let obs = StateObserver::new(&plant.sys, 20).unwrap();
    let f = frame(&u, &y);
    for residual in [false, true] {
        let m = arx_embedding(&plant, residual);
        for w in make_anchor_windows(&f, 20, 48, 37) {
            let lss = obs.forecast(&w.past_inputs, &w.past_outputs, &w.future_inputs).unwrap();
            let arx = m.rollout(&w).unwrap();
            let scale = 1.0 + lss.amax();
            assert!((&arx - &lss).amax() <= 1e-10 * scale, "residual {residual}: {}", (&arx - &lss).amax());
            assert!((&arx - &w.future_outputs).amax() <= 1e-10 * scale);
        }
    }
}

#[test]
fn loss_closed_forms_and_stationary_point() {
    let plant = linear_plant(5);
    let (u, y) = plant_data(&plant, 120, 6);
    let m = arx_embedding(&plant, false);
    let windows = make_anchor_windows(&frame(&u, &y), 3, 8, 5);
    assert!(loss(&m, &windows).unwrap() <= 1e-20);
    let g = grad_bptt(&m, &windows).unwrap();
    assert!(g.iter().all(|v| v.abs() <= 1e-10), "{:e}", g.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let delta = 0.37;
    let shifted: Vec<_> = windows
        .iter()
        .map(|w| AnchorWindow {
            future_outputs: w.future_outputs.add_scalar(-delta),
            ..w.clone()
        })
        .collect();
    assert!((loss(&m, &shifted).unwrap() - delta * delta).abs() <= 1e-12);
}

#[test]
fn serialization_round_trips_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = perturbed(
        NlarxModel::new(
            NlarxConfig {
                hidden_layers: vec![16, 8],
                ..NlarxConfig::default()
            },
            10,
            2,
        )
        .unwrap(),
        0.3,
        &mut rng,
    );
    m.stats = Some(poolid::data::NormalizationStats {
        channels: vec!["a".into(), "b".into()],
        mean: vec![0.1, 1.0 / 3.0],
        scale: vec![2.5, 7.0 / 9.0],
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = NlarxModel::load(&path).unwrap();
    assert_eq!(back, m);
    assert!(NlarxModel::from_json("{\"kind\":\"linear_state_space\"}").is_err());
    assert!(matches!(
        NlarxModel::new(NlarxConfig { loss_horizon: 0, ..NlarxConfig::default() }, 1, 1),
        Err(NlarxError::Config(_))
    ));
}

#[test]
fn rollout_rejects_short_windows() {
    let m = NlarxModel::new(NlarxConfig::default(), 2, 1).unwrap();
    let w = AnchorWindow {
        anchor_index: 0,
        past_inputs: DMatrix::zeros(4, 2),
        past_outputs: DMatrix::zeros(4, 1),
        future_inputs: DMatrix::zeros(3, 2),
        future_outputs: DMatrix::zeros(3, 1),
    };
    assert!(matches!(m.rollout(&w), Err(NlarxError::Shape(_))));
    assert!(matches!(loss(&m, &[]), Err(NlarxError::NoData(_))));
}

fn toy_frames(n: usize, seed: u64) -> SignalFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DMatrix::zeros(n, 1);
    let mut y = DMatrix::zeros(n, 1);
    let mut level = 0.0;
    for k in 0..n {
        if k % 7 == 0 {
            level = normal(&mut rng);
        }
        u[(k, 0)] = level;
        if k > 0 {
            let prev: f64 = y[(k - 1, 0)];
            y[(k, 0)] = 0.8 * prev + 0.5 * (u[(k - 1, 0)] as f64).tanh();
        }
    }
    frame(&u, &y)
}

#[test]
fn training_converges_on_toy_set() {
    let train = toy_frames(200, 1);
    let val = toy_frames(200, 2);
    let cfg = NlarxConfig {
        n_a: 1,
        n_b: 1,
        hidden_layers: vec![8],
        loss_horizon: 5,
        learning_rate: 1e-2,
        batch_size: 16,
        epochs: 60,
        patience: 60,
        residual: false,
        l2: 0.0,
        seed: 3,
        ..NlarxConfig::default()
    };
    let (_, log) = train_sections(&cfg, &[&train], &[&val]).unwrap();
    let first = log.epochs[0].train_loss;
    let best = log.epochs.iter().map(|e| e.train_loss).fold(f64::INFINITY, f64::min);
    assert!(best * 10.0 <= first, "start {first}, best {best}");
    let (m2, log2) = train_sections(&cfg, &[&train], &[&val]).unwrap();
    assert_eq!(log, log2);
    let (m1, _) = train_sections(&cfg, &[&train], &[&val]).unwrap();
    assert_eq!(m1.params, m2.params);
}

#[test]
fn training_reports_divergence() {
    let train = toy_frames(200, 1);
    let cfg = NlarxConfig {
        n_a: 1,
        n_b: 1,
        hidden_layers: vec![8],
        loss_horizon: 5,
        learning_rate: 1e300,
        epochs: 3,
        residual: false,
        ..NlarxConfig::default()
    };
    assert!(matches!(train_sections(&cfg, &[&train], &[&train]), Err(NlarxError::Diverged { .. })));
}

/// On a noisy linear plant a trained network comes within 10 % of the
/// subspace model's validation accuracy.
#[test]
fn linear_plant_training_matches_subspace_model() {
    let plant = linear_plant(21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut make = |n: usize| {
        let mut u = DMatrix::zeros(n, 2);
        for j in 0..2 {
            let mut level = 0.0;
            for k in 0..n {
                if rng.random_range(0..5) == 0 {
                    level = normal(&mut rng);
                }
                u[(k, j)] = level;
            }
        }
        let mut y = plant.sys.simulate(&DVector::zeros(3), &u);
        y.iter_mut().for_each(|v| *v += 0.05 * normal(&mut rng));
        frame(&u, &y)
    };
    let train = make(3000);
    let val = make(1000);
    let lss = estimate_subspace(&[&train], &SubspaceOptions { n_x: 3, ..SubspaceOptions::default() }).unwrap();
    let obs = StateObserver::new(&lss, 20).unwrap();
    let settings = EvalSettings {
        stride: 4,
        ..EvalSettings::default()
    };
    let score = |f: &dyn poolid::eval::Forecaster| {
        let m = horizon_rmse_sections(f, &[("val", &val)], &settings).unwrap();
        criterion(&m, 1, 48).unwrap()
    };
    let cfg = NlarxConfig {
        n_a: 3,
        n_b: 3,
        hidden_layers: vec![16],
        loss_horizon: 15,
        learning_rate: 3e-3,
        batch_size: 32,
        epochs: 200,
        patience: 20,
        l2: 0.0,
        val_stride: 4,
        train_stride: 2,
        ..NlarxConfig::default()
    };
    let (m, log) = train_sections(&cfg, &[&train], &[&val]).unwrap();
    let (a, b) = (score(&obs), score(&m));
    eprintln!("lss {a:.4}, nlarx {b:.4}, best epoch {}", log.best_epoch);
    assert!(b <= 1.1 * a, "nlarx {b} vs lss {a}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rollout_prefix_property(seed in 0u64..1000, p in 2usize..20, cut in 1usize..20, residual: bool) {
        let cut = cut.min(p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = NlarxConfig { n_a: 2, n_b: 1, hidden_layers: vec![8, 8], residual, seed, ..NlarxConfig::default() };
        let m = perturbed(NlarxModel::new(cfg, 2, 2).unwrap(), 0.2, &mut rng);
        let w = random_windows(2, 2, 5, p, 1, &mut rng).remove(0);
        let full = m.rollout(&w).unwrap();
        let short = m.rollout_from(&w.past_inputs, &w.past_outputs, &w.future_inputs.rows(0, cut).into(), cut).unwrap();
        prop_assert_eq!(full.rows(0, cut).into_owned(), short);
    }

    #[test]
    fn batch_loss_is_mean_of_window_losses(seed in 0u64..1000, count in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = NlarxConfig { n_a: 1, n_b: 2, hidden_layers: vec![16], l2: 0.0, seed, ..NlarxConfig::default() };
        let m = perturbed(NlarxModel::new(cfg, 3, 2).unwrap(), 0.2, &mut rng);
        let batch = random_windows(3, 2, 4, 5, count, &mut rng);
        let whole = loss(&m, &batch).unwrap();
        let mean = batch.iter().map(|w| loss(&m, std::slice::from_ref(w)).unwrap()).sum::<f64>() / count as f64;
        prop_assert!((whole - mean).abs() <= 1e-12 * (1.0 + mean));
    }
}
