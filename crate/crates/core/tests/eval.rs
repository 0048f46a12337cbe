use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use nalgebra::DMatrix;
use poolid::data::{ChannelSpec, DatasetSplit, Role, Section, SignalFrame};
use poolid::eval::*;
use proptest::prelude::*;

/// Predicts the future inputs plus a fixed offset per depth and channel. With
/// frames whose inputs copy the outputs this gives full control of errors.
struct Echo {
    offset: DMatrix<f64>,
}

impl Forecaster for Echo {
    fn required_past(&self) -> usize {
        1
    }

    fn forecast(&self, _: &DMatrix<f64>, _: &DMatrix<f64>, fi: &DMatrix<f64>) -> Result<DMatrix<f64>, String> {
        Ok(fi + self.offset.rows(0, fi.nrows()))
    }
}

fn echo_frame(y: &DMatrix<f64>) -> SignalFrame {
    let n_y = y.ncols();
    let mut ch: Vec<_> = (0..n_y).map(|j| ChannelSpec::new(&format!("u{j}"), "", Role::Input)).collect();
    ch.extend((0..n_y).map(|j| ChannelSpec::new(&format!("y{j}"), "", Role::Output)));
    let mut v = DMatrix::zeros(y.nrows(), 2 * n_y);
    v.columns_mut(0, n_y).copy_from(y);
    v.columns_mut(n_y, n_y).copy_from(y);
    SignalFrame::new(Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), 600, ch, v).unwrap()
}

/// Perturbs the inputs (the forecasts of `Echo`) at given rows.
fn with_input_error(f: &SignalFrame, errs: &[(usize, usize, f64)]) -> SignalFrame {
    let mut g = f.clone();
    for &(r, c, e) in errs {
        g.values[(r, c)] += e;
    }
    g
}

#[test]
fn three_anchor_fixture() {
    let y = DMatrix::from_fn(5, 1, |r, _| r as f64);
    // Past 1, horizon 2, anchors 0, 1, 2: depth-1 errors 1, 2, 3.
    let f = with_input_error(&echo_frame(&y), &[(1, 0, 1.0), (2, 0, 2.0), (3, 0, 3.0)]);
    let settings = EvalSettings { horizon: 2, past_len: 1, stride: 1 };
    let m = horizon_rmse(&Echo { offset: DMatrix::zeros(2, 1) }, &f, &settings).unwrap();
    assert_eq!(m.anchors, 3);
    assert!((m.aggregate[0] - (14.0f64 / 3.0).sqrt()).abs() <= 1e-12);
    // Depth-2 errors are those of rows 2, 3, 4: 2, 3, 0.
    assert!((m.aggregate[1] - (13.0f64 / 3.0).sqrt()).abs() <= 1e-12);

    let clean = echo_frame(&y);
    let m2 = horizon_rmse(&Echo { offset: DMatrix::from_row_slice(2, 1, &[0.0, 2.0]) }, &clean, &settings).unwrap();
    assert_eq!(m2.aggregate, vec![0.0, 2.0]);
}

#[test]
fn constant_offset_on_two_channels() {
    let y = DMatrix::from_fn(100, 2, |r, c| (r as f64 * 0.1 + c as f64).sin());
    let d = 0.3;
    let m = horizon_rmse(&Echo { offset: DMatrix::repeat(48, 2, d) }, &echo_frame(&y), &EvalSettings::default()).unwrap();
    assert_eq!(m.anchors, 100 - 20 - 48 + 1);
    for v in &m.aggregate {
        assert!((v - d * 2f64.sqrt()).abs() <= 1e-12);
    }
    let (full, short, long) = standard_criteria(&m).unwrap();
    for v in [full, short, long] {
        assert!((v - d * 2f64.sqrt()).abs() <= 1e-12);
    }
    let phys = m.per_channel_physical(&[2.0, 0.5]);
    assert!((phys[(0, 0)] - 0.6).abs() <= 1e-12 && (phys[(0, 1)] - 0.15).abs() <= 1e-12);
}

#[test]
fn too_short_sections_are_named() {
    let y = DMatrix::zeros(30, 1);
    let f = echo_frame(&y);
    let e = horizon_rmse_sections(&Echo { offset: DMatrix::zeros(48, 1) }, &[("tiny", &f)], &EvalSettings::default());
    assert!(matches!(e, Err(EvalError::TooShort(l)) if l == "tiny"));
}

fn split_of(y: &DMatrix<f64>) -> DatasetSplit {
    let f = echo_frame(y);
    let mut s = DatasetSplit::default();
    s.test.push(Section::new("test_start", f.slice_rows(0, 100)));
    s.test.push(Section::new("test_end_1", f.slice_rows(100, 100)));
    for k in 1..=4 {
        s.scenario.push(Section::new(format!("scenario{k}"), f.slice_rows(200 + 80 * (k - 1), 80)));
    }
    s
}

#[test]
fn scenario_eval_and_export() {
    let y = DMatrix::from_fn(600, 2, |r, c| (r as f64 * 0.05 + c as f64).cos());
    let split = split_of(&y);
    let offset = DMatrix::from_fn(48, 2, |d, _| 0.01 * (d + 1) as f64);
    let model = Echo { offset };
    let (report, curves) = scenario_eval(&model, &split, &EvalSettings::default()).unwrap();
    assert!(report.short < report.full && report.full < report.long);
    assert!(ordering_warnings("echo", &report).is_empty());
    assert_eq!(report.scenarios.len(), 4);
    assert!((report.scenario("scenario3").unwrap() - report.full).abs() <= 1e-12);
    let dir = tempfile::tempdir().unwrap();
    let mut reports = BTreeMap::new();
    reports.insert(
        "echo".to_string(),
        ModelReport {
            criteria: report.clone(),
            curves: Some(curves),
            output_names: vec!["y0".into(), "y1".into()],
        },
    );
    export_report(&reports, dir.path()).unwrap();
    let table = std::fs::read_to_string(dir.path().join("criteria.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "model,full,short,long,scenario1,scenario2,scenario3,scenario4");
    assert!(lines.next().unwrap().starts_with("echo,"));
    let curves = std::fs::read_to_string(dir.path().join("curves_echo.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 48 * 3);
    assert!(curves.lines().any(|l| l.starts_with("48,y1,")));

    let mut missing = split.clone();
    missing.scenario.clear();
    assert!(matches!(scenario_eval(&model, &missing, &EvalSettings::default()), Err(EvalError::MissingSections(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn aggregate_squares_sum_channel_squares(seed in 0u64..500, scale in 0.1f64..10.0) {
        let y = DMatrix::from_fn(90, 3, |r, c| ((r * (c + 1)) as f64 * 0.01 + seed as f64).sin());
        let off = DMatrix::from_fn(48, 3, |d, c| ((d * 7 + c * 3 + seed as usize) % 11) as f64 * 0.05 - 0.2);
        let f = echo_frame(&y);
        let m = horizon_rmse(&Echo { offset: off.clone() }, &f, &EvalSettings::default()).unwrap();
        for d in 0..48 {
            let s: f64 = m.per_channel.row(d).iter().map(|v| v * v).sum();
            prop_assert!((m.aggregate[d].powi(2) - s).abs() <= 1e-12 * (1.0 + s));
        }
        // Scaling every error by `scale` scales every RMSE by it.
        let ms = horizon_rmse(&Echo { offset: off * scale }, &f, &EvalSettings::default()).unwrap();
        for d in 0..48 {
            prop_assert!((ms.aggregate[d] - scale * m.aggregate[d]).abs() <= 1e-12 * (1.0 + ms.aggregate[d]));
        }
    }

    #[test]
    fn shorter_horizon_is_a_prefix(seed in 0u64..500, h in 1usize..48) {
        let y = DMatrix::from_fn(150, 2, |r, c| ((r + c) as f64 * 0.3 + seed as f64).sin());
        let off = DMatrix::from_fn(48, 2, |d, c| ((d + c + seed as usize) % 5) as f64 * 0.1);
        let f = echo_frame(&y);
        let model = Echo { offset: off };
        let full = EvalSettings::default();
        let anchors = poolid::data::anchor_indices(150, 20, 48, 1);
        let a = accumulate_anchors(&model, &f, &anchors, &full).unwrap().metrics();
        let b = accumulate_anchors(&model, &f, &anchors, &EvalSettings { horizon: h, ..full }).unwrap().metrics();
        prop_assert_eq!(&a.aggregate[..h], &b.aggregate[..]);
    }
}
