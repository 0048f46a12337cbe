use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataError, Result, SignalFrame};

/// Fault-cleaning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanOptions {
    /// Longest run of missing samples that is interpolated.
    pub max_gap: usize,
    /// Spike threshold in robust standard deviations.
    pub spike_sigma: f64,
    /// Rolling-median window length (odd).
    pub window: usize,
    /// Longer outlier runs are treated as genuine events and kept.
    pub max_spike_run: usize,
}

impl Default for CleanOptions {
    fn default() -> Self {
        Self {
            max_gap: 5,
            spike_sigma: 6.0,
            window: 31,
            max_spike_run: 3,
        }
    }
}

const MAD_TO_SIGMA: f64 = 1.4826;
const MAX_SPIKE_PASSES: usize = 50;

/// Interpolates short missing runs and replaces isolated spikes by the
/// rolling median.
///
/// Missing runs longer than `max_gap` are not repaired: the call fails with
/// [`DataError::LongGap`] listing every long gap so the caller can split.
pub fn clean_faults(frame: &SignalFrame, max_gap: usize, spike_sigma: f64) -> Result<SignalFrame> {
    clean_faults_with(
        frame,
        &CleanOptions {
            max_gap,
            spike_sigma,
            ..CleanOptions::default()
        },
    )
}

pub fn clean_faults_with(frame: &SignalFrame, opts: &CleanOptions) -> Result<SignalFrame> {
    let gaps = long_gaps(frame, opts.max_gap);
    if let Some(&(channel, start, len)) = gaps.first() {
        return Err(DataError::LongGap {
            channel: frame.channels[channel].name.clone(),
            start,
            len,
            split_points: merge_ranges(gaps.iter().map(|&(_, s, l)| (s, s + l)).collect()),
        });
    }
    let n = frame.n_samples();
    let columns: Vec<Vec<f64>> = (0..frame.n_channels())
        .into_par_iter()
        .map(|c| {
            let mut col: Vec<f64> = frame.values.column(c).iter().copied().collect();
            despike_to_fixpoint(&mut col, opts);
            interpolate_missing(&mut col);
            despike_to_fixpoint(&mut col, opts);
            col
        })
        .collect();
    let mut out = frame.clone();
    for (c, col) in columns.iter().enumerate() {
        for r in 0..n {
            out.values[(r, c)] = col[r];
        }
    }
    Ok(out)
}

/// Cuts out every missing run longer than `max_gap` (in any channel) and
/// returns the remaining contiguous pieces.
pub fn split_on_long_gaps(frame: &SignalFrame, max_gap: usize) -> Vec<SignalFrame> {
    let cuts = merge_ranges(
        long_gaps(frame, max_gap)
            .into_iter()
            .map(|(_, s, l)| (s, s + l))
            .collect(),
    );
    let mut pieces = Vec::new();
    let mut pos = 0;
    for (a, b) in cuts.into_iter().chain(std::iter::once((frame.n_samples(), frame.n_samples()))) {
        if a > pos {
            pieces.push(frame.slice_rows(pos, a - pos));
        }
        pos = pos.max(b);
    }
    pieces
}

/// `(channel, start, len)` of missing runs longer than `max_gap`.
fn long_gaps(frame: &SignalFrame, max_gap: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for c in 0..frame.n_channels() {
        let col = frame.values.column(c);
        let mut r = 0;
        while r < col.len() {
            if col[r].is_nan() {
                let s = r;
                while r < col.len() && col[r].is_nan() {
                    r += 1;
                }
                if r - s > max_gap {
                    out.push((c, s, r - s));
                }
            } else {
                r += 1;
            }
        }
    }
    out.sort_by_key(|&(c, s, _)| (s, c));
    out
}

fn merge_ranges(mut ranges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    ranges.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (a, b) in ranges {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Linear interpolation across interior gaps, nearest-value hold at the edges.
fn interpolate_missing(col: &mut [f64]) {
    let n = col.len();
    let Some(first) = col.iter().position(|v| !v.is_nan()) else {
        return;
    };
    let fill = col[first];
    col[..first].fill(fill);
    let mut last_valid = first;
    for r in first + 1..n {
        if col[r].is_nan() {
            continue;
        }
        if r > last_valid + 1 {
            let (a, b) = (col[last_valid], col[r]);
            let span = (r - last_valid) as f64;
            for k in last_valid + 1..r {
                let w = (k - last_valid) as f64 / span;
                col[k] = a + w * (b - a);
            }
        }
        last_valid = r;
    }
    let hold = col[last_valid];
    col[last_valid + 1..].fill(hold);
}

fn despike_to_fixpoint(col: &mut [f64], opts: &CleanOptions) {
    for _ in 0..MAX_SPIKE_PASSES {
        if !despike_pass(col, opts) {
            break;
        }
    }
}

/// One simultaneous rolling-median pass. Returns whether anything changed.
fn despike_pass(col: &mut [f64], opts: &CleanOptions) -> bool {
    let n = col.len();
    let half = opts.window / 2;
    let mut scratch = Vec::with_capacity(opts.window);
    let mut flagged: Vec<Option<f64>> = vec![None; n];
    for i in 0..n {
        if col[i].is_nan() {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        scratch.clear();
        scratch.extend(col[lo..hi].iter().copied().filter(|v| !v.is_nan()));
        let med = median(&mut scratch);
        for v in scratch.iter_mut() {
            *v = (*v - med).abs();
        }
        let sigma = (MAD_TO_SIGMA * median(&mut scratch)).max(1e-9 * med.abs().max(1.0));
        if (col[i] - med).abs() > opts.spike_sigma * sigma {
            flagged[i] = Some(med);
        }
    }
    let mut changed = false;
    let mut r = 0;
    while r < n {
        if flagged[r].is_none() {
            r += 1;
            continue;
        }
        let s = r;
        while r < n && flagged[r].is_some() {
            r += 1;
        }
        if r - s <= opts.max_spike_run {
            for k in s..r {
                let m = flagged[k].unwrap();
                if col[k] != m {
                    col[k] = m;
                    changed = true;
                }
            }
        }
    }
    changed
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let hi = *m;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ChannelSpec, Role, MISSING};
    use chrono::{TimeZone, Utc};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn frame(cols: Vec<Vec<f64>>) -> SignalFrame {
        let n = cols[0].len();
        let channels = (0..cols.len())
            .map(|i| ChannelSpec::new(&format!("c{i}"), "", Role::Input))
            .collect();
        let t = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        SignalFrame::new(t, 60, channels, DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]))
            .unwrap()
    }

    fn noisy_sine(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let e: f64 = rng.sample(StandardNormal);
                20.0 + 3.0 * (i as f64 / 600.0).sin() + sigma * e
            })
            .collect()
    }

    #[test]
    fn clean_frame_is_unchanged() {
        let f = frame(vec![noisy_sine(500, 0.05, 1), (0..500).map(|i| i as f64).collect()]);
        assert_eq!(clean_faults(&f, 5, 6.0).unwrap(), f);
    }

    #[test]
    fn single_missing_is_interpolated() {
        let f = frame(vec![vec![10.0, MISSING, 12.0]]);
        let g = clean_faults(&f, 5, 6.0).unwrap();
        assert_eq!(g.values[(1, 0)], 11.0);
    }

    #[test]
    fn spike_replaced_near_rolling_median() {
        let sigma = 0.05;
        let mut col = noisy_sine(1000, sigma, 7);
        col[400] += 50.0 * sigma;
        let g = clean_faults(&frame(vec![col.clone()]), 5, 6.0).unwrap();
        let mut win: Vec<f64> = col[385..=415].to_vec();
        let med = median(&mut win);
        assert!((g.values[(400, 0)] - med).abs() <= sigma, "{} {} {}", g.values[(400, 0)], med, col[400]);
    }

    #[test]
    fn long_gap_reports_split_points() {
        let mut col: Vec<f64> = (0..100).map(|i| i as f64).collect();
        for v in &mut col[40..50] {
            *v = MISSING;
        }
        let f = frame(vec![col]);
        match clean_faults(&f, 5, 6.0) {
            Err(DataError::LongGap { split_points, .. }) => assert_eq!(split_points, vec![(40, 50)]),
            other => panic!("{other:?}"),
        }
        let pieces = split_on_long_gaps(&f, 5);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].n_samples(), 40);
        assert_eq!(pieces[1].n_samples(), 50);
        assert_eq!(pieces[1].start_time, f.time_at(50));
    }

    #[test]
    fn wide_pulses_survive() {
        let mut col = vec![0.0; 200];
        for v in &mut col[80..100] {
            *v = 12.0;
        }
        let f = frame(vec![col]);
        assert_eq!(clean_faults(&f, 5, 6.0).unwrap(), f);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn cleaning_is_idempotent(
            seed in 0u64..1000,
            spikes in proptest::collection::vec((0usize..300, -40.0f64..40.0), 0..8),
            holes in proptest::collection::vec((0usize..300, 1usize..5), 0..6),
        ) {
            let mut col = noisy_sine(300, 0.1, seed);
            for (i, a) in spikes { col[i] += a; }
            for (i, l) in holes {
                for v in col.iter_mut().skip(i).take(l) { *v = MISSING; }
            }
            let f = frame(vec![col]);
            if let Ok(once) = clean_faults(&f, 5, 6.0) {
                let twice = clean_faults(&once, 5, 6.0).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
