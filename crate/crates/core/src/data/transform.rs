use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, Result, SignalFrame};

/// Smallest admissible normalization scale.
pub const SCALE_FLOOR: f64 = 1e-9;

/// Block moving average: every output sample is the mean of `factor`
/// consecutive input samples. A trailing partial block is dropped.
pub fn resample_moving_average(frame: &SignalFrame, factor: usize) -> Result<SignalFrame> {
    if factor < 1 {
        return Err(DataError::BadFactor);
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let n_out = frame.n_samples() / factor;
    let values = DMatrix::from_fn(n_out, frame.n_channels(), |r, c| {
        let s: f64 = (0..factor).map(|k| frame.values[(r * factor + k, c)]).sum();
        s / factor as f64
    });
    Ok(SignalFrame {
        start_time: frame.start_time,
        period_s: frame.period_s * factor as i64,
        channels: frame.channels.clone(),
        values,
    })
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(channels: Vec<String>) -> Self {
        let n = channels.len();
        Self {
            channels,
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }
}

/// Mean and population standard deviation over the concatenation of `frames`.
pub fn fit_normalization(frames: &[&SignalFrame]) -> Result<NormalizationStats> {
    let first = frames.first().ok_or(DataError::Empty)?;
    let nc = first.n_channels();
    let mut count = 0usize;
    let mut sum = vec![0.0; nc];
    for f in frames {
        if f.n_channels() != nc {
            return Err(DataError::ChannelMismatch {
                expected: nc,
                got: f.n_channels(),
            });
        }
        count += f.n_samples();
        for c in 0..nc {
            sum[c] += f.values.column(c).iter().sum::<f64>();
        }
    }
    if count == 0 {
        return Err(DataError::Empty);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut ss = vec![0.0; nc];
    for f in frames {
        for c in 0..nc {
            ss[c] += f
                .values
                .column(c)
                .iter()
                .map(|v| (v - mean[c]).powi(2))
                .sum::<f64>();
        }
    }
    let scale = ss
        .iter()
        .map(|s| (s / count as f64).sqrt().max(SCALE_FLOOR))
        .collect();
    Ok(NormalizationStats {
        channels: first.channels.iter().map(|c| c.name.clone()).collect(),
        mean,
        scale,
    })
}

pub fn apply_normalization(frame: &SignalFrame, stats: &NormalizationStats) -> Result<SignalFrame> {
    map_channels(frame, stats, |v, m, s| (v - m) / s)
}

pub fn invert_normalization(frame: &SignalFrame, stats: &NormalizationStats) -> Result<SignalFrame> {
    map_channels(frame, stats, |z, m, s| z * s + m)
}

fn map_channels(
    frame: &SignalFrame,
    stats: &NormalizationStats,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<SignalFrame> {
    if stats.len() != frame.n_channels() {
        return Err(DataError::ChannelMismatch {
            expected: stats.len(),
            got: frame.n_channels(),
        });
    }
    let mut out = frame.clone();
    for c in 0..frame.n_channels() {
        let (m, s) = (stats.mean[c], stats.scale[c]);
        for v in out.values.column_mut(c).iter_mut() {
            *v = f(*v, m, s);
        }
    }
    Ok(out)
}
