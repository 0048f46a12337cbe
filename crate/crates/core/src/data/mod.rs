//! Benchmark-schema time series: loading, fault cleaning, resampling,
//! normalization and partitioning into sections and anchor windows.

mod clean;
mod io;
mod prepare;
mod split;
mod transform;
mod windows;

use chrono::{DateTime, TimeDelta, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{clean_faults, clean_faults_with, split_on_long_gaps, CleanOptions};
pub use io::{load_frame, read_frame, write_frame, write_frame_to};
pub use prepare::{prepare, PrepareOptions, PreparedData};
pub use split::{DatasetSplit, Section, SectionRole, SplitManifest, SplitRange};
pub use transform::{
    apply_normalization, fit_normalization, invert_normalization, resample_moving_average,
    NormalizationStats, SCALE_FLOOR,
};
pub use windows::{anchor_indices, make_anchor_windows, AnchorWindow};

/// Missing-cell marker inside a frame. Written to disk as an empty field.
pub const MISSING: f64 = f64::NAN;

/// Raw benchmark sampling period (one minute).
pub const RAW_PERIOD_S: i64 = 60;

/// Moving-average factor turning raw one-minute data into ten-minute samples.
pub const DEFAULT_RESAMPLE_FACTOR: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown column `{0}` (not in schema)")]
    UnknownColumn(String),
    #[error("schema column `{0}` missing from file")]
    MissingColumn(String),
    #[error("duplicate channel name `{0}`")]
    DuplicateChannel(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp not strictly increasing")]
    NonMonotonic { line: usize },
    #[error("line {line}: timestamp off the sampling grid of {period_s} s")]
    OffGrid { line: usize, period_s: i64 },
    #[error("empty input")]
    Empty,
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("resampling factor must be >= 1")]
    BadFactor,
    #[error("sampling period mismatch: {0} s vs {1} s")]
    PeriodMismatch(i64, i64),
    #[error("gap of {len} samples in channel `{channel}` at index {start} exceeds max_gap; split the frame at {split_points:?}")]
    LongGap {
        channel: String,
        start: usize,
        len: usize,
        /// Sample-index ranges `[start, end)` of the long gaps, sorted.
        split_points: Vec<(usize, usize)>,
    },
    #[error("sections `{0}` and `{1}` overlap in time")]
    Overlap(String, String),
    #[error("split invariant violated: {0}")]
    Split(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub unit: String,
    pub role: Role,
}

impl ChannelSpec {
    pub fn new(name: &str, unit: &str, role: Role) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            role,
        }
    }
}

/// The benchmark channel order: ten inputs followed by the two pool
/// temperatures.
pub fn benchmark_schema() -> Vec<ChannelSpec> {
    use Role::*;
    vec![
        ChannelSpec::new("boiler_power_kw", "kW", Input),
        ChannelSpec::new("valve1_pct", "%", Input),
        ChannelSpec::new("valve2_pct", "%", Input),
        ChannelSpec::new("air_temp_c", "degC", Input),
        ChannelSpec::new("air_humidity_pct", "%", Input),
        ChannelSpec::new("outdoor_temp_c", "degC", Input),
        ChannelSpec::new("recycle_flow1_m3h", "m3/h", Input),
        ChannelSpec::new("recycle_flow2_m3h", "m3/h", Input),
        ChannelSpec::new("refill_flow_m3h", "m3/h", Input),
        ChannelSpec::new("hall_energy_kw", "kW", Input),
        ChannelSpec::new("pool1_temp_c", "degC", Output),
        ChannelSpec::new("pool2_temp_c", "degC", Output),
    ]
}

/// Uniformly sampled multivariate series with named, role-tagged channels.
///
/// Rows are samples, columns follow `channels`. Missing cells hold
/// [`MISSING`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub start_time: DateTime<Utc>,
    pub period_s: i64,
    pub channels: Vec<ChannelSpec>,
    pub values: DMatrix<f64>,
}

impl SignalFrame {
    pub fn new(
        start_time: DateTime<Utc>,
        period_s: i64,
        channels: Vec<ChannelSpec>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.ncols() != channels.len() {
            return Err(DataError::ChannelMismatch {
                expected: channels.len(),
                got: values.ncols(),
            });
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(DataError::DuplicateChannel(c.name.clone()));
            }
        }
        Ok(Self {
            start_time,
            period_s,
            channels,
            values,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn input_indices(&self) -> Vec<usize> {
        self.role_indices(Role::Input)
    }

    pub fn output_indices(&self) -> Vec<usize> {
        self.role_indices(Role::Output)
    }

    fn role_indices(&self, role: Role) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_indices().len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_indices().len()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.channel_index(name)
            .map(|j| self.values.column(j).iter().copied().collect())
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.start_time + TimeDelta::seconds(self.period_s * index as i64)
    }

    /// Exclusive end of the covered time range.
    pub fn end_time(&self) -> DateTime<Utc> {
        self.time_at(self.n_samples())
    }

    /// Input block `[rows × n_u]` of the rows `start..start+len`.
    pub fn inputs(&self, start: usize, len: usize) -> DMatrix<f64> {
        self.gather(start, len, &self.input_indices())
    }

    /// Output block `[rows × n_y]` of the rows `start..start+len`.
    pub fn outputs(&self, start: usize, len: usize) -> DMatrix<f64> {
        self.gather(start, len, &self.output_indices())
    }

    fn gather(&self, start: usize, len: usize, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(len, cols.len(), |r, c| self.values[(start + r, cols[c])])
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> SignalFrame {
        SignalFrame {
            start_time: self.time_at(start),
            period_s: self.period_s,
            channels: self.channels.clone(),
            values: self.values.rows(start, len).into_owned(),
        }
    }

    /// Rows covering `[from, to)`, clipped to the frame.
    pub fn slice_time(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> SignalFrame {
        let idx = |t: DateTime<Utc>| -> usize {
            let secs = (t - self.start_time).num_seconds();
            if secs <= 0 {
                0
            } else {
                (((secs + self.period_s - 1) / self.period_s) as usize).min(self.n_samples())
            }
        };
        let (a, b) = (idx(from), idx(to));
        self.slice_rows(a, b.saturating_sub(a))
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Appends `other`, which must start exactly where `self` ends.
    pub fn concat(&self, other: &SignalFrame) -> Result<SignalFrame> {
        if other.period_s != self.period_s {
            return Err(DataError::PeriodMismatch(self.period_s, other.period_s));
        }
        if other.channels != self.channels {
            return Err(DataError::ChannelMismatch {
                expected: self.n_channels(),
                got: other.n_channels(),
            });
        }
        if other.start_time != self.end_time() {
            return Err(DataError::Split(format!(
                "frame starting {} does not continue frame ending {}",
                other.start_time,
                self.end_time()
            )));
        }
        let n = self.n_samples() + other.n_samples();
        let values = DMatrix::from_fn(n, self.n_channels(), |r, c| {
            if r < self.n_samples() {
                self.values[(r, c)]
            } else {
                other.values[(r - self.n_samples(), c)]
            }
        });
        Ok(SignalFrame {
            values,
            ..self.clone()
        })
    }
}
