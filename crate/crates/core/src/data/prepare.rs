use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    apply_normalization, clean_faults_with, fit_normalization, load_frame, resample_moving_average, write_frame,
    ChannelSpec, CleanOptions, DataError, DatasetSplit, NormalizationStats, Result, Section, SectionRole, SignalFrame,
    SplitManifest, SplitRange, DEFAULT_RESAMPLE_FACTOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareOptions {
    pub clean: CleanOptions,
    pub resample_factor: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            clean: CleanOptions::default(),
            resample_factor: DEFAULT_RESAMPLE_FACTOR,
        }
    }
}

/// Cleaned, resampled sections in physical units plus the statistics fit on
/// the training sections.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub split: DatasetSplit,
    pub stats: NormalizationStats,
}

const STATS_FILE: &str = "stats.json";
const MANIFEST_FILE: &str = "manifest.toml";

/// Slice by manifest, clean each section, resample, fit normalization on the
/// training sections.
pub fn prepare(raw: &SignalFrame, manifest: &SplitManifest, opts: &PrepareOptions) -> Result<PreparedData> {
    let sliced = manifest.apply(raw)?;
    let items: Vec<(SectionRole, &Section)> = sliced.iter().collect();
    let processed: Vec<Result<Section>> = items
        .par_iter()
        .map(|(_, s)| {
            let clean = clean_faults_with(&s.frame, &opts.clean).map_err(|e| match e {
                DataError::LongGap { .. } => DataError::Split(format!("section `{}`: {e}", s.label)),
                other => other,
            })?;
            Ok(Section::new(s.label.clone(), resample_moving_average(&clean, opts.resample_factor)?))
        })
        .collect();
    let mut split = DatasetSplit::default();
    for ((role, _), s) in items.iter().zip(processed) {
        split.push(*role, s?);
    }
    let stats = fit_normalization(&split.train.iter().map(|s| &s.frame).collect::<Vec<_>>())?;
    Ok(PreparedData { split, stats })
}

impl PreparedData {
    pub fn normalized(&self) -> Result<DatasetSplit> {
        self.split.try_map(|f| apply_normalization(f, &self.stats))
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            sections: self
                .split
                .iter()
                .map(|(role, s)| SplitRange {
                    label: s.label.clone(),
                    role,
                    start: s.frame.start_time,
                    end: s.frame.end_time(),
                })
                .collect(),
        }
    }

    /// One CSV per section, the statistics and the section manifest.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (_, s) in self.split.iter() {
            write_frame(dir.join(format!("{}.csv", s.label)), &s.frame)?;
        }
        let stats = serde_json::to_string_pretty(&self.stats).map_err(|e| DataError::Manifest(e.to_string()))?;
        std::fs::write(dir.join(STATS_FILE), stats)?;
        self.manifest().save(dir.join(MANIFEST_FILE))
    }

    pub fn load(dir: impl AsRef<Path>, schema: &[ChannelSpec]) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = SplitManifest::load(dir.join(MANIFEST_FILE))?;
        let text = std::fs::read_to_string(dir.join(STATS_FILE))?;
        let stats: NormalizationStats = serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
        let mut split = DatasetSplit::default();
        for r in &manifest.sections {
            let frame = load_frame(dir.join(format!("{}.csv", r.label)), schema)?;
            split.push(r.role, Section::new(r.label.clone(), frame));
        }
        split.check_invariants()?;
        Ok(Self { split, stats })
    }
}
