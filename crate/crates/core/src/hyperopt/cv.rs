use serde::{Deserialize, Serialize};

use super::{HyperoptError, Result};
use crate::data::{DatasetSplit, Section, SignalFrame};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Folds over the fitting sections (train and validation roles pooled, in
/// time order). Test and scenario sections never enter a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub folds: Vec<Fold>,
    pub sections: Vec<Section>,
}

impl CvPlan {
    pub fn section(&self, label: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.label == label)
    }

    fn frames(&self, labels: &[String]) -> Vec<&SignalFrame> {
        labels.iter().filter_map(|l| self.section(l)).map(|s| &s.frame).collect()
    }

    /// `(train, validation)` frames of fold `i`.
    pub fn fold_frames(&self, i: usize) -> (Vec<&SignalFrame>, Vec<&SignalFrame>) {
        let f = &self.folds[i];
        (self.frames(&f.train), self.frames(&f.validation))
    }
}

/// k-fold rotation over contiguous groups of sections. With fewer sections
/// than folds, the longest section is halved in time until there are
/// enough; halves shorter than `min_len` samples are refused.
pub fn make_cv_plan(split: &DatasetSplit, n_folds: usize, min_len: usize) -> Result<CvPlan> {
    if n_folds < 2 {
        return Err(HyperoptError::Invalid(format!("need at least 2 folds, got {n_folds}")));
    }
    let mut sections: Vec<Section> = split.train.iter().chain(&split.validation).cloned().collect();
    if sections.is_empty() {
        return Err(HyperoptError::Insufficient("no train or validation sections".into()));
    }
    while sections.len() < n_folds {
        let (i, _) = sections
            .iter()
            .enumerate()
            .max_by_key(|(i, s)| (s.frame.n_samples(), std::cmp::Reverse(*i)))
            .unwrap();
        let s = sections.remove(i);
        let n = s.frame.n_samples();
        if n / 2 < min_len.max(1) {
            return Err(HyperoptError::Insufficient(format!(
                "{n_folds} folds need {n_folds} sections; `{}` ({n} samples) is too short to halve",
                s.label
            )));
        }
        let h = n / 2;
        sections.insert(i, Section::new(format!("{}.2", s.label), s.frame.slice_rows(h, n - h)));
        sections.insert(i, Section::new(format!("{}.1", s.label), s.frame.slice_rows(0, h)));
    }
    sections.sort_by(|a, b| a.frame.start_time.cmp(&b.frame.start_time).then(a.label.cmp(&b.label)));
    let k = sections.len();
    let folds = (0..n_folds)
        .map(|f| {
            let (lo, hi) = (f * k / n_folds, (f + 1) * k / n_folds);
            let mut fold = Fold {
                train: Vec::new(),
                validation: Vec::new(),
            };
            for (j, s) in sections.iter().enumerate() {
                if (lo..hi).contains(&j) {
                    fold.validation.push(s.label.clone());
                } else {
                    fold.train.push(s.label.clone());
                }
            }
            fold
        })
        .collect();
    Ok(CvPlan { folds, sections })
}
