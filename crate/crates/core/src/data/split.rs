use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{DataError, Result, SignalFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionRole {
    Train,
    Validation,
    Test,
    Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub label: String,
    pub frame: SignalFrame,
}

impl Section {
    pub fn new(label: impl Into<String>, frame: SignalFrame) -> Self {
        Self {
            label: label.into(),
            frame,
        }
    }
}

/// Labelled, time-disjoint sections grouped by role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Section>,
    pub validation: Vec<Section>,
    pub test: Vec<Section>,
    pub scenario: Vec<Section>,
}

impl DatasetSplit {
    pub fn sections(&self, role: SectionRole) -> &[Section] {
        match role {
            SectionRole::Train => &self.train,
            SectionRole::Validation => &self.validation,
            SectionRole::Test => &self.test,
            SectionRole::Scenario => &self.scenario,
        }
    }

    fn sections_mut(&mut self, role: SectionRole) -> &mut Vec<Section> {
        match role {
            SectionRole::Train => &mut self.train,
            SectionRole::Validation => &mut self.validation,
            SectionRole::Test => &mut self.test,
            SectionRole::Scenario => &mut self.scenario,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SectionRole, &Section)> {
        [
            SectionRole::Train,
            SectionRole::Validation,
            SectionRole::Test,
            SectionRole::Scenario,
        ]
        .into_iter()
        .flat_map(move |r| self.sections(r).iter().map(move |s| (r, s)))
    }

    pub fn find(&self, label: &str) -> Option<(SectionRole, &Section)> {
        self.iter().find(|(_, s)| s.label == label)
    }

    pub fn push(&mut self, role: SectionRole, section: Section) {
        self.sections_mut(role).push(section);
    }

    /// Applies `f` to every frame, keeping labels and roles.
    pub fn try_map<E>(
        &self,
        mut f: impl FnMut(&SignalFrame) -> std::result::Result<SignalFrame, E>,
    ) -> std::result::Result<DatasetSplit, E> {
        let mut out = DatasetSplit::default();
        for (role, s) in self.iter() {
            out.push(role, Section::new(s.label.clone(), f(&s.frame)?));
        }
        Ok(out)
    }

    /// Checks label uniqueness, pairwise time disjointness and that every
    /// test section lies before or after all train/validation data.
    pub fn check_invariants(&self) -> Result<()> {
        let all: Vec<(SectionRole, &Section)> = self.iter().collect();
        for (i, (_, a)) in all.iter().enumerate() {
            for (_, b) in &all[..i] {
                if a.label == b.label {
                    return Err(DataError::Split(format!("duplicate label `{}`", a.label)));
                }
                let overlap = a.frame.start_time < b.frame.end_time()
                    && b.frame.start_time < a.frame.end_time();
                if overlap && a.frame.n_samples() > 0 && b.frame.n_samples() > 0 {
                    return Err(DataError::Overlap(b.label.clone(), a.label.clone()));
                }
            }
        }
        let fit: Vec<&Section> = self.train.iter().chain(&self.validation).collect();
        if let (Some(lo), Some(hi)) = (
            fit.iter().map(|s| s.frame.start_time).min(),
            fit.iter().map(|s| s.frame.end_time()).max(),
        ) {
            for t in &self.test {
                if !(t.frame.end_time() <= lo || t.frame.start_time >= hi) {
                    return Err(DataError::Split(format!(
                        "test section `{}` is not at the edge of the training period",
                        t.label
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRange {
    pub label: String,
    pub role: SectionRole,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// Declarative section list: label → role and `[start, end)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    #[serde(rename = "section", default)]
    pub sections: Vec<SplitRange>,
}

impl SplitManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn labels(&self, role: SectionRole) -> Vec<&str> {
        self.sections
            .iter()
            .filter(|s| s.role == role)
            .map(|s| s.label.as_str())
            .collect()
    }

    /// Cuts `frame` into the listed sections. Every section must be fully
    /// covered by the frame.
    pub fn apply(&self, frame: &SignalFrame) -> Result<DatasetSplit> {
        let mut split = DatasetSplit::default();
        for r in &self.sections {
            if r.end <= r.start {
                return Err(DataError::Manifest(format!("section `{}` is empty", r.label)));
            }
            if r.start < frame.start_time || r.end > frame.end_time() {
                return Err(DataError::Manifest(format!(
                    "section `{}` [{}, {}) outside data [{}, {})",
                    r.label,
                    r.start,
                    r.end,
                    frame.start_time,
                    frame.end_time()
                )));
            }
            split.push(r.role, Section::new(r.label.clone(), frame.slice_time(r.start, r.end)));
        }
        split.check_invariants()?;
        Ok(split)
    }
}
