use chrono::{DateTime, Datelike, TimeDelta, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{benchmark_controllers, run_episode, EpisodeOptions, PlantConfig, ScenarioScript, SimError};
use crate::data::{DataError, DatasetSplit, SectionRole, SignalFrame, SplitManifest, SplitRange};

/// Calendar layout of the synthetic benchmark year. Scenario offsets are
/// fractions of `days` so shortened suites keep the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub start: DateTime<Utc>,
    pub days: i64,
    /// Length of each of the three test sections.
    pub test_days: i64,
    /// Upper bound on a train/validation section.
    pub section_days: i64,
    /// Shorter leftovers are dropped.
    pub min_section_days: i64,
    /// Every n-th fitting section is used for validation.
    pub validation_every: usize,
    pub scenario1_offset: f64,
    /// Scenarios 2–4 run back to back from here.
    pub scenario_chain_offset: f64,
    pub scenario_days: [i64; 4],
    /// Excluded margin around each scenario block.
    pub guard_days: i64,
    pub warmup_days: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2019, 9, 1, 0, 0, 0).unwrap(),
            days: 366,
            test_days: 14,
            section_days: 28,
            min_section_days: 2,
            validation_every: 4,
            scenario1_offset: 0.25,
            scenario_chain_offset: 0.54,
            scenario_days: [3, 3, 3, 2],
            guard_days: 2,
            warmup_days: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSuite {
    /// One-minute raw data over the whole period, with sensor faults.
    pub raw: SignalFrame,
    pub manifest: SplitManifest,
    pub scenarios: Vec<ScenarioScript>,
}

impl BenchmarkSuite {
    pub fn split(&self) -> Result<DatasetSplit, DataError> {
        self.manifest.apply(&self.raw)
    }
}

impl SuiteConfig {
    pub fn scenario_scripts(&self) -> Vec<ScenarioScript> {
        let day = |d: i64| self.start + TimeDelta::days(d);
        let s1 = (self.scenario1_offset * self.days as f64).round() as i64;
        let mut out = vec![ScenarioScript::standard(1, day(s1), self.scenario_days[0]).unwrap()];
        let mut d = (self.scenario_chain_offset * self.days as f64).round() as i64;
        for id in 2..=4u8 {
            let len = self.scenario_days[id as usize - 1];
            out.push(ScenarioScript::standard(id, day(d), len).unwrap());
            d += len;
        }
        out
    }

    /// Section boundaries; test sections at both ends of the period, scenario
    /// blocks (with guards) removed from the fitting data.
    pub fn manifest(&self) -> Result<SplitManifest, SimError> {
        let t = self.test_days;
        if self.days < 3 * t + 2 * self.min_section_days || t < 1 || self.section_days < 1 {
            return Err(SimError::Config(format!("suite of {} days is too short for its layout", self.days)));
        }
        let day = |d: i64| self.start + TimeDelta::days(d);
        let range = |label: String, role, a: i64, b: i64| SplitRange {
            label,
            role,
            start: day(a),
            end: day(b),
        };
        let mut sections = vec![range("test_start".into(), SectionRole::Test, 0, t)];
        let scripts = self.scenario_scripts();
        let mut blocked: Vec<(i64, i64)> = Vec::new();
        for s in &scripts {
            let a = (s.section_start - self.start).num_days();
            let b = (s.section_end - self.start).num_days();
            if a < t + self.guard_days || b > self.days - 2 * t - self.guard_days {
                return Err(SimError::Config(format!("{} does not fit between the test sections", s.label)));
            }
            sections.push(range(s.label.clone(), SectionRole::Scenario, a, b));
            blocked.push((a - self.guard_days, b + self.guard_days));
        }
        blocked.sort_unstable();
        let mut free = Vec::new();
        let mut pos = t;
        for (a, b) in blocked {
            if a > pos {
                free.push((pos, a));
            }
            pos = pos.max(b);
        }
        if self.days - 2 * t > pos {
            free.push((pos, self.days - 2 * t));
        }
        let mut n_fit = 0usize;
        for (a, b) in free {
            let len = b - a;
            let pieces = (len + self.section_days - 1) / self.section_days;
            for i in 0..pieces {
                let (sa, sb) = (a + i * len / pieces, a + (i + 1) * len / pieces);
                if sb - sa < self.min_section_days {
                    continue;
                }
                n_fit += 1;
                let role = if self.validation_every > 0 && n_fit % self.validation_every == 0 {
                    SectionRole::Validation
                } else {
                    SectionRole::Train
                };
                let label = match role {
                    SectionRole::Validation => format!("val_{n_fit:02}"),
                    _ => format!("train_{n_fit:02}"),
                };
                sections.push(range(label, role, sa, sb));
            }
        }
        sections.push(range("test_end_1".into(), SectionRole::Test, self.days - 2 * t, self.days - t));
        sections.push(range("test_end_2".into(), SectionRole::Test, self.days - t, self.days));
        sections.sort_by_key(|s| s.start);
        Ok(SplitManifest { sections })
    }
}

/// Simulates the whole period as one continuous closed-loop episode with
/// night setback on pool 1, a constant setpoint on pool 2 and the four
/// scenarios embedded, and lays out the split manifest.
pub fn generate_benchmark_suite(cfg: &PlantConfig, suite: &SuiteConfig, seed: u64) -> Result<BenchmarkSuite, SimError> {
    let manifest = suite.manifest()?;
    let scenarios = suite.scenario_scripts();
    let opts = EpisodeOptions {
        start: suite.start,
        days: suite.days as f64,
        seed,
        label: "benchmark".into(),
        warmup_days: suite.warmup_days,
    };
    let raw = run_episode(cfg, &benchmark_controllers(), &scenarios, &opts)?;
    Ok(BenchmarkSuite {
        raw,
        manifest,
        scenarios,
    })
}

/// Cuts a frame at calendar-month boundaries; labels are `YYYY-MM`.
pub fn split_by_month(frame: &SignalFrame) -> Vec<(String, SignalFrame)> {
    let mut out = Vec::new();
    let mut t = frame.start_time;
    while t < frame.end_time() {
        let (y, m) = (t.year(), t.month());
        let next = if m == 12 {
            Utc.with_ymd_and_hms(y + 1, 1, 1, 0, 0, 0)
        } else {
            Utc.with_ymd_and_hms(y, m + 1, 1, 0, 0, 0)
        }
        .unwrap();
        let piece = frame.slice_time(t, next.min(frame.end_time()));
        out.push((format!("{y:04}-{m:02}"), piece));
        t = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_consistent() {
        let s = SuiteConfig::default();
        let m = s.manifest().unwrap();
        assert_eq!(m.labels(SectionRole::Test).len(), 3);
        assert_eq!(m.labels(SectionRole::Scenario), vec!["scenario1", "scenario2", "scenario3", "scenario4"]);
        let n_train = m.labels(SectionRole::Train).len();
        let n_val = m.labels(SectionRole::Validation).len();
        assert!(n_train >= 6 && n_val >= 2, "{n_train} {n_val}");
        for w in m.sections.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        let scen: Vec<_> = m.sections.iter().filter(|r| r.role == SectionRole::Scenario).collect();
        for r in m.sections.iter().filter(|r| matches!(r.role, SectionRole::Train | SectionRole::Validation)) {
            for sc in &scen {
                let gap = TimeDelta::days(s.guard_days);
                assert!(r.end + gap <= sc.start || r.start >= sc.end + gap, "{} near {}", r.label, sc.label);
            }
        }
    }

    #[test]
    fn too_short_suite_rejected() {
        let s = SuiteConfig {
            days: 20,
            ..SuiteConfig::default()
        };
        assert!(matches!(s.manifest(), Err(SimError::Config(_))));
    }
}
