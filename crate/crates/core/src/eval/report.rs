use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CriteriaReport, HorizonMetrics, Result};

/// Published real-facility scores (normalized units), in the row order
/// full, short, long, scenario 1–4. Context for reports only; synthetic
/// data is not expected to reproduce them.
pub const REFERENCE_ROWS: [&str; 7] = ["full", "short", "long", "scenario1", "scenario2", "scenario3", "scenario4"];
pub const REFERENCE_LSS: [f64; 7] = [0.32, 0.11, 0.52, 0.29, 0.49, 0.88, 0.36];
pub const REFERENCE_NLARX: [f64; 7] = [0.23, 0.10, 0.31, 0.22, 0.60, 1.24, 1.45];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub criteria: CriteriaReport,
    /// Test-set per-depth curves.
    #[serde(skip)]
    pub curves: Option<HorizonMetrics>,
    pub output_names: Vec<String>,
}

/// Criteria ordering `short < full < long` is expected; deviations are
/// returned as warnings.
pub fn ordering_warnings(label: &str, c: &CriteriaReport) -> Vec<String> {
    let mut w = Vec::new();
    if !(c.short < c.full) {
        w.push(format!("{label}: short-term acc {:.4} is not below full-horizon acc {:.4}", c.short, c.full));
    }
    if !(c.full < c.long) {
        w.push(format!("{label}: full-horizon acc {:.4} is not below long-term acc {:.4}", c.full, c.long));
    }
    w
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes `criteria.csv` (one row per model) and `curves_<model>.csv`
/// (`depth,channel,rmse`) into `dir`. Returns the written paths.
pub fn export_report(reports: &BTreeMap<String, ModelReport>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let n_scen = reports.values().map(|r| r.criteria.scenarios.len()).max().unwrap_or(0).max(4);
    let table = dir.join("criteria.csv");
    let mut w = csv::Writer::from_path(&table)?;
    let mut header = vec!["model".to_string(), "full".into(), "short".into(), "long".into()];
    header.extend((1..=n_scen).map(|i| format!("scenario{i}")));
    w.write_record(&header)?;
    for (label, r) in reports {
        let c = &r.criteria;
        let mut row = vec![label.clone(), fmt(c.full), fmt(c.short), fmt(c.long)];
        for i in 1..=n_scen {
            row.push(c.scenario(&format!("scenario{i}")).map(fmt).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    written.push(table);
    for (label, r) in reports {
        let Some(m) = &r.curves else { continue };
        let path = dir.join(format!("curves_{label}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["depth", "channel", "rmse"])?;
        for c in 0..m.n_outputs() {
            let name = r.output_names.get(c).cloned().unwrap_or_else(|| format!("y{c}"));
            for d in 0..m.horizon() {
                w.write_record([(d + 1).to_string(), name.clone(), fmt(m.per_channel[(d, c)])])?;
            }
        }
        for d in 0..m.horizon() {
            w.write_record([(d + 1).to_string(), "aggregate".into(), fmt(m.aggregate[d])])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
