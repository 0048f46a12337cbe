use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use poolid::data::{load_frame, prepare as prepare_data, write_frame, DatasetSplit, NormalizationStats, PreparedData, SignalFrame, SplitManifest};
use poolid::eval::{
    export_report, ordering_warnings, output_scales, scenario_eval, EvalSettings, Forecaster, ModelReport, REFERENCE_LSS,
    REFERENCE_NLARX, REFERENCE_ROWS,
};
use poolid::hyperopt::{make_cv_plan, run_search, SearchOptions, SearchOutcome, TrialConfig};
use poolid::linid::{estimate_subspace, StateObserver, StateSpaceModel};
use poolid::nlarx::{self, NlarxModel};
use poolid::simulator::{generate_benchmark_suite, split_by_month};
use serde::{Deserialize, Serialize};

use crate::config::{require_dir, Family, RunConfig, RunDir};
use crate::error::{CliError, Result};

/// Writes the benchmark suite: one file per calendar month, one file per
/// scenario section, the split manifest and the scenario scripts.
pub fn simulate(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<PathBuf>> {
    let suite = generate_benchmark_suite(&cfg.simulation.plant, &cfg.simulation.suite, cfg.seed()?)?;
    std::fs::create_dir_all(&dir.data)?;
    let mut written = Vec::new();
    for (month, frame) in split_by_month(&suite.raw) {
        let p = dir.data.join(format!("{month}.csv"));
        write_frame(&p, &frame)?;
        written.push(p);
    }
    let scen = dir.data.join("scenarios");
    std::fs::create_dir_all(&scen)?;
    for s in &suite.scenarios {
        let p = scen.join(format!("{}.csv", s.label));
        write_frame(&p, &suite.raw.slice_time(s.section_start, s.section_end))?;
        written.push(p);
    }
    let scripts = scen.join("scripts.json");
    std::fs::write(&scripts, serde_json::to_string_pretty(&suite.scenarios)?)?;
    written.push(scripts);
    if let Some(parent) = dir.manifest.parent() {
        std::fs::create_dir_all(parent)?;
    }
    suite.manifest.save(&dir.manifest)?;
    written.push(dir.manifest.clone());
    Ok(written)
}

/// Concatenates the `*.csv` files directly inside `data` in name order.
pub fn load_raw(data: &Path, cfg: &RunConfig) -> Result<SignalFrame> {
    require_dir(data, "data directory")?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let schema = cfg.schema();
    let mut raw: Option<SignalFrame> = None;
    for f in &files {
        let frame = load_frame(f, &schema).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?;
        raw = Some(match raw {
            None => frame,
            Some(r) => r.concat(&frame).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?,
        });
    }
    raw.ok_or_else(|| CliError::Data(format!("no csv files in {}", data.display())))
}

pub fn prepare(cfg: &RunConfig, dir: &RunDir) -> Result<PreparedData> {
    let raw = load_raw(&dir.data, cfg)?;
    if !dir.manifest.is_file() {
        return Err(CliError::Config(format!("split manifest {} does not exist", dir.manifest.display())));
    }
    let manifest = SplitManifest::load(&dir.manifest)?;
    let prepared = prepare_data(&raw, &manifest, &cfg.prepare)?;
    prepared.split.check_invariants()?;
    prepared.save(&dir.bundle)?;
    Ok(prepared)
}

pub fn load_bundle(cfg: &RunConfig, dir: &RunDir) -> Result<(PreparedData, DatasetSplit)> {
    require_dir(&dir.bundle, "prepared bundle")?;
    let prepared = PreparedData::load(&dir.bundle, &cfg.schema())?;
    let split = prepared.normalized()?;
    Ok((prepared, split))
}

/// Selected configuration of a finished search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestFile {
    pub trial_id: usize,
    /// Absent when not finite.
    pub mean_score: Option<f64>,
    pub fold_scores: Vec<Option<f64>>,
    pub config: TrialConfig,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn read_best(dir: &RunDir, family: Family) -> Result<TrialConfig> {
    let p = dir.best_path(family);
    let text = std::fs::read_to_string(&p)
        .map_err(|e| CliError::Config(format!("no search result at {} ({e}); run `hyperopt` first", p.display())))?;
    let best: BestFile = serde_json::from_str(&text)?;
    Ok(best.config)
}

/// Fits one model and writes it (and, for NLARX, its training log) under
/// the run's model directory.
pub fn train(cfg: &RunConfig, dir: &RunDir, family: Family) -> Result<PathBuf> {
    let (prepared, split) = load_bundle(cfg, dir)?;
    std::fs::create_dir_all(&dir.models)?;
    let path = dir.model_path(family);
    match family {
        Family::Lss => {
            let opts = if cfg.model.use_best {
                match read_best(dir, family)? {
                    TrialConfig::Lss(o) => o,
                    other => return Err(CliError::Config(format!("best config is for {}", other.family()))),
                }
            } else {
                cfg.model.lss
            };
            let frames: Vec<&SignalFrame> = split.train.iter().chain(&split.validation).map(|s| &s.frame).collect();
            let mut m = estimate_subspace(&frames, &opts)?;
            m.stats = Some(prepared.stats.clone());
            m.save(&path)?;
        }
        Family::Nlarx => {
            let config = if cfg.model.use_best {
                match read_best(dir, family)? {
                    TrialConfig::Nlarx(c) => c,
                    other => return Err(CliError::Config(format!("best config is for {}", other.family()))),
                }
            } else {
                nlarx::NlarxConfig {
                    seed: cfg.seed()?,
                    ..cfg.model.nlarx.clone()
                }
            };
            let (m, log) = nlarx::train(&config, &split, Some(&prepared.stats))?;
            log::info!("nlarx: best epoch {} of {}, validation acc {:.5}", log.best_epoch, log.epochs.len(), log.best_val_acc);
            m.save(&path)?;
            std::fs::write(dir.models.join("nlarx.log.json"), serde_json::to_string_pretty(&log)?)?;
        }
    }
    Ok(path)
}

/// A model file of either family, ready to forecast.
pub enum LoadedModel {
    Lss(StateObserver),
    Nlarx(NlarxModel),
}

impl Forecaster for LoadedModel {
    fn required_past(&self) -> usize {
        match self {
            LoadedModel::Lss(m) => m.required_past(),
            LoadedModel::Nlarx(m) => m.required_past(),
        }
    }

    fn forecast(&self, pi: &DMatrix<f64>, po: &DMatrix<f64>, fi: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
        match self {
            LoadedModel::Lss(m) => Forecaster::forecast(m, pi, po, fi),
            LoadedModel::Nlarx(m) => Forecaster::forecast(m, pi, po, fi),
        }
    }
}

pub fn load_model(path: &Path, past_len: usize) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    match v.get("kind").and_then(|k| k.as_str()) {
        Some("linear_state_space") => Ok(LoadedModel::Lss(StateObserver::new(&StateSpaceModel::from_json(&text)?, past_len)?)),
        Some("nlarx") => Ok(LoadedModel::Nlarx(NlarxModel::from_json(&text)?)),
        other => Err(CliError::Data(format!("{}: unknown model kind {other:?}", path.display()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub criteria: poolid::eval::CriteriaReport,
    /// Scenario full-horizon acc over test full-horizon acc; absent when
    /// the test acc is zero.
    pub degradation: Vec<(String, Option<f64>)>,
    /// Per-channel `(full, short, long)` in physical units.
    pub per_channel_physical: Vec<(String, [f64; 3])>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: EvalSettings,
    pub models: BTreeMap<String, ModelSummary>,
}

/// Scores every model on the test and scenario sections of `split`.
pub fn evaluate(
    models: &[(String, &dyn Forecaster)],
    split: &DatasetSplit,
    stats: &NormalizationStats,
    settings: &EvalSettings,
) -> Result<(EvalReport, BTreeMap<String, ModelReport>)> {
    let first = split
        .test
        .first()
        .ok_or_else(|| CliError::Data("split has no test sections".into()))?;
    let names: Vec<String> = first.frame.output_indices().iter().map(|&c| first.frame.channels[c].name.clone()).collect();
    let scales = output_scales(stats, &first.frame);
    let mut report = EvalReport {
        settings: *settings,
        models: BTreeMap::new(),
    };
    let mut exports = BTreeMap::new();
    for (label, m) in models {
        let (c, curves) = scenario_eval(*m, split, settings)?;
        let warnings = ordering_warnings(label, &c);
        for w in &warnings {
            log::warn!("{w}");
        }
        let degradation = c.scenarios.iter().map(|(l, v)| (l.clone(), finite(v / c.full))).collect();
        let per_channel_physical = names
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let s = scales[k];
                (n.clone(), [c.full_per_channel[k] * s, c.short_per_channel[k] * s, c.long_per_channel[k] * s])
            })
            .collect();
        exports.insert(
            label.clone(),
            ModelReport {
                criteria: c.clone(),
                curves: Some(curves),
                output_names: names.clone(),
            },
        );
        report.models.insert(
            label.clone(),
            ModelSummary {
                criteria: c,
                degradation,
                per_channel_physical,
                warnings,
            },
        );
    }
    Ok((report, exports))
}

/// Model files of the run, sorted; training logs excluded.
pub fn default_models(dir: &RunDir) -> Result<Vec<PathBuf>> {
    require_dir(&dir.models, "model directory")?;
    let mut v: Vec<PathBuf> = std::fs::read_dir(&dir.models)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let n = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            n.ends_with(".json") && !n.ends_with(".log.json")
        })
        .collect();
    v.sort();
    Ok(v)
}

pub fn eval(cfg: &RunConfig, dir: &RunDir, paths: &[PathBuf]) -> Result<EvalReport> {
    let (prepared, split) = load_bundle(cfg, dir)?;
    let paths = if paths.is_empty() { default_models(dir)? } else { paths.to_vec() };
    if paths.is_empty() {
        return Err(CliError::Config("no models to evaluate".into()));
    }
    let mut loaded = Vec::new();
    for p in &paths {
        let label = p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        loaded.push((label, load_model(p, cfg.eval.past_len)?));
    }
    let refs: Vec<(String, &dyn Forecaster)> = loaded.iter().map(|(l, m)| (l.clone(), m as &dyn Forecaster)).collect();
    let (report, exports) = evaluate(&refs, &split, &prepared.stats, &cfg.eval)?;
    export_report(&exports, &dir.reports)?;
    std::fs::write(dir.reports.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Plain-text comparison table of an evaluated run.
pub fn report(dir: &RunDir) -> Result<String> {
    let p = dir.reports.join("report.json");
    let text = std::fs::read_to_string(&p)
        .map_err(|e| CliError::Config(format!("no evaluation at {} ({e}); run `eval` first", p.display())))?;
    let r: EvalReport = serde_json::from_str(&text)?;
    let mut out = String::new();
    let row = |label: &str, v: &[f64]| {
        let cells: Vec<String> = v.iter().map(|x| format!("{x:>10.4}")).collect();
        format!("{label:<22}{}\n", cells.join(""))
    };
    out.push_str(&format!("{:<22}{}\n", "model", REFERENCE_ROWS.iter().map(|h| format!("{h:>10}")).collect::<String>()));
    for (label, m) in &r.models {
        let c = &m.criteria;
        let mut v = vec![c.full, c.short, c.long];
        v.extend((1..=4).map(|i| c.scenario(&format!("scenario{i}")).unwrap_or(f64::NAN)));
        out.push_str(&row(label, &v));
    }
    out.push_str(&row("published lss", &REFERENCE_LSS));
    out.push_str(&row("published nlarx", &REFERENCE_NLARX));
    out.push_str("\nscenario / test full-horizon ratio\n");
    for (label, m) in &r.models {
        let v: Vec<String> = m
            .degradation
            .iter()
            .map(|(l, x)| match x {
                Some(x) => format!("{l} {x:.2}"),
                None => format!("{l} -"),
            })
            .collect();
        out.push_str(&format!("  {label}: {}\n", v.join(", ")));
    }
    out.push_str("\nper-channel full/short/long in physical units\n");
    for (label, m) in &r.models {
        for (ch, v) in &m.per_channel_physical {
            out.push_str(&format!("  {label} {ch}: {:.4} / {:.4} / {:.4}\n", v[0], v[1], v[2]));
        }
    }
    for (_, m) in &r.models {
        for w in &m.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
    }
    std::fs::write(dir.reports.join("summary.txt"), &out)?;
    Ok(out)
}

/// Cross-validated search; writes the trial ledger and `best.json`.
pub fn hyperopt(cfg: &RunConfig, dir: &RunDir, family: Family, budget: Option<usize>) -> Result<SearchOutcome> {
    let (_, split) = load_bundle(cfg, dir)?;
    let h = &cfg.hyperopt;
    let plan = make_cv_plan(&split, h.n_folds, cfg.eval.past_len + cfg.eval.horizon)?;
    let out = dir.hyperopt.join(family.name());
    std::fs::create_dir_all(&out)?;
    let opts = SearchOptions {
        budget: budget.unwrap_or(h.budget),
        seed: cfg.seed()?,
        parallelism: h.parallelism,
        eval: EvalSettings {
            stride: h.stride,
            ..cfg.eval
        },
        ledger: Some(out.join("trials.csv")),
    };
    let outcome = run_search(&h.space(family), &plan, &opts)?;
    let b = &outcome.best;
    if !b.mean_score.is_finite() {
        return Err(CliError::Numeric(format!("every {} trial failed; first: {}", family.name(), b.status)));
    }
    let best = BestFile {
        trial_id: b.trial_id,
        mean_score: finite(b.mean_score),
        fold_scores: b.fold_scores.iter().map(|s| finite(*s)).collect(),
        config: b.config.clone(),
    };
    std::fs::write(dir.best_path(family), serde_json::to_string_pretty(&best)?)?;
    Ok(outcome)
}
