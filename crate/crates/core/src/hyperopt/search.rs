use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sample_configs, CvPlan, HyperoptError, Result, SearchSpace, TrialConfig};
use crate::eval::{criterion, horizon_rmse_sections, EvalSettings};
use crate::linid::{estimate_subspace, StateObserver};
use crate::nlarx::{train_sections, TrainingLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub budget: usize,
    pub seed: u64,
    /// Trials evaluated concurrently.
    pub parallelism: usize,
    /// Scoring of subspace models on validation folds. NLARX folds are
    /// scored by their training run's early-stopping criterion.
    pub eval: EvalSettings,
    /// Append-only trial ledger; existing rows are reused on resume.
    pub ledger: Option<PathBuf>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: 8,
            seed: 0,
            parallelism: 1,
            eval: EvalSettings::default(),
            ledger: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_id: usize,
    pub config: TrialConfig,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    pub n_params: usize,
    /// `ok`, or the first failure message.
    pub status: String,
    /// Per-fold NLARX training logs; empty for subspace trials and for
    /// trials read back from a ledger.
    pub logs: Vec<TrainingLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

/// Per-fold validation full-horizon accuracy. A failing fold scores `+∞`
/// and its message is returned.
pub fn score_trial(config: &TrialConfig, plan: &CvPlan, eval: &EvalSettings) -> (Vec<f64>, Option<String>, Vec<TrainingLog>) {
    let mut scores = Vec::new();
    let mut err = None;
    let mut logs = Vec::new();
    for i in 0..plan.folds.len() {
        let (tr, va) = plan.fold_frames(i);
        let r: Result<f64, String> = match config {
            TrialConfig::Lss(o) => (|| {
                let m = estimate_subspace(&tr, o).map_err(|e| e.to_string())?;
                let obs = StateObserver::new(&m, eval.past_len).map_err(|e| e.to_string())?;
                let named: Vec<(&str, _)> = va.iter().map(|f| ("validation", *f)).collect();
                let met = horizon_rmse_sections(&obs, &named, eval).map_err(|e| e.to_string())?;
                criterion(&met, 1, eval.horizon).map_err(|e| e.to_string())
            })(),
            TrialConfig::Nlarx(c) => train_sections(c, &tr, &va)
                .map(|(_, log)| {
                    let s = log.best_val_acc;
                    logs.push(log);
                    s
                })
                .map_err(|e| e.to_string()),
        };
        match r {
            Ok(s) if s.is_finite() => scores.push(s),
            Ok(s) => {
                err.get_or_insert_with(|| format!("fold {}: score {s}", i + 1));
                scores.push(f64::INFINITY);
            }
            Err(e) => {
                err.get_or_insert_with(|| format!("fold {}: {e}", i + 1));
                scores.push(f64::INFINITY);
            }
        }
    }
    (scores, err, logs)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn header(config: &TrialConfig, n_folds: usize) -> Vec<String> {
    let mut h = vec!["trial_id".to_string(), "family".into()];
    h.extend(config.fields().into_iter().map(|(k, _)| k));
    h.extend((1..=n_folds).map(|f| format!("fold_{f}")));
    h.extend(["mean".into(), "n_params".into(), "status".into()]);
    h
}

fn row(t: &TrialResult) -> Vec<String> {
    let mut r = vec![t.trial_id.to_string(), t.config.family().to_string()];
    r.extend(t.config.fields().into_iter().map(|(_, v)| v));
    r.extend(t.fold_scores.iter().map(|s| s.to_string()));
    r.extend([t.mean_score.to_string(), t.n_params.to_string(), t.status.clone()]);
    r
}

/// Completed rows of an existing ledger that agree with `configs`. Rows
/// that do not parse (an interrupted write) are dropped.
fn read_ledger(path: &Path, configs: &[TrialConfig], n_folds: usize) -> Result<BTreeMap<usize, TrialResult>> {
    let mut out = BTreeMap::new();
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let want = header(&configs[0], n_folds);
    let got: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if got != want {
        return Err(HyperoptError::Ledger(format!("{} has header {got:?}, expected {want:?}", path.display())));
    }
    for rec in rd.records() {
        let Ok(rec) = rec else { continue };
        if rec.len() != want.len() {
            continue;
        }
        let Ok(id) = rec[0].parse::<usize>() else { continue };
        let Some(config) = configs.get(id) else { continue };
        let fresh = TrialResult {
            trial_id: id,
            config: config.clone(),
            fold_scores: Vec::new(),
            mean_score: 0.0,
            n_params: 0,
            status: String::new(),
            logs: Vec::new(),
        };
        let expect = row(&fresh);
        let nf = 2 + config.fields().len();
        if rec.iter().take(nf).ne(expect.iter().take(nf).map(String::as_str)) {
            return Err(HyperoptError::Ledger(format!(
                "trial {id} in {} was run with a different configuration",
                path.display()
            )));
        }
        let nums: Option<Vec<f64>> = (nf..nf + n_folds + 1).map(|i| rec[i].parse().ok()).collect();
        let (Some(nums), Ok(n_params)) = (nums, rec[nf + n_folds + 1].parse()) else { continue };
        out.insert(
            id,
            TrialResult {
                fold_scores: nums[..n_folds].to_vec(),
                mean_score: nums[n_folds],
                n_params,
                status: rec[nf + n_folds + 2].to_string(),
                ..fresh
            },
        );
    }
    Ok(out)
}

fn write_rows(path: &Path, head: Option<&[String]>, rows: &[&TrialResult]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(head.is_none()).write(true).truncate(head.is_some()).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if let Some(h) = head {
        w.write_record(h)?;
    }
    for t in rows {
        w.write_record(row(t))?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluates `budget` sampled configurations on every fold of `plan` and
/// returns the best by mean validation score, ties broken by fewer
/// parameters and then by configuration text. Trials run in batches of
/// `parallelism`; results and ledger rows are ordered by trial id.
pub fn run_search(space: &SearchSpace, plan: &CvPlan, opts: &SearchOptions) -> Result<SearchOutcome> {
    let configs = sample_configs(space, opts.budget, opts.seed)?;
    let n_folds = plan.folds.len();
    let Some(first) = plan.sections.first() else {
        return Err(HyperoptError::Insufficient("empty cross-validation plan".into()));
    };
    let (n_u, n_y) = (first.frame.n_inputs(), first.frame.n_outputs());
    let mut done = BTreeMap::new();
    if let Some(path) = &opts.ledger {
        if path.exists() {
            done = read_ledger(path, &configs, n_folds)?;
        }
        let kept: Vec<&TrialResult> = done.values().collect();
        write_rows(path, Some(&header(&configs[0], n_folds)), &kept)?;
        if !done.is_empty() {
            log::info!("resuming search: {} of {} trials already in {}", done.len(), configs.len(), path.display());
        }
    }
    let pending: Vec<usize> = (0..configs.len()).filter(|i| !done.contains_key(i)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| HyperoptError::Invalid(e.to_string()))?;
    for batch in pending.chunks(opts.parallelism.max(1)) {
        let results: Vec<TrialResult> = pool.install(|| {
            use rayon::prelude::*;
            batch
                .par_iter()
                .map(|&id| {
                    let config = configs[id].clone();
                    let (fold_scores, err, logs) = score_trial(&config, plan, &opts.eval);
                    TrialResult {
                        trial_id: id,
                        n_params: config.n_params(n_u, n_y),
                        mean_score: mean(&fold_scores),
                        fold_scores,
                        status: err.unwrap_or_else(|| "ok".into()),
                        config,
                        logs,
                    }
                })
                .collect()
        });
        for r in &results {
            log::info!("trial {} ({}): mean {:.5} [{}]", r.trial_id, r.config.family(), r.mean_score, r.status);
        }
        if let Some(path) = &opts.ledger {
            write_rows(path, None, &results.iter().collect::<Vec<_>>())?;
        }
        for r in results {
            done.insert(r.trial_id, r);
        }
    }
    let trials: Vec<TrialResult> = done.into_values().collect();
    let best = trials
        .iter()
        .min_by(|a, b| {
            a.mean_score
                .total_cmp(&b.mean_score)
                .then(a.n_params.cmp(&b.n_params))
                .then_with(|| a.config.key().cmp(&b.config.key()))
        })
        .cloned()
        .expect("budget is at least one");
    Ok(SearchOutcome { best, trials })
}
