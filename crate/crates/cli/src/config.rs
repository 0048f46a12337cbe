use std::path::{Path, PathBuf};

use clap::ValueEnum;
use poolid::data::{benchmark_schema, ChannelSpec, PrepareOptions};
use poolid::eval::EvalSettings;
use poolid::hyperopt::{LssSpace, NlarxSpace, SearchSpace};
use poolid::linid::SubspaceOptions;
use poolid::nlarx::NlarxConfig;
use poolid::simulator::{PlantConfig, SuiteConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lss,
    Nlarx,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Lss => "lss",
            Family::Nlarx => "nlarx",
        }
    }
}

/// Unset directories resolve inside the run directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub bundle_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub suite: SuiteConfig,
    pub plant: PlantConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    /// Train the configuration selected by `hyperopt` instead of the one
    /// below.
    pub use_best: bool,
    pub lss: SubspaceOptions,
    pub nlarx: NlarxConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            family: Family::Lss,
            use_best: false,
            lss: SubspaceOptions::default(),
            nlarx: NlarxConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperoptSection {
    pub budget: usize,
    pub n_folds: usize,
    pub parallelism: usize,
    /// Anchor stride when scoring folds.
    pub stride: usize,
    pub lss: LssSpace,
    pub nlarx: NlarxSpace,
}

impl Default for HyperoptSection {
    fn default() -> Self {
        Self {
            budget: 8,
            n_folds: 4,
            parallelism: 1,
            stride: 1,
            lss: LssSpace::default(),
            nlarx: NlarxSpace::default(),
        }
    }
}

impl HyperoptSection {
    pub fn space(&self, family: Family) -> SearchSpace {
        match family {
            Family::Lss => SearchSpace::Lss(self.lss.clone()),
            Family::Nlarx => SearchSpace::Nlarx(self.nlarx.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required, from the file, `--seed` or the environment.
    pub seed: Option<u64>,
    pub run_id: Option<String>,
    /// Channel list; the benchmark schema when empty.
    pub schema: Vec<ChannelSpec>,
    pub paths: Paths,
    pub simulation: SimulationSection,
    pub prepare: PrepareOptions,
    pub model: ModelSection,
    pub eval: EvalSettings,
    pub hyperopt: HyperoptSection,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn schema(&self) -> Vec<ChannelSpec> {
        if self.schema.is_empty() {
            benchmark_schema()
        } else {
            self.schema.clone()
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (config `seed`, --seed or POOLID_SEED)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return bad(format!("run id `{id}` is not a plain directory name"));
            }
        }
        if self.eval.horizon == 0 || self.eval.past_len == 0 || self.eval.stride == 0 {
            return bad("eval horizon, past_len and stride must be positive".into());
        }
        if self.prepare.resample_factor == 0 {
            return bad("resample_factor must be positive".into());
        }
        self.model.lss.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model.nlarx.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let h = &self.hyperopt;
        if h.budget == 0 || h.n_folds < 2 || h.parallelism == 0 || h.stride == 0 {
            return bad("hyperopt needs budget >= 1, n_folds >= 2, parallelism >= 1 and stride >= 1".into());
        }
        for f in [Family::Lss, Family::Nlarx] {
            h.space(f).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Artifact locations of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDir {
    pub root: PathBuf,
    pub data: PathBuf,
    pub manifest: PathBuf,
    pub bundle: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
    pub hyperopt: PathBuf,
}

impl RunDir {
    pub fn resolve(cfg: &RunConfig) -> Self {
        let out = cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
        let id = cfg
            .run_id
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
        let root = out.join(id);
        let data = cfg.paths.data_dir.clone().unwrap_or_else(|| root.join("data"));
        Self {
            manifest: cfg.paths.manifest.clone().unwrap_or_else(|| data.join("manifest.toml")),
            bundle: cfg.paths.bundle_dir.clone().unwrap_or_else(|| root.join("bundle")),
            models: root.join("models"),
            reports: root.join("reports"),
            hyperopt: root.join("hyperopt"),
            data,
            root,
        }
    }

    pub fn model_path(&self, family: Family) -> PathBuf {
        self.models.join(format!("{}.json", family.name()))
    }

    pub fn best_path(&self, family: Family) -> PathBuf {
        self.hyperopt.join(family.name()).join("best.json")
    }
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}
