use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, ContextMap, Dataset, DatasetSchema};
use crate::dgp::{sample, stream_seed, DgpSpec, Preset};
use crate::error::{Error, Result};
use crate::reward_np::{NpConfig, SecondStage};
use crate::selection::{RuleConfig, RuleId};

/// Stream index reserved for simulating data, distinct from every split
/// index.
pub const DATA_STREAM: u64 = u64::MAX;

/// Where the pipeline gets its rows. Exactly one of `dataset`, `dgp` and
/// `preset` must be set; the synthetic sources also need `n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    /// CSV file with a `.schema.toml` sidecar.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// TOML file holding a [`DgpSpec`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp: Option<PathBuf>,
    /// Shipped synthetic design.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Aspect count for `preset` (default 10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aspects: Option<usize>,
    /// Rows to simulate for `dgp` or `preset`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl DataSource {
    fn check(&self) -> Result<()> {
        let set = [self.dataset.is_some(), self.dgp.is_some(), self.preset.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if set != 1 {
            return Err(Error::InvalidArgument(
                "data source needs exactly one of `dataset`, `dgp` or `preset`".into(),
            ));
        }
        if self.dataset.is_none() && self.n.is_none() {
            return Err(Error::InvalidArgument("synthetic data source needs `n`".into()));
        }
        Ok(())
    }

    /// The synthetic specification, if this source is synthetic.
    pub fn spec(&self) -> Result<Option<DgpSpec>> {
        if let Some(path) = &self.dgp {
            return Ok(Some(DgpSpec::load(path)?));
        }
        if let Some(name) = &self.preset {
            return Ok(Some(name.parse::<Preset>()?.build(self.aspects.unwrap_or(10))?));
        }
        Ok(None)
    }

    /// Loads or simulates the rows; simulation uses `stream_seed(seed,
    /// DATA_STREAM)`.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        self.check()?;
        if let Some(path) = &self.dataset {
            let schema = DatasetSchema::load(DatasetSchema::sidecar_path(path))?;
            return load_dataset(path, &schema);
        }
        let spec = self.spec()?.expect("checked above");
        sample(&spec, self.n.expect("checked above"), stream_seed(seed, DATA_STREAM))
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.dgp].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Full description of a pipeline run. Every field except `rule`, `n_sel`,
/// `seed` and the data source has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub rule: RuleId,
    pub n_sel: usize,
    pub seed: u64,
    /// Downstream ridge penalty.
    #[serde(default = "one")]
    pub lambda: f64,
    /// Penalty of reward, importance and agreement fits.
    #[serde(default = "one")]
    pub lambda_reward: f64,
    /// Penalty of the imputation model.
    #[serde(default = "one")]
    pub lambda_imp: f64,
    /// Inner cross-fitting folds of the nonparametric rewards.
    #[serde(default = "five")]
    pub folds: usize,
    /// Outer folds used for out-of-sample selection on training rows.
    #[serde(default = "five")]
    pub k_out: usize,
    #[serde(default = "test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "twenty")]
    pub n_splits: usize,
    /// Use the contextual reward for the nonparametric singleton rule.
    #[serde(default)]
    pub adaptive: bool,
    #[serde(default)]
    pub second_stage: SecondStage,
    #[serde(default)]
    pub context: ContextMap,
    #[serde(default)]
    pub agreement_proxy: bool,
    pub data: DataSource,
}

fn one() -> f64 {
    1.0
}
fn five() -> usize {
    5
}
fn twenty() -> usize {
    20
}
fn test_fraction() -> f64 {
    0.2
}

impl PipelineConfig {
    /// Defaults for everything but the required fields.
    pub fn new(rule: RuleId, n_sel: usize, seed: u64, data: DataSource) -> Self {
        PipelineConfig {
            rule,
            n_sel,
            seed,
            lambda: 1.0,
            lambda_reward: 1.0,
            lambda_imp: 1.0,
            folds: 5,
            k_out: 5,
            test_fraction: 0.2,
            n_splits: 20,
            adaptive: false,
            second_stage: SecondStage::default(),
            context: ContextMap::Identity,
            agreement_proxy: false,
            data,
        }
    }

    /// Reads a TOML file; relative data paths are taken relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        cfg.data.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.folds < 2 || self.k_out < 2 {
            return Err(Error::InvalidArgument("fold counts must be at least 2".into()));
        }
        if self.n_splits == 0 {
            return Err(Error::InvalidArgument("n_splits must be positive".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_reward", self.lambda_reward),
            ("lambda_imp", self.lambda_imp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.adaptive && !matches!(self.rule, RuleId::SingletonNp | RuleId::SingletonNpAdaptive) {
            return Err(Error::InvalidArgument(format!(
                "the adaptive flag applies to nonparametric rules, not `{}`",
                self.rule
            )));
        }
        self.data.check()
    }

    /// The rule actually fitted, after applying the adaptive flag.
    pub fn effective_rule(&self) -> RuleId {
        match self.rule {
            RuleId::SingletonNp if self.adaptive => RuleId::SingletonNpAdaptive,
            r => r,
        }
    }

    /// Rule settings with the nonparametric seed set to `seed`.
    pub fn rule_config(&self, seed: u64) -> RuleConfig {
        RuleConfig {
            lambda_reward: self.lambda_reward,
            np: NpConfig {
                folds: self.folds,
                lambda: self.lambda_reward,
                second_stage: self.second_stage,
                adaptive: false,
                context: self.context,
                seed,
            },
            agreement_proxy: self.agreement_proxy,
        }
    }
}
