use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    select_bruteforce, select_greedy, select_importance, select_singleton, select_singleton_with, AgreementModel,
    LinearEvaluator, NpEvaluator, SelectionResult,
};
use crate::data::{ContextMap, Dataset, Subset};
use crate::error::{Error, Result};
use crate::regression::make_folds;
use crate::reward_np::{estimate_reward_np_with_folds, NpConfig, RewardEstimate};

/// Stable rule identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    BruteforceLinear,
    SingletonLinear,
    SingletonNp,
    SingletonNpAdaptive,
    GreedyLinear,
    Importance,
    Agreement,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::BruteforceLinear,
        RuleId::SingletonLinear,
        RuleId::SingletonNp,
        RuleId::SingletonNpAdaptive,
        RuleId::GreedyLinear,
        RuleId::Importance,
        RuleId::Agreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::BruteforceLinear => "bruteforce-linear",
            RuleId::SingletonLinear => "singleton-linear",
            RuleId::SingletonNp => "singleton-np",
            RuleId::SingletonNpAdaptive => "singleton-np-adaptive",
            RuleId::GreedyLinear => "greedy-linear",
            RuleId::Importance => "importance",
            RuleId::Agreement => "agreement",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleId::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<&str> = RuleId::ALL.iter().map(|r| r.name()).collect();
            Error::InvalidArgument(format!("unknown rule `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Settings shared by all rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// Ridge penalty of the linear reward, the importance fit and the
    /// agreement map.
    pub lambda_reward: f64,
    /// Cross-fitting settings of the nonparametric rewards.
    pub np: NpConfig,
    /// Synthesize agreement columns from `‖A_j − H_j‖` when the data has
    /// none.
    pub agreement_proxy: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            lambda_reward: 1.0,
            np: NpConfig::default(),
            agreement_proxy: false,
        }
    }
}

/// A rule fitted on training rows, ready to choose subsets for new rows.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnedRule {
    /// One subset for every row.
    Fixed { result: SelectionResult },
    /// Top singletons by contextual reward evaluated at each row.
    AdaptiveSingleton {
        estimates: Vec<RewardEstimate>,
        context: ContextMap,
        n_sel: usize,
    },
    /// Top aspects by disagreement predicted from each row's AI signals.
    Agreement { model: AgreementModel, n_sel: usize },
}

impl LearnedRule {
    pub fn is_adaptive(&self) -> bool {
        !matches!(self, LearnedRule::Fixed { .. })
    }

    /// The common selection of a non-adaptive rule.
    pub fn fixed(&self) -> Option<&SelectionResult> {
        match self {
            LearnedRule::Fixed { result } => Some(result),
            _ => None,
        }
    }

    pub fn select_row(&self, a_row: &[f64]) -> Result<Subset> {
        match self {
            LearnedRule::Fixed { result } => Ok(result.subset.clone()),
            LearnedRule::AdaptiveSingleton {
                estimates,
                context,
                n_sel,
            } => {
                let z = context.apply_row(a_row);
                let scores = estimates
                    .iter()
                    .map(|e| e.eval(z.as_slice()))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(select_singleton(&scores, *n_sel)?.subset)
            }
            LearnedRule::Agreement { model, n_sel } => {
                Ok(AgreementModel::select(&model.predict_row(a_row), *n_sel)?.subset)
            }
        }
    }

    /// Selections for every row of a dataset.
    pub fn select_rows(&self, ds: &Dataset) -> Result<Vec<Subset>> {
        (0..ds.n())
            .map(|r| {
                let row: Vec<f64> = ds.a().row(r).iter().copied().collect();
                self.select_row(&row)
            })
            .collect()
    }
}

/// Fits `rule` on `ds` for budget `n_sel`.
pub fn fit_rule(rule: RuleId, ds: &Dataset, n_sel: usize, cfg: &RuleConfig) -> Result<LearnedRule> {
    let fixed = |mut result: SelectionResult| {
        result.rule = rule.name().to_string();
        Ok(LearnedRule::Fixed { result })
    };
    match rule {
        RuleId::BruteforceLinear => fixed(select_bruteforce(&LinearEvaluator::new(ds, cfg.lambda_reward)?, n_sel)?),
        RuleId::SingletonLinear => {
            fixed(select_singleton_with(&LinearEvaluator::new(ds, cfg.lambda_reward)?, n_sel)?)
        }
        RuleId::GreedyLinear => fixed(select_greedy(&LinearEvaluator::new(ds, cfg.lambda_reward)?, n_sel)?),
        RuleId::SingletonNp => fixed(select_singleton_with(&NpEvaluator::new(ds, cfg.np)?, n_sel)?),
        RuleId::SingletonNpAdaptive => {
            let folds = make_folds(ds.n(), cfg.np.folds, cfg.np.seed)?;
            let np = NpConfig { adaptive: true, ..cfg.np };
            let estimates = (0..ds.aspects())
                .map(|j| estimate_reward_np_with_folds(ds, &Subset::singleton(j), &folds, &np))
                .collect::<Result<Vec<_>>>()?;
            Ok(LearnedRule::AdaptiveSingleton {
                estimates,
                context: cfg.np.context,
                n_sel,
            })
        }
        RuleId::Importance => fixed(select_importance(ds, n_sel, cfg.lambda_reward)?),
        RuleId::Agreement => Ok(LearnedRule::Agreement {
            model: AgreementModel::fit(ds, cfg.lambda_reward, cfg.agreement_proxy)?,
            n_sel,
        }),
    }
}
