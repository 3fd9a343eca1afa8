use std::collections::BTreeMap;

use crate::data::{Dataset, Subset};
use crate::error::{Error, Result};
use crate::regression::{make_folds, FoldPlan};
use crate::reward_linear::LinearMoments;
use crate::reward_np::{estimate_reward_np_with_folds, NpConfig};

/// A deterministic map from subsets to scalar rewards.
pub trait RewardEvaluator: Sync {
    fn aspects(&self) -> usize;

    fn reward(&self, pi: &Subset) -> Result<f64>;

    /// Short description of the estimator and its configuration.
    fn describe(&self) -> String;
}

/// Rewards looked up from an explicit table; subsets not listed take the
/// default, or are an error when there is none.
#[derive(Debug, Clone)]
pub struct TableEvaluator {
    aspects: usize,
    table: BTreeMap<Subset, f64>,
    default: Option<f64>,
}

impl TableEvaluator {
    pub fn new(aspects: usize, table: BTreeMap<Subset, f64>, default: Option<f64>) -> Self {
        TableEvaluator { aspects, table, default }
    }

    /// `R_π = Σ_{j∈π} w_j`.
    pub fn modular(weights: &[f64]) -> Self {
        let j = weights.len();
        let table = Subset::all_up_to(j, j)
            .into_iter()
            .map(|p| {
                let r = p.indices().iter().map(|&i| weights[i]).sum();
                (p, r)
            })
            .collect();
        TableEvaluator::new(j, table, None)
    }
}

impl RewardEvaluator for TableEvaluator {
    fn aspects(&self) -> usize {
        self.aspects
    }

    fn reward(&self, pi: &Subset) -> Result<f64> {
        pi.check(self.aspects)?;
        self.table
            .get(pi)
            .copied()
            .or(self.default)
            .ok_or_else(|| Error::MissingCandidate(pi.clone()))
    }

    fn describe(&self) -> String {
        format!("table ({} entries)", self.table.len())
    }
}

/// In-sample linear reward with ridge penalty `λ`, computed from the
/// dataset's moment matrix.
#[derive(Debug, Clone)]
pub struct LinearEvaluator {
    moments: LinearMoments,
    aspects: usize,
    lambda: f64,
}

impl LinearEvaluator {
    pub fn new(ds: &Dataset, lambda: f64) -> Result<Self> {
        crate::regression::check_lambda(lambda)?;
        Ok(LinearEvaluator {
            moments: LinearMoments::new(ds),
            aspects: ds.aspects(),
            lambda,
        })
    }
}

impl RewardEvaluator for LinearEvaluator {
    fn aspects(&self) -> usize {
        self.aspects
    }

    fn reward(&self, pi: &Subset) -> Result<f64> {
        self.moments.reward(pi, self.lambda)
    }

    fn describe(&self) -> String {
        format!("linear (lambda = {})", self.lambda)
    }
}

/// Non-adaptive cross-fitted pseudo-outcome reward. All subsets share one
/// fold plan drawn from the configured seed.
#[derive(Debug, Clone)]
pub struct NpEvaluator<'a> {
    ds: &'a Dataset,
    folds: FoldPlan,
    cfg: NpConfig,
}

impl<'a> NpEvaluator<'a> {
    pub fn new(ds: &'a Dataset, cfg: NpConfig) -> Result<Self> {
        let folds = make_folds(ds.n(), cfg.folds, cfg.seed)?;
        Ok(NpEvaluator {
            ds,
            folds,
            cfg: NpConfig { adaptive: false, ..cfg },
        })
    }

    pub fn folds(&self) -> &FoldPlan {
        &self.folds
    }
}

impl RewardEvaluator for NpEvaluator<'_> {
    fn aspects(&self) -> usize {
        self.ds.aspects()
    }

    fn reward(&self, pi: &Subset) -> Result<f64> {
        Ok(estimate_reward_np_with_folds(self.ds, pi, &self.folds, &self.cfg)?.value)
    }

    fn describe(&self) -> String {
        format!(
            "cross-fitted pseudo-outcome ({} folds, lambda = {}, seed = {})",
            self.cfg.folds, self.cfg.lambda, self.cfg.seed
        )
    }
}
