use serde::Serialize;

use super::{run_pipeline_on, MetricsSummary, PipelineConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::reward_linear::LinearMoments;
use crate::selection::{fit_rule, RuleId};

/// Reference values from a large-scale deployment of budgeted human
/// querying, kept as context for reading tables. They are not targets.
pub const REFERENCE_CONTEXT: [(&str, f64); 3] = [
    ("direct-prompt MAE of an LLM judge", 1.9063),
    ("MAE of a model trained on AI signals only (approx.)", 0.7),
    ("MAE after one human query per instance (upper bound)", 0.55),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub rule: String,
    pub n_sel: usize,
    /// Row-averaged in-sample linear reward (`λ = 0` when the Gram allows,
    /// else the configured reward penalty) of the subsets the rule selects
    /// when fitted on the whole dataset.
    pub in_sample_reward: f64,
    pub metrics: MetricsSummary,
    pub completed_splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardTable {
    pub context: Vec<(String, f64)>,
    pub rows: Vec<TableRow>,
}

/// Metric-versus-budget rows for every rule and budget, each running the
/// full pipeline under `base` with the rule and budget replaced.
pub fn reward_table(ds: &Dataset, rules: &[RuleId], budgets: &[usize], base: &PipelineConfig) -> Result<RewardTable> {
    let moments = LinearMoments::new(ds);
    let mut rows = Vec::new();
    for &rule in rules {
        for &n_sel in budgets {
            let cfg = PipelineConfig {
                rule,
                n_sel,
                adaptive: false,
                ..base.clone()
            };
            let report = run_pipeline_on(ds, &cfg)?;
            let learned = fit_rule(rule, ds, n_sel, &cfg.rule_config(base.seed))?;
            let picked = learned.select_rows(ds)?;
            let mut total = 0.0;
            for p in &picked {
                total += moments.reward(p, 0.0).or_else(|_| moments.reward(p, base.lambda_reward))?;
            }
            rows.push(TableRow {
                rule: rule.name().into(),
                n_sel,
                in_sample_reward: total / picked.len() as f64,
                metrics: report.aggregate.rule,
                completed_splits: report.aggregate.completed_splits,
            });
        }
    }
    Ok(RewardTable {
        context: REFERENCE_CONTEXT.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        rows,
    })
}
