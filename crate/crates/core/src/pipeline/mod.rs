//! End-to-end evaluation: repeated train/test splits with out-of-sample
//! selection on training rows, imputation of unqueried aspects, a
//! downstream ridge fit and error metrics, alongside full-information and
//! AI-only baselines.

mod config;
mod experiments;
mod metrics;
mod report;
mod table;

pub use config::{DataSource, PipelineConfig, DATA_STREAM};
pub use experiments::{
    bias_scaling_experiment, coverage_experiment, BiasPoint, BiasScalingReport, CoverageReport, Perturbation,
};
pub use metrics::{metrics, Metrics, MetricsSummary, Summary};
pub use report::{round_significant, to_json, REPORT_DIGITS};
pub use table::{reward_table, RewardTable, TableRow, REFERENCE_CONTEXT};

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{build_feature_matrix, fit_imputer, hstack, Dataset, Subset};
use crate::dgp::stream_seed;
use crate::error::{Error, Result};
use crate::regression::{make_folds, ridge_fit, ridge_predict, RidgeModel};
use crate::selection::{fit_rule, LearnedRule};

/// Downstream fit on the columns of the feature matrix that vary on the
/// training rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DownstreamModel {
    pub columns: Vec<usize>,
    pub model: RidgeModel,
}

impl DownstreamModel {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Self> {
        let columns: Vec<usize> = (0..x.ncols())
            .filter(|&c| {
                let col = x.column(c);
                col.max() > col.min()
            })
            .collect();
        let model = ridge_fit(&x.select_columns(&columns), y, lambda)?;
        Ok(DownstreamModel { columns, model })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        ridge_predict(&self.model, &x.select_columns(&self.columns))
    }
}

/// How often each subset was selected for a group of rows, keyed by the
/// subset's display form.
pub type SelectionCounts = BTreeMap<String, usize>;

fn count(selections: &[Subset]) -> SelectionCounts {
    let mut out = SelectionCounts::new();
    for s in selections {
        *out.entry(s.to_string()).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Baselines {
    /// Features with nothing queried: AI signals plus imputed human signals.
    pub a_only: Metrics,
    /// Ridge on the human signals.
    pub h_only: Metrics,
    /// Ridge on AI and human signals.
    pub ah_full: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitResult {
    pub n_train: usize,
    pub n_test: usize,
    pub rule: Metrics,
    pub baselines: Baselines,
    /// Selections for training rows, one entry per outer fold.
    pub train_selections: Vec<SelectionCounts>,
    pub test_selections: SelectionCounts,
    pub downstream: DownstreamModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub split: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SplitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub completed_splits: usize,
    pub rule: MetricsSummary,
    pub a_only: MetricsSummary,
    pub h_only: MetricsSummary,
    pub ah_full: MetricsSummary,
}

impl Aggregate {
    pub fn of(splits: &[SplitOutcome]) -> Aggregate {
        let done: Vec<&SplitResult> = splits.iter().filter_map(|s| s.result.as_ref()).collect();
        let pick = |f: fn(&SplitResult) -> Metrics| MetricsSummary::of(&done.iter().map(|r| f(r)).collect::<Vec<_>>());
        Aggregate {
            completed_splits: done.len(),
            rule: pick(|r| r.rule),
            a_only: pick(|r| r.baselines.a_only),
            h_only: pick(|r| r.baselines.h_only),
            ah_full: pick(|r| r.baselines.ah_full),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub effective_rule: String,
    pub n_rows: usize,
    pub aspects: usize,
    /// Split `s` uses seed `stream_seed(config.seed, s)`.
    pub seed_derivation: String,
    pub complete: bool,
    pub incomplete_splits: Vec<usize>,
    pub aggregate: Aggregate,
    pub splits: Vec<SplitOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Training and test rows of split `split_seed`: a seeded shuffle, the
/// first `round(test_fraction · N)` rows going to test. Both lists sorted.
pub fn split_rows(n: usize, test_fraction: f64, split_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test + 2 > n {
        return Err(Error::InsufficientData {
            context: "train/test split",
            needed: 3,
            found: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Runs one split on a dataset: selection, imputation, downstream fit and
/// scoring, plus baselines.
pub fn run_split(ds: &Dataset, cfg: &PipelineConfig, split_seed: u64) -> Result<SplitResult> {
    let (train_rows, test_rows) = split_rows(ds.n(), cfg.test_fraction, split_seed)?;
    let train = ds.select_rows(&train_rows);
    let test = ds.select_rows(&test_rows);
    let rule = cfg.effective_rule();

    // Out-of-sample selection for training rows.
    let outer = make_folds(train.n(), cfg.k_out, stream_seed(split_seed, 1))?;
    let mut train_sel = vec![Subset::empty(); train.n()];
    let mut train_counts = Vec::with_capacity(cfg.k_out);
    for fold in 0..cfg.k_out {
        let learn = train.select_rows(&outer.train_rows(fold));
        let learned = fit_rule(rule, &learn, cfg.n_sel, &cfg.rule_config(stream_seed(split_seed, 2 + fold as u64)))?;
        let rows = outer.test_rows(fold);
        let picked = learned.select_rows(&train.select_rows(&rows))?;
        for (&r, p) in rows.iter().zip(&picked) {
            train_sel[r] = p.clone();
        }
        train_counts.push(count(&picked));
    }
    let full: LearnedRule = fit_rule(
        rule,
        &train,
        cfg.n_sel,
        &cfg.rule_config(stream_seed(split_seed, 2 + cfg.k_out as u64)),
    )?;
    let test_sel = full.select_rows(&test)?;

    let imputer = fit_imputer(train.a(), train.h(), cfg.lambda_imp)?;
    let score = |tr_sel: &[Subset], te_sel: &[Subset]| -> Result<(Metrics, DownstreamModel)> {
        let xtr = build_feature_matrix(&train, tr_sel, &imputer)?;
        let xte = build_feature_matrix(&test, te_sel, &imputer)?;
        let model = DownstreamModel::fit(&xtr, train.y(), cfg.lambda)?;
        Ok((metrics(test.y(), &model.predict(&xte)?)?, model))
    };
    let (rule_metrics, downstream) = score(&train_sel, &test_sel)?;
    let (a_only, _) = score(&vec![Subset::empty(); train.n()], &vec![Subset::empty(); test.n()])?;
    let direct = |xtr: &DMatrix<f64>, xte: &DMatrix<f64>| -> Result<Metrics> {
        let model = DownstreamModel::fit(xtr, train.y(), cfg.lambda)?;
        metrics(test.y(), &model.predict(xte)?)
    };
    let h_only = direct(train.h(), test.h())?;
    let ah_full = direct(&hstack(train.a(), train.h()), &hstack(test.a(), test.h()))?;

    Ok(SplitResult {
        n_train: train.n(),
        n_test: test.n(),
        rule: rule_metrics,
        baselines: Baselines {
            a_only,
            h_only,
            ah_full,
        },
        train_selections: train_counts,
        test_selections: count(&test_sel),
        downstream,
    })
}

/// Runs every split of `cfg` on `ds`. Splits run in parallel; the report
/// does not depend on scheduling.
pub fn run_pipeline_on(ds: &Dataset, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let splits: Vec<SplitOutcome> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|s| {
            let seed = stream_seed(cfg.seed, s as u64);
            match run_split(ds, cfg, seed) {
                Ok(r) => SplitOutcome {
                    split: s,
                    seed,
                    result: Some(r),
                    error: None,
                },
                Err(e) => {
                    log::error!("split {s} failed: {e}");
                    SplitOutcome {
                        split: s,
                        seed,
                        result: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let incomplete: Vec<usize> = splits.iter().filter(|s| s.result.is_none()).map(|s| s.split).collect();
    Ok(EvalReport {
        schema_version: 1,
        config: cfg.clone(),
        effective_rule: cfg.effective_rule().name().into(),
        n_rows: ds.n(),
        aspects: ds.aspects(),
        seed_derivation: "split s uses stream_seed(seed, s); data simulation uses stream_seed(seed, 2^64 - 1)".into(),
        complete: incomplete.is_empty(),
        incomplete_splits: incomplete,
        aggregate: Aggregate::of(&splits),
        splits,
        runtime_seconds: None,
    })
}

/// Loads or simulates the data source and runs the pipeline. Runtime is
/// recorded only when `timing` is set, so that untimed reports are
/// reproducible byte for byte.
pub fn run_pipeline(cfg: &PipelineConfig, timing: bool) -> Result<EvalReport> {
    let start = Instant::now();
    cfg.validate()?;
    let ds = cfg.data.load(cfg.seed)?;
    let mut report = run_pipeline_on(&ds, cfg)?;
    if timing {
        report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    }
    Ok(report)
}
