//! Budgeted selection rules.
//!
//! Every rule returns exactly `min(n_sel, J)` aspects. Ties are broken
//! toward the lexicographically smallest subset, which for ranked rules
//! means lower aspect indices first.

mod evaluator;
mod learned;

pub use evaluator::{LinearEvaluator, NpEvaluator, RewardEvaluator, TableEvaluator};
pub use learned::{fit_rule, LearnedRule, RuleConfig, RuleId};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{hstack, Dataset, Subset};
use crate::dgp::ENUMERATION_LIMIT;
use crate::error::{Error, Result};
use crate::regression::{residualize, ridge_fit, ridge_fit_multi, RidgeModel};
use crate::reward_np::RewardEstimate;

/// Relevance threshold applied to the predicted `s_{j,0}`.
pub const RELEVANCE_THRESHOLD: f64 = 0.5;

/// Residualized human columns with variance below this fraction of the raw
/// column's variance are treated as fully explained by `A`.
const EXPLAINED_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub subset: Subset,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub candidates: Vec<Candidate>,
    pub chosen: Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub subset: Subset,
    pub rule: String,
    pub trace: Vec<Step>,
    /// Set when the choice depended on the tie-break order.
    pub tie_break_applied: bool,
    pub notes: Vec<String>,
}

/// Maximizer of `score` over `candidates` in the given order, keeping the
/// first on ties. Returns the index and whether a tie with the best was seen.
fn argmax(scores: &[f64]) -> (usize, bool) {
    let mut best = 0;
    let mut tie = false;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
            tie = false;
        } else if s == scores[best] {
            tie = true;
        }
    }
    (best, tie)
}

fn evaluate_all<E: RewardEvaluator + ?Sized>(eval: &E, subsets: &[Subset]) -> Result<Vec<f64>> {
    subsets.par_iter().map(|p| eval.reward(p)).collect()
}

/// Exhaustive search over all subsets of size `min(n_sel, J)`.
pub fn select_bruteforce<E: RewardEvaluator + ?Sized>(eval: &E, n_sel: usize) -> Result<SelectionResult> {
    let j = eval.aspects();
    if j > ENUMERATION_LIMIT {
        return Err(Error::GuardLimit {
            aspects: j,
            limit: ENUMERATION_LIMIT,
        });
    }
    let subsets = Subset::all_of_size(j, n_sel.min(j));
    let scores = evaluate_all(eval, &subsets)?;
    let (best, tie) = argmax(&scores);
    let chosen = subsets[best].clone();
    Ok(SelectionResult {
        subset: chosen.clone(),
        rule: "bruteforce".into(),
        trace: vec![Step {
            candidates: subsets
                .into_iter()
                .zip(scores)
                .map(|(subset, score)| Candidate { subset, score })
                .collect(),
            chosen,
        }],
        tie_break_applied: tie,
        notes: vec![eval.describe()],
    })
}

/// Ranks by `scores` descending, lower index first on ties.
fn ranked(scores: &[f64], n_sel: usize) -> (Vec<usize>, bool) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let k = n_sel.min(scores.len());
    let tie = k > 0 && k < scores.len() && scores[order[k - 1]] == scores[order[k]];
    (order.into_iter().take(k).collect(), tie)
}

fn ranked_result(rule: &str, scores: &[f64], n_sel: usize, notes: Vec<String>) -> Result<SelectionResult> {
    let j = scores.len();
    let (picked, tie) = ranked(scores, n_sel);
    let subset = Subset::new(picked, j)?;
    Ok(SelectionResult {
        subset: subset.clone(),
        rule: rule.into(),
        trace: vec![Step {
            candidates: scores
                .iter()
                .enumerate()
                .map(|(i, &score)| Candidate {
                    subset: Subset::singleton(i),
                    score,
                })
                .collect(),
            chosen: subset,
        }],
        tie_break_applied: tie,
        notes,
    })
}

/// Top `n_sel` aspects by singleton reward.
pub fn select_singleton(singleton_rewards: &[f64], n_sel: usize) -> Result<SelectionResult> {
    if singleton_rewards.is_empty() {
        return Err(Error::InvalidArgument("select_singleton needs at least one aspect".into()));
    }
    ranked_result("singleton", singleton_rewards, n_sel, Vec::new())
}

/// Singleton rewards from an evaluator, then [`select_singleton`].
pub fn select_singleton_with<E: RewardEvaluator + ?Sized>(eval: &E, n_sel: usize) -> Result<SelectionResult> {
    let singles: Vec<Subset> = (0..eval.aspects()).map(Subset::singleton).collect();
    let scores = evaluate_all(eval, &singles)?;
    let mut r = select_singleton(&scores, n_sel)?;
    r.notes.push(eval.describe());
    Ok(r)
}

/// Forward greedy: repeatedly add the aspect with the largest reward of the
/// enlarged subset.
pub fn select_greedy<E: RewardEvaluator + ?Sized>(eval: &E, n_sel: usize) -> Result<SelectionResult> {
    let j = eval.aspects();
    if j == 0 {
        return Err(Error::InvalidArgument("select_greedy needs at least one aspect".into()));
    }
    let mut current = Subset::empty();
    let mut trace = Vec::new();
    let mut tie_any = false;
    for _ in 0..n_sel.min(j) {
        let options: Vec<Subset> = (0..j).filter(|&i| !current.contains(i)).map(|i| current.with(i)).collect();
        let scores = evaluate_all(eval, &options)?;
        let (best, tie) = argmax(&scores);
        tie_any |= tie;
        current = options[best].clone();
        trace.push(Step {
            candidates: options
                .into_iter()
                .zip(scores)
                .map(|(subset, score)| Candidate { subset, score })
                .collect(),
            chosen: current.clone(),
        });
    }
    Ok(SelectionResult {
        subset: current,
        rule: "greedy".into(),
        trace,
        tie_break_applied: tie_any,
        notes: vec![eval.describe()],
    })
}

/// Per-aspect Euclidean norm of the coefficient block on `H_⊥` when `Y` is
/// regressed on `(A, H_⊥)`.
pub fn importance_scores(ds: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    let mut perp = residualize(ds.h(), ds.a())?;
    let n = ds.n() as f64;
    let variance = |m: &DMatrix<f64>, c: usize| {
        let col = m.column(c);
        let mean = col.sum() / n;
        col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    };
    let mut kept = Vec::new();
    for c in 0..perp.ncols() {
        if variance(&perp, c) <= EXPLAINED_FRACTION * variance(ds.h(), c) {
            perp.column_mut(c).fill(0.0);
        } else {
            kept.push(c);
        }
    }
    let design = hstack(ds.a(), &perp.select_columns(&kept));
    let fit = ridge_fit(&design, ds.y(), lambda)?;
    let da = ds.blocks().a_dim();
    let mut sq = vec![0.0; ds.aspects()];
    for (k, &c) in kept.iter().enumerate() {
        sq[ds.blocks().aspect_of_h_column(c)] += fit.coefficients[da + k].powi(2);
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

/// Top `n_sel` aspects by [`importance_scores`].
pub fn select_importance(ds: &Dataset, n_sel: usize, lambda: f64) -> Result<SelectionResult> {
    let scores = importance_scores(ds, lambda)?;
    ranked_result("importance", &scores, n_sel, Vec::new())
}

/// Disagreement proxy used when no agreement columns are available:
/// `s_{j,0} = 1` and `s_{j,1} = 1 − d_j / max d` with `d_j = ‖A_j − H_j‖`
/// per row. Requires matching block widths.
pub fn agreement_proxy(ds: &Dataset) -> Result<DMatrix<f64>> {
    let blocks = ds.blocks();
    if blocks.a_widths() != blocks.h_widths() {
        return Err(Error::InvalidArgument(
            "the disagreement proxy needs equal AI and human block widths".into(),
        ));
    }
    let j = blocks.aspects();
    let mut d = DMatrix::zeros(ds.n(), j);
    for r in 0..ds.n() {
        for k in 0..j {
            d[(r, k)] = blocks
                .a_range(k)
                .zip(blocks.h_range(k))
                .map(|(a, h)| (ds.a()[(r, a)] - ds.h()[(r, h)]).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    let max = d.max();
    let mut s = DMatrix::from_element(ds.n(), 2 * j, 1.0);
    if max > 0.0 {
        for r in 0..ds.n() {
            for k in 0..j {
                s[(r, 2 * k + 1)] = 1.0 - d[(r, k)] / max;
            }
        }
    }
    Ok(s)
}

/// Ridge maps from `A` to every agreement column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementModel {
    pub models: Vec<RidgeModel>,
}

impl AgreementModel {
    /// Fits on the dataset's agreement columns, or on the proxy when
    /// `use_proxy` is set and the dataset has none.
    pub fn fit(ds: &Dataset, lambda: f64, use_proxy: bool) -> Result<Self> {
        let s = match ds.agreement() {
            Some(s) => s.clone(),
            None if use_proxy => agreement_proxy(ds)?,
            None => {
                return Err(Error::InvalidArgument(
                    "agreement rule needs agreement columns or the disagreement proxy".into(),
                ))
            }
        };
        Ok(AgreementModel {
            models: ridge_fit_multi(ds.a(), &s, lambda)?,
        })
    }

    pub fn aspects(&self) -> usize {
        self.models.len() / 2
    }

    /// Predicted `(s_{j,0}, s_{j,1})` per aspect at one row of `A`.
    pub fn predict_row(&self, a_row: &[f64]) -> Vec<(f64, f64)> {
        (0..self.aspects())
            .map(|j| (self.models[2 * j].predict_row(a_row), self.models[2 * j + 1].predict_row(a_row)))
            .collect()
    }

    /// Mean predictions over the rows of `a`.
    pub fn predict_mean(&self, a: &DMatrix<f64>) -> Vec<(f64, f64)> {
        let n = a.nrows() as f64;
        let mut acc = vec![(0.0, 0.0); self.aspects()];
        for r in 0..a.nrows() {
            let row: Vec<f64> = a.row(r).iter().copied().collect();
            for (slot, (s0, s1)) in acc.iter_mut().zip(self.predict_row(&row)) {
                slot.0 += s0 / n;
                slot.1 += s1 / n;
            }
        }
        acc
    }

    /// Ranks unmasked aspects (relevance `≥ 0.5`) by predicted disagreement
    /// `1 − s_{j,1}`, then masked aspects by the same score.
    pub fn select(predicted: &[(f64, f64)], n_sel: usize) -> Result<SelectionResult> {
        let j = predicted.len();
        let mut order: Vec<usize> = (0..j).collect();
        let key = |i: usize| (predicted[i].0 < RELEVANCE_THRESHOLD, -(1.0 - predicted[i].1));
        order.sort_by(|&a, &b| {
            let (ma, sa) = key(a);
            let (mb, sb) = key(b);
            ma.cmp(&mb).then(sa.total_cmp(&sb)).then(a.cmp(&b))
        });
        let k = n_sel.min(j);
        let tie = k > 0 && k < j && key(order[k - 1]) == key(order[k]);
        let masked: Vec<usize> = (0..j).filter(|&i| predicted[i].0 < RELEVANCE_THRESHOLD).collect();
        let subset = Subset::new(order.into_iter().take(k).collect(), j)?;
        Ok(SelectionResult {
            subset: subset.clone(),
            rule: "agreement".into(),
            trace: vec![Step {
                candidates: (0..j)
                    .map(|i| Candidate {
                        subset: Subset::singleton(i),
                        score: 1.0 - predicted[i].1,
                    })
                    .collect(),
                chosen: subset,
            }],
            tie_break_applied: tie,
            notes: vec![format!("masked by relevance < {RELEVANCE_THRESHOLD}: {masked:?}")],
        })
    }
}

/// Learns `A → S` and selects by the row-averaged predicted disagreement.
pub fn select_agreement(ds: &Dataset, n_sel: usize, lambda: f64, use_proxy: bool) -> Result<SelectionResult> {
    let model = AgreementModel::fit(ds, lambda, use_proxy)?;
    AgreementModel::select(&model.predict_mean(ds.a()), n_sel)
}

/// `argmax_π R̂_π(z)` over all subsets of size `min(n_sel, J)`, each of
/// which must have an entry in `reward_functions`.
pub fn select_adaptive(
    z: &[f64],
    reward_functions: &BTreeMap<Subset, RewardEstimate>,
    aspects: usize,
    n_sel: usize,
) -> Result<SelectionResult> {
    let candidates = Subset::all_of_size(aspects, n_sel.min(aspects));
    let scores = candidates
        .iter()
        .map(|p| {
            reward_functions
                .get(p)
                .ok_or_else(|| Error::MissingCandidate(p.clone()))?
                .eval(z)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (best, tie) = argmax(&scores);
    let chosen = candidates[best].clone();
    Ok(SelectionResult {
        subset: chosen.clone(),
        rule: "adaptive".into(),
        trace: vec![Step {
            candidates: candidates
                .into_iter()
                .zip(scores)
                .map(|(subset, score)| Candidate { subset, score })
                .collect(),
            chosen,
        }],
        tie_break_applied: tie,
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
