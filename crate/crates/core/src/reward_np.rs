//! Nonparametric rewards from cross-fitted orthogonal pseudo-outcomes.
//!
//! With an out-of-fold first stage `m̂`, the pseudo-outcome
//! `φ = 2Y·m̂ − m̂²` has conditional mean `E[m²|Z]` up to a term quadratic in
//! the first-stage error. Averaging `φ` estimates the non-adaptive reward;
//! regressing it on a context `Z` estimates the contextual reward.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ContextMap, Dataset, Subset};
use crate::error::{Error, Result};
use crate::regression::{cross_fit_oof, make_folds, ridge_fit, FoldPlan, RidgeModel};

/// Columns whose variance falls below this are treated as constant by the
/// second stage.
const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomes {
    pub values: DVector<f64>,
    pub folds: Option<FoldPlan>,
    pub lambda: Option<f64>,
}

impl PseudoOutcomes {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    NonAdaptive,
    Adaptive,
}

/// Second-stage regression of `φ` on `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SecondStage {
    Ridge { lambda: f64 },
}

impl Default for SecondStage {
    fn default() -> Self {
        SecondStage::Ridge { lambda: 1.0 }
    }
}

/// Fitted contextual reward `z ↦ R̂_π(z)`. Context columns that were
/// constant in the fit are ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveReward {
    pub width: usize,
    pub columns: Vec<usize>,
    pub model: RidgeModel,
}

impl AdaptiveReward {
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.width {
            return Err(Error::Dimension {
                context: "adaptive reward context width",
                expected: self.width,
                found: z.len(),
            });
        }
        let x: Vec<f64> = self.columns.iter().map(|&c| z[c]).collect();
        Ok(self.model.predict_row(&x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardEstimate {
    pub kind: RewardKind,
    pub subset: Subset,
    /// Mean of the pseudo-outcomes; for the adaptive kind, the value used
    /// when no context is supplied.
    pub value: f64,
    pub std_error: Option<f64>,
    pub n_used: usize,
    pub function: Option<AdaptiveReward>,
    /// Set when an adaptive fit was requested but every context column was
    /// constant, so the estimate fell back to the non-adaptive average.
    pub degenerate_context: bool,
}

impl RewardEstimate {
    /// `R̂_π(z)`; the non-adaptive estimate ignores `z`.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        match &self.function {
            Some(f) => f.eval(z),
            None => Ok(self.value),
        }
    }
}

/// `φᵢ = 2yᵢm̂ᵢ − m̂ᵢ²`.
pub fn pseudo_outcomes(y: &DVector<f64>, m_oof: &DVector<f64>) -> Result<PseudoOutcomes> {
    if y.len() != m_oof.len() {
        return Err(Error::Dimension {
            context: "pseudo_outcomes lengths",
            expected: y.len(),
            found: m_oof.len(),
        });
    }
    for (i, (a, b)) in y.iter().zip(m_oof.iter()).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite input at row {i} of pseudo_outcomes"
            )));
        }
    }
    Ok(PseudoOutcomes {
        values: y.zip_map(m_oof, |y, m| 2.0 * y * m - m * m),
        folds: None,
        lambda: None,
    })
}

fn mean_and_se(v: &DVector<f64>) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `R̂_π = mean(φ)` with standard error `sd(φ)/√N`.
pub fn reward_nonadaptive(phi: &PseudoOutcomes, subset: &Subset) -> Result<RewardEstimate> {
    if phi.len() < 2 {
        return Err(Error::InsufficientData {
            context: "reward_nonadaptive",
            needed: 2,
            found: phi.len(),
        });
    }
    let (value, se) = mean_and_se(&phi.values);
    Ok(RewardEstimate {
        kind: RewardKind::NonAdaptive,
        subset: subset.clone(),
        value,
        std_error: Some(se),
        n_used: phi.len(),
        function: None,
        degenerate_context: false,
    })
}

/// Regresses `φ` on `Z`. If every column of `Z` is constant, returns the
/// non-adaptive average with `degenerate_context` set.
pub fn reward_adaptive(
    phi: &PseudoOutcomes,
    z: &DMatrix<f64>,
    second_stage: SecondStage,
    subset: &Subset,
) -> Result<RewardEstimate> {
    if z.nrows() != phi.len() {
        return Err(Error::Dimension {
            context: "reward_adaptive context rows",
            expected: phi.len(),
            found: z.nrows(),
        });
    }
    if phi.len() < 2 {
        return Err(Error::InsufficientData {
            context: "reward_adaptive",
            needed: 2,
            found: phi.len(),
        });
    }
    let n = z.nrows() as f64;
    let columns: Vec<usize> = (0..z.ncols())
        .filter(|&c| {
            let col = z.column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            var > DEGENERATE_VARIANCE * mean.abs().max(1.0).powi(2)
        })
        .collect();
    let value = phi.values.sum() / n;
    if columns.is_empty() {
        log::warn!("context has no varying column for subset {subset}; using the non-adaptive average");
        return Ok(RewardEstimate {
            kind: RewardKind::Adaptive,
            subset: subset.clone(),
            value,
            std_error: None,
            n_used: phi.len(),
            function: None,
            degenerate_context: true,
        });
    }
    let SecondStage::Ridge { lambda } = second_stage;
    let model = ridge_fit(&z.select_columns(&columns), &phi.values, lambda)?;
    Ok(RewardEstimate {
        kind: RewardKind::Adaptive,
        subset: subset.clone(),
        value,
        std_error: None,
        n_used: phi.len(),
        function: Some(AdaptiveReward {
            width: z.ncols(),
            columns,
            model,
        }),
        degenerate_context: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpConfig {
    /// Number of cross-fitting folds `K`.
    pub folds: usize,
    /// First-stage ridge penalty.
    pub lambda: f64,
    pub second_stage: SecondStage,
    pub adaptive: bool,
    pub context: ContextMap,
    pub seed: u64,
}

impl Default for NpConfig {
    fn default() -> Self {
        NpConfig {
            folds: 5,
            lambda: 1.0,
            second_stage: SecondStage::default(),
            adaptive: false,
            context: ContextMap::Identity,
            seed: 0,
        }
    }
}

/// Cross-fitted pseudo-outcomes for one subset under a given fold plan.
pub fn cross_fitted_pseudo_outcomes(
    ds: &Dataset,
    pi: &Subset,
    folds: &FoldPlan,
    lambda: f64,
) -> Result<PseudoOutcomes> {
    pi.check(ds.aspects())?;
    let m = cross_fit_oof(&ds.design(pi), ds.y(), folds, lambda)?;
    let mut phi = pseudo_outcomes(ds.y(), &m)?;
    phi.folds = Some(folds.clone());
    phi.lambda = Some(lambda);
    Ok(phi)
}

/// Folds → out-of-fold ridge on `(A, H_π)` → pseudo-outcomes → second
/// stage. The fold plan is drawn from `cfg.seed`.
pub fn estimate_reward_np(ds: &Dataset, pi: &Subset, cfg: &NpConfig) -> Result<RewardEstimate> {
    let folds = make_folds(ds.n(), cfg.folds, cfg.seed)?;
    estimate_reward_np_with_folds(ds, pi, &folds, cfg)
}

/// As [`estimate_reward_np`] with a caller-supplied fold plan, so several
/// subsets can share one plan.
pub fn estimate_reward_np_with_folds(
    ds: &Dataset,
    pi: &Subset,
    folds: &FoldPlan,
    cfg: &NpConfig,
) -> Result<RewardEstimate> {
    let phi = cross_fitted_pseudo_outcomes(ds, pi, folds, cfg.lambda)?;
    if cfg.adaptive {
        reward_adaptive(&phi, &ds.context(cfg.context), cfg.second_stage, pi)
    } else {
        reward_nonadaptive(&phi, pi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{oracle_conditional_mean, oracle_reward, sample, stream_seed, Preset};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn phi(v: &[f64]) -> PseudoOutcomes {
        PseudoOutcomes {
            values: dv(v),
            folds: None,
            lambda: None,
        }
    }

    #[test]
    fn pseudo_outcome_formula() {
        assert_eq!(pseudo_outcomes(&dv(&[2.0]), &dv(&[1.0])).unwrap().values, dv(&[3.0]));
        let y = dv(&[1.5, -2.0, 0.3]);
        let sq = pseudo_outcomes(&y, &y).unwrap().values;
        for (a, b) in sq.iter().zip(y.iter()) {
            assert_close!(*a, b * b, 1e-15);
        }
        assert_eq!(pseudo_outcomes(&y, &dv(&[0.0; 3])).unwrap().values, dv(&[0.0; 3]));
        assert!(pseudo_outcomes(&y, &dv(&[0.0, f64::NAN, 0.0])).is_err());
        assert!(pseudo_outcomes(&y, &dv(&[0.0])).is_err());
    }

    #[test]
    fn nonadaptive_arithmetic() {
        let e = reward_nonadaptive(&phi(&[1.0; 4]), &Subset::empty()).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.std_error, Some(0.0));
        let e = reward_nonadaptive(&phi(&[0.0, 2.0]), &Subset::empty()).unwrap();
        assert_close!(e.value, 1.0, 1e-15);
        assert_close!(e.std_error.unwrap(), 1.0, 1e-15);
        assert!(reward_nonadaptive(&phi(&[1.0]), &Subset::empty()).is_err());
    }

    #[test]
    fn adaptive_constant_and_realizable() {
        let z = DMatrix::from_row_slice(5, 2, &[0.0, 1.0, 1.0, 0.5, 2.0, -1.0, 3.0, 0.0, 4.0, 2.0]);
        let e = reward_adaptive(&phi(&[2.5; 5]), &z, SecondStage::Ridge { lambda: 1.0 }, &Subset::empty()).unwrap();
        for q in [[0.0, 0.0], [10.0, -3.0]] {
            assert_close!(e.eval(&q).unwrap(), 2.5, 1e-12);
        }
        let target: Vec<f64> = (0..5).map(|r| 1.0 + 2.0 * z[(r, 0)] - 0.5 * z[(r, 1)]).collect();
        let e = reward_adaptive(&phi(&target), &z, SecondStage::Ridge { lambda: 0.0 }, &Subset::empty()).unwrap();
        assert_close!(e.eval(&[7.0, 3.0]).unwrap(), 1.0 + 14.0 - 1.5, 1e-8);
        assert!(!e.degenerate_context);
    }

    #[test]
    fn adaptive_degenerate_context_falls_back() {
        let z = DMatrix::from_element(4, 2, 3.0);
        let e = reward_adaptive(&phi(&[1.0, 2.0, 3.0, 4.0]), &z, SecondStage::default(), &Subset::empty()).unwrap();
        assert!(e.degenerate_context);
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 2.5);
    }

    #[test]
    fn adaptive_independent_context_is_flat() {
        // φ drawn independently of Z: fitted function stays near mean(φ).
        let spec = Preset::Symmetric.build(2).unwrap();
        let ds = sample(&spec, 20_000, 11).unwrap();
        let other = sample(&spec, 20_000, 12).unwrap();
        let p = pseudo_outcomes(other.y(), &DVector::from_element(20_000, 1.0)).unwrap();
        let e = reward_adaptive(&p, ds.a(), SecondStage::Ridge { lambda: 1.0 }, &Subset::empty()).unwrap();
        let (mean, se) = mean_and_se(&p.values);
        for r in 0..10 {
            let z: Vec<f64> = ds.a().row(r).iter().copied().collect();
            let spread = 1.0 + z.iter().map(|v| v.abs()).sum::<f64>();
            assert!((e.eval(&z).unwrap() - mean).abs() < 4.0 * se * spread);
        }
    }

    #[test]
    fn single_subset_matches_oracle() {
        let spec = Preset::Symmetric.build(4).unwrap();
        let ds = sample(&spec, 5000, 21).unwrap();
        let pi = Subset::singleton(0);
        let e = estimate_reward_np(&ds, &pi, &NpConfig { seed: 3, ..NpConfig::default() }).unwrap();
        let truth = oracle_reward(&spec, &pi).unwrap();
        assert!((e.value - truth).abs() <= 3.0 * e.std_error.unwrap(), "{} vs {truth}", e.value);
    }

    #[test]
    fn empty_subset_uses_ai_only() {
        let spec = Preset::Symmetric.build(3).unwrap();
        let ds = sample(&spec, 3000, 2).unwrap();
        let cfg = NpConfig { seed: 8, ..NpConfig::default() };
        let e = estimate_reward_np(&ds, &Subset::empty(), &cfg).unwrap();
        let folds = make_folds(ds.n(), 5, 8).unwrap();
        let m = cross_fit_oof(ds.a(), ds.y(), &folds, 1.0).unwrap();
        let direct = reward_nonadaptive(&pseudo_outcomes(ds.y(), &m).unwrap(), &Subset::empty()).unwrap();
        assert_eq!(e.value, direct.value);
        let truth = oracle_reward(&spec, &Subset::empty()).unwrap();
        assert!((e.value - truth).abs() <= 3.0 * e.std_error.unwrap());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = Preset::Symmetric.build(3).unwrap();
        let ds = sample(&spec, 500, 2).unwrap();
        let cfg = NpConfig { seed: 99, adaptive: true, ..NpConfig::default() };
        let pi = Subset::singleton(1);
        assert_eq!(estimate_reward_np(&ds, &pi, &cfg).unwrap(), estimate_reward_np(&ds, &pi, &cfg).unwrap());
    }

    #[test]
    fn uninformative_human_signals_tie() {
        let mut spec = Preset::Symmetric.build(4).unwrap();
        spec.beta = vec![0.0; 4];
        spec.gamma = vec![0.4, -0.3, 0.2, 0.1];
        let ds = sample(&spec, 5000, 4).unwrap();
        let folds = make_folds(ds.n(), 5, 1).unwrap();
        let est: Vec<RewardEstimate> = (0..4)
            .map(|j| estimate_reward_np_with_folds(&ds, &Subset::singleton(j), &folds, &NpConfig::default()).unwrap())
            .collect();
        for a in &est {
            for b in &est {
                let se = (a.std_error.unwrap().powi(2) + b.std_error.unwrap().powi(2)).sqrt();
                assert!((a.value - b.value).abs() <= 3.0 * se);
            }
        }
    }

    #[test]
    fn orthogonality_at_the_oracle() {
        let spec = Preset::Symmetric.build(3).unwrap();
        let pi = Subset::singleton(0);
        let m = oracle_conditional_mean(&spec, &pi).unwrap();
        let reps: Vec<f64> = (0..200)
            .map(|r| {
                let ds = sample(&spec, 2000, stream_seed(17, r)).unwrap();
                let p = pseudo_outcomes(ds.y(), &m.eval_dataset(&ds)).unwrap();
                reward_nonadaptive(&p, &pi).unwrap().value
            })
            .collect();
        let (mean, se) = mean_and_se(&DVector::from_vec(reps));
        let truth = oracle_reward(&spec, &pi).unwrap();
        assert!((mean - truth).abs() <= 3.0 * se, "{mean} vs {truth} (se {se})");
    }

    #[test]
    fn row_permutation_invariance() {
        let spec = Preset::Symmetric.build(3).unwrap();
        let ds = sample(&spec, 400, 6).unwrap();
        let folds = make_folds(ds.n(), 5, 6).unwrap();
        let pi = Subset::singleton(2);
        let base = estimate_reward_np_with_folds(&ds, &pi, &folds, &NpConfig::default()).unwrap();
        let perm: Vec<usize> = (0..ds.n()).map(|i| (i * 37 + 11) % ds.n()).collect();
        let shuffled = ds.select_rows(&perm);
        let est = estimate_reward_np_with_folds(&shuffled, &pi, &folds.permuted(&perm), &NpConfig::default()).unwrap();
        assert_close!(base.value, est.value, 1e-12);
    }
}
