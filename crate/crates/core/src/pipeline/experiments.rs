use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, Subset};
use crate::dgp::{oracle_conditional_mean, oracle_reward, sample, stream_seed, DgpSpec};
use crate::error::{Error, Result};
use crate::reward_linear::asymptotic_variance;
use crate::reward_np::{pseudo_outcomes, reward_nonadaptive};

/// Fixed first-stage error direction `g(a) = scale · (1 + a₀*) / √2`, with
/// `a₀*` the first AI column standardized by its population moments, so
/// `E[g²] = scale²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    pub scale: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation { scale: 5.0 }
    }
}

impl Perturbation {
    pub fn second_moment(&self) -> f64 {
        self.scale * self.scale
    }

    fn eval(&self, spec: &DgpSpec, ds: &Dataset) -> DVector<f64> {
        let mu = spec.mean[0];
        let sd = spec.covariance[0][0].sqrt();
        ds.a()
            .column(0)
            .map(|a| self.scale * (1.0 + (a - mu) / sd) / std::f64::consts::SQRT_2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasPoint {
    pub delta: f64,
    /// `mean_r(R̂_r − R)`.
    pub mean_error: f64,
    /// `|mean_error|`.
    pub bias: f64,
    /// Monte Carlo standard error of `mean_error`.
    pub mc_std_error: f64,
    /// `−δ² E[g²]`, the exact bias of the perturbed oracle estimator.
    pub predicted_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasScalingReport {
    pub subset: Subset,
    pub oracle_reward: f64,
    pub replications: usize,
    pub n: usize,
    pub seed: u64,
    pub perturbation: Perturbation,
    /// The unperturbed first stage.
    pub zero: BiasPoint,
    pub points: Vec<BiasPoint>,
    /// Least-squares slope of `log bias` on `log δ`.
    pub slope: f64,
    pub intercept: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Bias of the non-adaptive pseudo-outcome reward when the exact conditional
/// mean is replaced by `m + δ·g`. Replication `r` draws `n` rows with seed
/// `stream_seed(seed, r)`, and every `δ` reuses those rows.
pub fn bias_scaling_experiment(
    spec: &DgpSpec,
    pi: &Subset,
    deltas: &[f64],
    replications: usize,
    n: usize,
    seed: u64,
    perturbation: Perturbation,
) -> Result<BiasScalingReport> {
    if deltas.len() < 2 || deltas.iter().any(|d| !(*d > 0.0)) || deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "deltas must be at least two positive, increasing values".into(),
        ));
    }
    if replications < 2 {
        return Err(Error::InsufficientData {
            context: "bias scaling replications",
            needed: 2,
            found: replications,
        });
    }
    let truth = oracle_reward(spec, pi)?;
    let m = oracle_conditional_mean(spec, pi)?;
    let all: Vec<f64> = std::iter::once(0.0).chain(deltas.iter().copied()).collect();
    let errors: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let ds = sample(spec, n, stream_seed(seed, r))?;
            let base = m.eval_dataset(&ds);
            let g = perturbation.eval(spec, &ds);
            all.iter()
                .map(|&d| {
                    let phi = pseudo_outcomes(ds.y(), &(&base + &g * d))?;
                    Ok(reward_nonadaptive(&phi, pi)?.value - truth)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let point = |k: usize| {
        let col: Vec<f64> = errors.iter().map(|e| e[k]).collect();
        let (mean, se) = mean_se(&col);
        BiasPoint {
            delta: all[k],
            mean_error: mean,
            bias: mean.abs(),
            mc_std_error: se,
            predicted_error: -all[k] * all[k] * perturbation.second_moment(),
        }
    };
    let points: Vec<BiasPoint> = (1..all.len()).map(point).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.delta.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.bias.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(BiasScalingReport {
        subset: pi.clone(),
        oracle_reward: truth,
        replications,
        n,
        seed,
        perturbation,
        zero: point(0),
        points,
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub subset: Subset,
    pub oracle_reward: f64,
    pub level: f64,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub covered: usize,
    pub coverage: f64,
    /// Monte Carlo standard error of `coverage`.
    pub coverage_std_error: f64,
    pub mean_estimate: f64,
    pub mean_std_error: f64,
    /// Replications whose variance estimate was rank deficient.
    pub low_rank: usize,
    /// Set when `n` is too small for the asymptotics to be trusted.
    pub small_sample: bool,
}

/// Rows below which coverage is reported as a small-sample diagnostic.
pub const SMALL_SAMPLE: usize = 200;

/// Fraction of replications whose delta-method interval for the linear
/// reward (`λ = 0`) contains the population reward.
pub fn coverage_experiment(
    spec: &DgpSpec,
    pi: &Subset,
    n: usize,
    replications: usize,
    level: f64,
    seed: u64,
) -> Result<CoverageReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if replications == 0 {
        return Err(Error::InsufficientData {
            context: "coverage replications",
            needed: 1,
            found: 0,
        });
    }
    let truth = oracle_reward(spec, pi)?;
    let reps = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let ds = sample(spec, n, stream_seed(seed, r))?;
            asymptotic_variance(&ds, pi, 0.0, level)
        })
        .collect::<Result<Vec<_>>>()?;
    let covered = reps.iter().filter(|v| v.covers(truth)).count();
    let coverage = covered as f64 / replications as f64;
    let k = replications as f64;
    let small_sample = n < SMALL_SAMPLE || reps.iter().any(|v| v.low_rank);
    if small_sample {
        log::warn!("coverage at n = {n} is a small-sample diagnostic");
    }
    Ok(CoverageReport {
        subset: pi.clone(),
        oracle_reward: truth,
        level,
        n,
        replications,
        seed,
        covered,
        coverage,
        coverage_std_error: (coverage * (1.0 - coverage) / k).sqrt(),
        mean_estimate: reps.iter().map(|v| v.estimate).sum::<f64>() / k,
        mean_std_error: reps.iter().map(|v| v.std_error).sum::<f64>() / k,
        low_rank: reps.iter().filter(|v| v.low_rank).count(),
        small_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::Preset;

    #[test]
    fn perturbation_moment() {
        let spec = Preset::Symmetric.build(2).unwrap();
        let ds = sample(&spec, 200_000, 1).unwrap();
        let p = Perturbation { scale: 2.0 };
        let g = p.eval(&spec, &ds);
        let m2 = g.map(|v| v * v).sum() / g.len() as f64;
        assert!((m2 - 4.0).abs() < 0.05, "{m2}");
    }

    #[test]
    fn bias_matches_prediction() {
        let spec = Preset::Symmetric.build(3).unwrap();
        let r = bias_scaling_experiment(&spec, &Subset::singleton(0), &[0.1, 0.2, 0.4], 40, 1000, 7, Perturbation::default())
            .unwrap();
        for p in &r.points {
            assert!((p.mean_error - p.predicted_error).abs() < 4.0 * p.mc_std_error + 0.05 * p.predicted_error.abs());
        }
        assert!(r.zero.bias <= 3.0 * r.zero.mc_std_error);
        assert_eq!(r.points.len(), 3);
    }

    #[test]
    fn mc_error_scales_with_replications() {
        // Quadrupling R halves the Monte Carlo standard error of a mean.
        let spec = Preset::Symmetric.build(2).unwrap();
        let pi = Subset::singleton(0);
        let run = |r| bias_scaling_experiment(&spec, &pi, &[0.1, 0.2], r, 200, 3, Perturbation::default()).unwrap();
        let small = run(100);
        let large = run(400);
        let ratio = large.zero.mc_std_error / small.zero.mc_std_error;
        assert!((ratio - 0.5).abs() <= 0.1, "{ratio}");
    }

    #[test]
    fn rejects_bad_deltas() {
        let spec = Preset::Symmetric.build(2).unwrap();
        let pi = Subset::singleton(0);
        for d in [vec![0.1], vec![0.2, 0.1], vec![0.0, 0.1]] {
            assert!(bias_scaling_experiment(&spec, &pi, &d, 10, 100, 1, Perturbation::default()).is_err());
        }
    }

    #[test]
    fn coverage_at_half_level() {
        let spec = Preset::Symmetric.build(2).unwrap();
        let r = coverage_experiment(&spec, &Subset::singleton(0), 2000, 400, 0.5, 5).unwrap();
        assert!((0.43..=0.57).contains(&r.coverage), "{}", r.coverage);
        assert!(!r.small_sample);
    }

    #[test]
    fn small_sample_is_flagged() {
        let spec = Preset::Symmetric.build(2).unwrap();
        let r = coverage_experiment(&spec, &Subset::singleton(0), 50, 20, 0.95, 5).unwrap();
        assert!(r.small_sample);
        assert!((0.0..=1.0).contains(&r.coverage));
    }
}
