//! Closed-form rewards under a linear conditional mean.
//!
//! With `X̂ = (A, H_π, 1)` and least-squares coefficients `θ̂`, the reward is
//! `θ̂ᵀ(N⁻¹ΣX̂X̂ᵀ)θ̂`, the mean square of the in-sample fit. Its delta-method
//! variance treats the reward as a smooth function of the uncentered second
//! moments of `M = (1, A, H_π, Y)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{hstack, ContextMap, Dataset, Subset};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_checked, spd_inverse, submatrix};
use crate::regression::{center, check_lambda, column_means, nearest_neighbors, ridge_fit, RidgeModel};
use crate::reward_np::{RewardEstimate, RewardKind};

/// `θ̂_π`: ridge of `Y` on `(A, H_π)` with an unpenalized intercept.
/// Coefficients are ordered as the design, A columns first.
pub fn theta_hat(ds: &Dataset, pi: &Subset, lambda: f64) -> Result<RidgeModel> {
    pi.check(ds.aspects())?;
    ridge_fit(&ds.design(pi), ds.y(), lambda)
}

/// `[A, H_π, 1]`.
fn augmented_design(ds: &Dataset, pi: &Subset) -> DMatrix<f64> {
    hstack(&ds.design(pi), &DMatrix::from_element(ds.n(), 1, 1.0))
}

fn theta_vector(model: &RidgeModel) -> DVector<f64> {
    let w = model.width();
    let mut t = DVector::zeros(w + 1);
    t.rows_mut(0, w).copy_from(&model.coefficients);
    t[w] = model.intercept;
    t
}

/// `R̂^lin_π = θ̂ᵀ(N⁻¹ΣX̂ᵢX̂ᵢᵀ)θ̂`.
pub fn reward_linear_nonadaptive(ds: &Dataset, pi: &Subset, lambda: f64) -> Result<RewardEstimate> {
    let model = theta_hat(ds, pi, lambda)?;
    let x = augmented_design(ds, pi);
    let theta = theta_vector(&model);
    let n = ds.n() as f64;
    let gram = x.tr_mul(&x) / n;
    let value = theta.dot(&(&gram * &theta));
    let fitted = &x * &theta;
    let direct = fitted.norm_squared() / n;
    debug_assert!(
        (value - direct).abs() <= 1e-10 * value.abs().max(1.0),
        "quadratic form {value} disagrees with mean square {direct}"
    );
    Ok(RewardEstimate {
        kind: RewardKind::NonAdaptive,
        subset: pi.clone(),
        value,
        std_error: None,
        n_used: ds.n(),
        function: None,
        degenerate_context: false,
    })
}

/// Default neighbourhood size `⌈√N⌉`.
pub fn default_neighbors(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// `R̂^lin_π(z) = θ̂ᵀ Ê[X̂X̂ᵀ | Z = z] θ̂`, with the conditional second moment
/// averaged over the `k` rows nearest to `z` in context space.
pub fn reward_linear_adaptive(
    ds: &Dataset,
    pi: &Subset,
    z: &[f64],
    lambda: f64,
    k: usize,
    context: ContextMap,
) -> Result<f64> {
    let model = theta_hat(ds, pi, lambda)?;
    let theta = theta_vector(&model);
    let x = augmented_design(ds, pi);
    let rows = nearest_neighbors(&ds.context(context), z, k)?;
    let fitted = &x * &theta;
    Ok(rows.iter().map(|&r| fitted[r] * fitted[r]).sum::<f64>() / rows.len() as f64)
}

/// Sample first and second moments of `(A, H, Y)` for all aspects, from
/// which the linear reward of any subset follows without revisiting rows.
#[derive(Debug, Clone)]
pub struct LinearMoments {
    a_dim: usize,
    blocks: crate::data::AspectBlocks,
    mean: DVector<f64>,
    /// `Σ(mᵢ − m̄)(mᵢ − m̄)ᵀ`, unnormalized.
    scatter: DMatrix<f64>,
    n: usize,
}

impl LinearMoments {
    pub fn new(ds: &Dataset) -> Self {
        let m = hstack(&hstack(ds.a(), ds.h()), &DMatrix::from_column_slice(ds.n(), 1, ds.y().as_slice()));
        let mean = column_means(&m);
        let c = center(&m, &mean);
        LinearMoments {
            a_dim: ds.blocks().a_dim(),
            blocks: ds.blocks().clone(),
            mean,
            scatter: c.tr_mul(&c),
            n: ds.n(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Same value as [`reward_linear_nonadaptive`]: with centered scatter
    /// `C` and ridge slope `β = (C_XX + λI)⁻¹C_XY`, the mean square of the
    /// fit is `βᵀC_XXβ/N + Ȳ²`.
    pub fn reward(&self, pi: &Subset, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        pi.check(self.blocks.aspects())?;
        let idx: Vec<usize> = (0..self.a_dim)
            .chain(self.blocks.h_columns(pi).into_iter().map(|c| self.a_dim + c))
            .collect();
        let y = self.mean.len() - 1;
        let y_mean = self.mean[y];
        if idx.is_empty() {
            return Ok(y_mean * y_mean);
        }
        let cxx = submatrix(&self.scatter, &idx, &idx);
        let cxy = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.scatter[(i, y)]));
        let mut pen = cxx.clone();
        for i in 0..idx.len() {
            pen[(i, i)] += lambda;
        }
        let beta = cholesky_checked(pen, "linear reward normal equations")?.solve(&cxy);
        Ok(beta.dot(&(&cxx * &beta)) / self.n as f64 + y_mean * y_mean)
    }
}

/// Nonparametric bootstrap standard errors of the linear reward for each
/// subset, all subsets sharing the same resamples.
pub fn bootstrap_std_errors(
    ds: &Dataset,
    subsets: &[Subset],
    lambda: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if replicates < 2 {
        return Err(Error::InsufficientData {
            context: "bootstrap replicates",
            needed: 2,
            found: replicates,
        });
    }
    let n = ds.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = vec![Vec::with_capacity(replicates); subsets.len()];
    for _ in 0..replicates {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let moments = LinearMoments::new(&ds.select_rows(&rows));
        for (s, pi) in subsets.iter().enumerate() {
            draws[s].push(moments.reward(pi, lambda)?);
        }
    }
    Ok(draws
        .iter()
        .map(|d| {
            let m = d.iter().sum::<f64>() / d.len() as f64;
            (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
        })
        .collect())
}

/// Delta-method inference for the linear reward.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub estimate: f64,
    pub sigma2_hat: f64,
    pub std_error: f64,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Gradient `α` of the reward with respect to the column-major
    /// `vec(E[MMᵀ])`, `M = (1, A, H_π, Y)`.
    #[serde(serialize_with = "crate::linalg::serde_dense::vector")]
    pub gradient: DVector<f64>,
    /// Set when `N` does not exceed the dimension of `vec(MMᵀ)`, so the
    /// sample covariance of `vec(MMᵀ)` is rank deficient.
    pub low_rank: bool,
    pub n: usize,
}

impl VarianceReport {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// `M = (1, A, H_π, Y)` row by row.
fn stacked_moments(ds: &Dataset, pi: &Subset) -> DMatrix<f64> {
    let one = DMatrix::from_element(ds.n(), 1, 1.0);
    let y = DMatrix::from_column_slice(ds.n(), 1, ds.y().as_slice());
    hstack(&hstack(&one, &ds.design(pi)), &y)
}

/// `α = 2P_XYθ − P_XX(θᵀ ⊗ Σ_XX⁻¹)ᵀΣ_XY` embedded in `vec` coordinates of
/// the `q × q` moment matrix, `X` being the first `q − 1` entries of `M`.
fn gradient(s: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let q = s.nrows();
    let p = q - 1;
    let xs: Vec<usize> = (0..p).collect();
    let sxx_inv = spd_inverse(&submatrix(s, &xs, &xs), "moment matrix of (1, A, H_pi)")?;
    let sxy = DVector::from_iterator(p, (0..p).map(|i| s[(i, p)]));
    let theta = &sxx_inv * &sxy;
    let kron = theta.transpose().kronecker(&sxx_inv);
    let quad = kron.transpose() * &sxy;
    let mut alpha = DVector::zeros(q * q);
    for i in 0..p {
        alpha[p * q + i] = 2.0 * theta[i];
    }
    for col in 0..p {
        for row in 0..p {
            alpha[col * q + row] -= quad[col * p + row];
        }
    }
    Ok((alpha, theta))
}

/// Plug-in `σ̂² = α̂ᵀΓ̂α̂` with `Γ̂` the sample covariance of `vec(MᵢMᵢᵀ)` and
/// the normal interval `R̂ ± z·σ̂/√N`. Only the unpenalized fit is covered.
pub fn asymptotic_variance(ds: &Dataset, pi: &Subset, lambda: f64, level: f64) -> Result<VarianceReport> {
    check_lambda(lambda)?;
    if lambda > 0.0 {
        return Err(Error::Unsupported(
            "delta-method variance is only derived for the unpenalized fit (lambda = 0)".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    pi.check(ds.aspects())?;
    let n = ds.n();
    if n < 2 {
        return Err(Error::InsufficientData {
            context: "asymptotic_variance",
            needed: 2,
            found: n,
        });
    }
    let m = stacked_moments(ds, pi);
    let q = m.ncols();
    let s = m.tr_mul(&m) / n as f64;
    let (alpha, theta) = gradient(&s)?;
    let p = q - 1;
    let sxy = DVector::from_iterator(p, (0..p).map(|i| s[(i, p)]));
    let estimate = theta.dot(&sxy);

    // αᵀvec(MᵢMᵢᵀ) = Mᵢᵀ A Mᵢ with A the q × q matrix whose vec is α, so the
    // quadratic form in Γ̂ is the sample variance of these scalars.
    let a_mat = DMatrix::from_column_slice(q, q, alpha.as_slice());
    let u: Vec<f64> = m
        .row_iter()
        .map(|row| {
            let r = row.transpose();
            r.dot(&(&a_mat * &r))
        })
        .collect();
    let mean_u = u.iter().sum::<f64>() / n as f64;
    let sigma2_hat = u.iter().map(|v| (v - mean_u).powi(2)).sum::<f64>() / n as f64;
    let low_rank = n <= q * q;
    if low_rank {
        log::warn!("{n} rows for a {}-dimensional moment vector: variance estimate is rank deficient", q * q);
    }
    let zq = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let std_error = (sigma2_hat / n as f64).sqrt();
    Ok(VarianceReport {
        estimate,
        sigma2_hat,
        std_error,
        level,
        ci_low: estimate - zq * std_error,
        ci_high: estimate + zq * std_error,
        gradient: alpha,
        low_rank,
        n,
    })
}
