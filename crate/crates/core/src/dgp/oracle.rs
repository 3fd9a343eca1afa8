//! Exact population quantities of a [`DgpSpec`].
//!
//! Rank-deficient covariances (perfectly redundant aspects) are handled with
//! pseudo-inverses, which give the same conditional means and rewards as any
//! generalized inverse because the relevant cross-moments lie in the range
//! of the covariance.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::DgpSpec;
use crate::data::{Dataset, Subset};
use crate::error::{Error, Result};
use crate::linalg::{psd_pinv, submatrix, subvector};

/// Largest aspect count accepted by exhaustive enumeration.
pub const ENUMERATION_LIMIT: usize = 20;

/// Population moments of `X̂_π = (A, H_π, 1)` and `Y`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleMoments {
    pub subset: Subset,
    /// `E[X̂X̂ᵀ]`, constant last.
    #[serde(serialize_with = "crate::linalg::serde_dense::matrix")]
    pub gram: DMatrix<f64>,
    /// `E[X̂Y]`.
    #[serde(serialize_with = "crate::linalg::serde_dense::vector")]
    pub cross: DVector<f64>,
    pub mean_y: f64,
    pub var_y: f64,
}

impl OracleMoments {
    /// Population least-squares coefficients `θ_π = E[X̂X̂ᵀ]⁻¹E[X̂Y]`,
    /// ordered `(γ, β, c)`.
    pub fn theta(&self) -> Result<DVector<f64>> {
        Ok(psd_pinv(&self.gram, "population Gram")? * &self.cross)
    }
}

/// `E[Y | A = a, H_π = h_π] = a_weightsᵀa + h_weightsᵀh_π + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalMean {
    pub subset: Subset,
    #[serde(serialize_with = "crate::linalg::serde_dense::vector")]
    pub a_weights: DVector<f64>,
    #[serde(serialize_with = "crate::linalg::serde_dense::vector")]
    pub h_weights: DVector<f64>,
    pub intercept: f64,
}

impl ConditionalMean {
    pub fn eval(&self, a: &[f64], h_pi: &[f64]) -> f64 {
        self.intercept
            + a.iter().zip(self.a_weights.iter()).map(|(x, w)| x * w).sum::<f64>()
            + h_pi.iter().zip(self.h_weights.iter()).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Evaluated on every row of a dataset drawn from the same layout.
    pub fn eval_dataset(&self, ds: &Dataset) -> DVector<f64> {
        let hp = ds.h_subset(&self.subset);
        let mut out = ds.a() * &self.a_weights + hp * &self.h_weights;
        out.add_scalar_mut(self.intercept);
        out
    }
}

fn x_indices(spec: &DgpSpec, pi: &Subset) -> Result<Vec<usize>> {
    let blocks = spec.blocks()?;
    pi.check(blocks.aspects())?;
    let da = blocks.a_dim();
    Ok((0..da).chain(blocks.h_columns(pi).into_iter().map(|c| da + c)).collect())
}

/// Population `E[Y | A, H_π]`, computed by Gaussian conditioning of the
/// unqueried human columns on `(A, H_π)` and substitution into the outcome
/// equation.
pub fn oracle_conditional_mean(spec: &DgpSpec, pi: &Subset) -> Result<ConditionalMean> {
    spec.validate()?;
    let da = spec.a_dim();
    let d = da + spec.h_dim();
    let observed = x_indices(spec, pi)?;
    let latent: Vec<usize> = (da..d).filter(|i| !observed.contains(i)).collect();
    let sigma = spec.sigma();
    let mu = spec.mu();
    let w = spec.outcome_weights();
    let w_obs = subvector(&w, &observed);
    let w_lat = subvector(&w, &latent);
    let mu_obs = subvector(&mu, &observed);
    let mu_lat = subvector(&mu, &latent);

    // E[H_lat | X] = μ_lat + K (X − μ_X), K = Σ_lat,X Σ_XX⁺.
    let s_xx = submatrix(&sigma, &observed, &observed);
    let s_lx = submatrix(&sigma, &latent, &observed);
    let k = s_lx * psd_pinv(&s_xx, "population Gram of (A, H_pi)")?;
    let weights = w_obs + k.transpose() * &w_lat;
    let intercept = spec.intercept + w_lat.dot(&mu_lat) - (k.transpose() * &w_lat).dot(&mu_obs);
    Ok(ConditionalMean {
        subset: pi.clone(),
        a_weights: weights.rows(0, da).into_owned(),
        h_weights: weights.rows(da, weights.len() - da).into_owned(),
        intercept,
    })
}

pub fn oracle_moments(spec: &DgpSpec, pi: &Subset) -> Result<OracleMoments> {
    spec.validate()?;
    let idx = x_indices(spec, pi)?;
    let p = idx.len();
    let sigma = spec.sigma();
    let mu = spec.mu();
    let w = spec.outcome_weights();
    let mu_x = subvector(&mu, &idx);
    let mean_y = spec.mean_y();
    let cov_xy = submatrix(&sigma, &idx, &(0..w.len()).collect::<Vec<_>>()) * &w;

    let mut gram = DMatrix::zeros(p + 1, p + 1);
    let second = submatrix(&sigma, &idx, &idx) + &mu_x * mu_x.transpose();
    gram.view_mut((0, 0), (p, p)).copy_from(&second);
    for i in 0..p {
        gram[(i, p)] = mu_x[i];
        gram[(p, i)] = mu_x[i];
    }
    gram[(p, p)] = 1.0;
    let mut cross = DVector::zeros(p + 1);
    cross.rows_mut(0, p).copy_from(&(cov_xy + &mu_x * mean_y));
    cross[p] = mean_y;
    Ok(OracleMoments {
        subset: pi.clone(),
        gram,
        cross,
        mean_y,
        var_y: spec.var_y(),
    })
}

/// Population reward `E[m_π²] = Var(E[Y | X̂_π]) + (E Y)²` with the
/// explained variance `Σ_YX Σ_XX⁻¹ Σ_XY`.
pub fn oracle_reward(spec: &DgpSpec, pi: &Subset) -> Result<f64> {
    spec.validate()?;
    let idx = x_indices(spec, pi)?;
    let sigma = spec.sigma();
    let w = spec.outcome_weights();
    let all: Vec<usize> = (0..w.len()).collect();
    let cov_xy = submatrix(&sigma, &idx, &all) * &w;
    let s_xx = submatrix(&sigma, &idx, &idx);
    let explained = cov_xy.dot(&(psd_pinv(&s_xx, "population Gram of (A, H_pi)")? * &cov_xy));
    Ok(explained + spec.mean_y().powi(2))
}

/// Split of `Var(E[Y | A, H_π])` into the part explained by `A` alone and
/// `β_⊥ᵀ Var(H_⊥) β_⊥`, where `H_⊥` is `H_π` minus its projection on `A`.
/// The `A` part does not depend on `π`.
pub fn oracle_residual_split(spec: &DgpSpec, pi: &Subset) -> Result<(f64, f64)> {
    spec.validate()?;
    let da = spec.a_dim();
    let sigma = spec.sigma();
    let w = spec.outcome_weights();
    let all: Vec<usize> = (0..w.len()).collect();
    let a_idx: Vec<usize> = (0..da).collect();
    let h_idx: Vec<usize> = x_indices(spec, pi)?.into_iter().skip(da).collect();
    let s_aa_inv = psd_pinv(&submatrix(&sigma, &a_idx, &a_idx), "population Gram of A")?;
    let cov_ay = submatrix(&sigma, &a_idx, &all) * &w;
    let a_term = cov_ay.dot(&(&s_aa_inv * &cov_ay));
    if h_idx.is_empty() {
        return Ok((a_term, 0.0));
    }
    let s_ha = submatrix(&sigma, &h_idx, &a_idx);
    let var_perp = submatrix(&sigma, &h_idx, &h_idx) - &s_ha * &s_aa_inv * s_ha.transpose();
    let cov_perp_y = submatrix(&sigma, &h_idx, &all) * &w - &s_ha * &s_aa_inv * &cov_ay;
    let beta_perp = psd_pinv(&var_perp, "population variance of H_perp")? * &cov_perp_y;
    let h_term = (beta_perp.transpose() * &var_perp * &beta_perp)[(0, 0)];
    Ok((a_term, h_term))
}

/// Population contextual reward `E[m_π(A, H_π)² | A = a]`.
pub fn oracle_adaptive_reward(spec: &DgpSpec, pi: &Subset, a: &[f64]) -> Result<f64> {
    let m = oracle_conditional_mean(spec, pi)?;
    let da = spec.a_dim();
    if a.len() != da {
        return Err(Error::Dimension {
            context: "oracle_adaptive_reward context",
            expected: da,
            found: a.len(),
        });
    }
    let h_idx: Vec<usize> = x_indices(spec, pi)?.into_iter().skip(da).collect();
    if h_idx.is_empty() {
        return Ok(m.eval(a, &[]).powi(2));
    }
    let sigma = spec.sigma();
    let mu = spec.mu();
    let a_idx: Vec<usize> = (0..da).collect();
    let s_aa_inv = psd_pinv(&submatrix(&sigma, &a_idx, &a_idx), "population Gram of A")?;
    let s_ha = submatrix(&sigma, &h_idx, &a_idx);
    let k = &s_ha * &s_aa_inv;
    let dev = DVector::from_column_slice(a) - subvector(&mu, &a_idx);
    let h_mean = subvector(&mu, &h_idx) + &k * dev;
    let s = spec.residual_scale(a);
    let h_var = (submatrix(&sigma, &h_idx, &h_idx) - &k * s_ha.transpose()) * (s * s);
    let mean = m.eval(a, h_mean.as_slice());
    Ok(mean * mean + (m.h_weights.transpose() * h_var * &m.h_weights)[(0, 0)])
}

/// Subset of size `min(n_sel, J)` maximizing [`oracle_reward`]; ties go to
/// the lexicographically smallest subset.
pub fn oracle_optimal_subset(spec: &DgpSpec, n_sel: usize) -> Result<Subset> {
    let j = spec.aspects();
    if j > ENUMERATION_LIMIT {
        return Err(Error::GuardLimit {
            aspects: j,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(f64, Subset)> = None;
    for pi in Subset::all_of_size(j, n_sel.min(j)) {
        let r = oracle_reward(spec, &pi)?;
        if best.as_ref().is_none_or(|(b, _)| r > *b) {
            best = Some((r, pi));
        }
    }
    Ok(best.map(|(_, s)| s).unwrap_or_default())
}
