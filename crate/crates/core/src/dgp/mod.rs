//! Synthetic linear-Gaussian data with known population moments.
//!
//! `(A, H)` is jointly Gaussian with mean `μ` and covariance `Σ`, and
//! `Y = γᵀA + βᵀH + c + σ_ε·ε`. Under joint Gaussianity every conditional
//! mean `E[Y | A, H_π]` is affine, so population rewards, conditional means
//! and optimal subsets are available in closed form (see [`oracle`]).
//!
//! The optional heteroskedastic extension rescales the residual of `H` given
//! `A` by `s(A)` with `E[s(A)²] = 1`. This keeps `Σ`, every conditional mean
//! and the non-adaptive rewards unchanged while making `Var(H | A)` depend on
//! `A`.

pub mod oracle;
mod presets;

pub use oracle::{
    oracle_adaptive_reward, oracle_conditional_mean, oracle_moments, oracle_optimal_subset, oracle_residual_split,
    oracle_reward, ConditionalMean, OracleMoments, ENUMERATION_LIMIT,
};
pub use presets::Preset;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AspectBlocks, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_checked, psd_pinv};

/// `Var(H | A = a)` is scaled by `(1 + strength·(a_d − μ_d)²) / (1 + strength·Σ_dd)`
/// where `d` is the `driver` column of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heteroskedasticity {
    pub driver: usize,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub a_widths: Vec<usize>,
    pub h_widths: Vec<usize>,
    /// Mean of the stacked vector `(A, H)`.
    pub mean: Vec<f64>,
    /// Covariance of `(A, H)`, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub noise_std: f64,
    /// Per-aspect systematic AI offsets. Informational: they are already
    /// folded into `mean`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai_bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heteroskedastic: Option<Heteroskedasticity>,
}

impl DgpSpec {
    pub fn blocks(&self) -> Result<AspectBlocks> {
        AspectBlocks::new(self.a_widths.clone(), self.h_widths.clone())
    }

    pub fn aspects(&self) -> usize {
        self.a_widths.len()
    }

    pub fn a_dim(&self) -> usize {
        self.a_widths.iter().sum()
    }

    pub fn h_dim(&self) -> usize {
        self.h_widths.iter().sum()
    }

    pub fn mu(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        let d = self.covariance.len();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }

    /// Outcome weights over the stacked `(A, H)`.
    pub fn outcome_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.gamma.len() + self.beta.len(),
            self.gamma.iter().chain(&self.beta).copied(),
        )
    }

    pub fn mean_y(&self) -> f64 {
        self.outcome_weights().dot(&self.mu()) + self.intercept
    }

    pub fn var_y(&self) -> f64 {
        let w = self.outcome_weights();
        (w.transpose() * self.sigma() * &w)[(0, 0)] + self.noise_std * self.noise_std
    }

    /// `E[Y²]`.
    pub fn second_moment_y(&self) -> f64 {
        self.var_y() + self.mean_y().powi(2)
    }

    /// Checks dimensions, finiteness, symmetry and positive semidefiniteness.
    /// Sampling additionally needs `Σ` positive definite.
    pub fn validate(&self) -> Result<()> {
        let blocks = self.blocks()?;
        let (da, dh) = (blocks.a_dim(), blocks.h_dim());
        let d = da + dh;
        let dim = |context, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected,
                    found,
                })
            }
        };
        dim("DGP mean", d, self.mean.len())?;
        dim("DGP covariance rows", d, self.covariance.len())?;
        for row in &self.covariance {
            dim("DGP covariance columns", d, row.len())?;
        }
        dim("DGP gamma", da, self.gamma.len())?;
        dim("DGP beta", dh, self.beta.len())?;
        if let Some(b) = &self.ai_bias {
            dim("DGP ai_bias", self.aspects(), b.len())?;
        }
        let finite = self
            .mean
            .iter()
            .chain(self.covariance.iter().flatten())
            .chain(&self.gamma)
            .chain(&self.beta)
            .chain([&self.intercept, &self.noise_std])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("DGP parameters must be finite".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidArgument("noise_std must be nonnegative".into()));
        }
        let sigma = self.sigma();
        let scale = sigma.amax().max(1.0);
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("DGP covariance must be symmetric".into()));
        }
        psd_pinv(&sigma, "DGP covariance (not positive semidefinite)")?;
        if let Some(het) = &self.heteroskedastic {
            if het.driver >= da || !(het.strength >= 0.0) {
                return Err(Error::InvalidArgument(
                    "heteroskedastic driver must index a column of A and strength must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Residual scale factor `s(a)` of `H | A = a`.
    pub fn residual_scale(&self, a: &[f64]) -> f64 {
        match &self.heteroskedastic {
            None => 1.0,
            Some(het) => {
                let d = het.driver;
                let var = self.covariance[d][d];
                let dev = a[d] - self.mean[d];
                ((1.0 + het.strength * dev * dev) / (1.0 + het.strength * var)).sqrt()
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: DgpSpec =
            toml::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Draws `n` i.i.d. instances. Deterministic given `seed`.
///
/// Per row: `A = μ_A + L_A·z`, then `H = μ_H + K(A − μ_A) + s(A)·L_{H|A}·z'`
/// with `K = Σ_HA Σ_AA⁻¹`, then `Y` from the outcome equation.
pub fn sample(spec: &DgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "DGP sample",
            needed: 1,
            found: 0,
        });
    }
    let (da, dh) = (spec.a_dim(), spec.h_dim());
    let sigma = spec.sigma();
    let mu = spec.mu();
    let s_aa = sigma.view((0, 0), (da, da)).into_owned();
    let s_ha = sigma.view((da, 0), (dh, da)).into_owned();
    let s_hh = sigma.view((da, da), (dh, dh)).into_owned();
    let chol_a = cholesky_checked(s_aa, "DGP covariance of A (not positive definite)")?;
    let k = chol_a.solve(&s_ha.transpose()).transpose();
    let cond = &s_hh - &k * s_ha.transpose();
    let cond = (&cond + cond.transpose()) * 0.5;
    let l_a = chol_a.l();
    let l_h = cholesky_checked(cond, "DGP covariance of H given A (not positive definite)")?.l();
    let mu_a = mu.rows(0, da).into_owned();
    let mu_h = mu.rows(da, dh).into_owned();
    let gamma = DVector::from_column_slice(&spec.gamma);
    let beta = DVector::from_column_slice(&spec.beta);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(&mut rng)));
    let mut a = DMatrix::zeros(n, da);
    let mut h = DMatrix::zeros(n, dh);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let ai = &mu_a + &l_a * draw(da);
        let scale = spec.residual_scale(ai.as_slice());
        let hi = &mu_h + &k * (&ai - &mu_a) + &l_h * draw(dh) * scale;
        let eps: f64 = draw(1)[0];
        y[i] = gamma.dot(&ai) + beta.dot(&hi) + spec.intercept + spec.noise_std * eps;
        a.set_row(i, &ai.transpose());
        h.set_row(i, &hi.transpose());
    }
    Dataset::new(a, h, y, spec.blocks()?, None, None)
}

/// Seed of the `index`-th independent stream derived from `base`.
///
/// Two rounds of the SplitMix64 finalizer: `mix(base ^ mix(index + φ))`
/// with `φ = 0x9E3779B97F4A7C15`.
pub fn stream_seed(base: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(base ^ mix(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}
