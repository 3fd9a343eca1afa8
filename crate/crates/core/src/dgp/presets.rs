//! Shipped synthetic designs.
//!
//! Every preset uses one column per aspect and the latent construction
//! `A_j = λ_j H_j + b_j + τ_j e_j` with `e ~ N(0, I)` independent of `H`, so
//! `Σ_AA = ΛΣ_HHΛ + diag(τ²)`, `Σ_AH = ΛΣ_HH` and `E[A] = b`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::{DgpSpec, Heteroskedasticity};
use crate::data::Subset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Exchangeable aspects with equicorrelated human scores.
    Symmetric,
    /// Two strongly correlated aspects with opposite outcome weights; only
    /// their difference matters, so neither is useful alone.
    PlantedPair,
    /// Only the first human score enters the outcome.
    SingleInformative,
    /// Faithful but offset AI scores.
    BiasedAi,
    /// Symmetric design whose human residual variance grows with the first
    /// AI score.
    Heteroskedastic,
}

struct Latent {
    sigma_hh: DMatrix<f64>,
    loading: Vec<f64>,
    bias: Vec<f64>,
    noise: Vec<f64>,
}

impl Latent {
    fn into_spec(self, name: &str, beta: Vec<f64>, intercept: f64, noise_std: f64) -> DgpSpec {
        let j = self.loading.len();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.loading.clone()));
        let tau2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            j,
            self.noise.iter().map(|t| t * t),
        ));
        let s_aa = &lam * &self.sigma_hh * &lam + tau2;
        let s_ah = &lam * &self.sigma_hh;
        let mut cov = vec![vec![0.0; 2 * j]; 2 * j];
        for r in 0..j {
            for c in 0..j {
                cov[r][c] = s_aa[(r, c)];
                cov[r][j + c] = s_ah[(r, c)];
                cov[j + c][r] = s_ah[(r, c)];
                cov[j + r][j + c] = self.sigma_hh[(r, c)];
            }
        }
        let mut mean = self.bias.clone();
        mean.extend(std::iter::repeat_n(0.0, j));
        DgpSpec {
            name: Some(name.to_string()),
            a_widths: vec![1; j],
            h_widths: vec![1; j],
            mean,
            covariance: cov,
            gamma: vec![0.0; j],
            beta,
            intercept,
            noise_std,
            ai_bias: (self.bias.iter().any(|b| *b != 0.0)).then(|| self.bias.clone()),
            heteroskedastic: None,
        }
    }
}

fn equicorrelated(j: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(j, j, |r, c| if r == c { 1.0 } else { rho })
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Symmetric,
        Preset::PlantedPair,
        Preset::SingleInformative,
        Preset::BiasedAi,
        Preset::Heteroskedastic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Symmetric => "symmetric",
            Preset::PlantedPair => "planted-pair",
            Preset::SingleInformative => "single-informative",
            Preset::BiasedAi => "biased-ai",
            Preset::Heteroskedastic => "heteroskedastic",
        }
    }

    /// Indices of the complementary pair in the planted-pair design:
    /// `(2, 7)` when `J ≥ 8`, otherwise the first and last aspects.
    pub fn planted_pair(aspects: usize) -> Subset {
        let pair = if aspects >= 8 { vec![2, 7] } else { vec![0, aspects - 1] };
        Subset::new(pair, aspects).expect("planted pair needs at least two aspects")
    }

    pub fn build(self, aspects: usize) -> Result<DgpSpec> {
        let j = aspects;
        if j == 0 {
            return Err(Error::InvalidArgument("a preset needs at least one aspect".into()));
        }
        let spec = match self {
            Preset::Symmetric => Latent {
                sigma_hh: equicorrelated(j, 0.3),
                loading: vec![0.7; j],
                bias: vec![0.0; j],
                noise: vec![0.7; j],
            }
            .into_spec(self.name(), vec![0.5; j], 1.0, 1.0),
            Preset::PlantedPair => {
                if j < 2 {
                    return Err(Error::InvalidArgument("planted-pair needs at least two aspects".into()));
                }
                let pair = Preset::planted_pair(j);
                let (p, q) = (pair.indices()[0], pair.indices()[1]);
                let mut sigma_hh = DMatrix::identity(j, j);
                sigma_hh[(p, q)] = 0.9;
                sigma_hh[(q, p)] = 0.9;
                let mut beta = vec![0.5; j];
                beta[p] = 2.0;
                beta[q] = -2.0;
                Latent {
                    sigma_hh,
                    loading: vec![0.6; j],
                    bias: vec![0.0; j],
                    noise: vec![0.8; j],
                }
                .into_spec(self.name(), beta, 0.0, 1.0)
            }
            Preset::SingleInformative => {
                let mut beta = vec![0.0; j];
                beta[0] = 2.0;
                Latent {
                    sigma_hh: DMatrix::identity(j, j),
                    loading: vec![0.7; j],
                    bias: vec![0.0; j],
                    noise: vec![0.7; j],
                }
                .into_spec(self.name(), beta, 5.0, 0.5)
            }
            Preset::BiasedAi => Latent {
                sigma_hh: equicorrelated(j, 0.2),
                loading: vec![1.0; j],
                bias: (0..j).map(|i| 0.15 * i as f64).collect(),
                noise: vec![0.3; j],
            }
            .into_spec(self.name(), vec![0.3; j], 1.0, 1.0),
            Preset::Heteroskedastic => {
                let mut spec = Preset::Symmetric.build(j)?;
                spec.name = Some(self.name().to_string());
                spec.heteroskedastic = Some(Heteroskedasticity {
                    driver: 0,
                    strength: 4.0,
                });
                spec
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::InvalidArgument(format!("unknown preset `{s}` (expected one of {})", names.join(", ")))
            })
    }
}
