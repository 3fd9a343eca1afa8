//! Shared numerical primitives: ridge regression with an unpenalized
//! intercept, residualization against the AI signals, seeded fold plans and
//! cross-fitted out-of-fold predictions.

mod crossfit;
mod folds;
mod knn;
mod residual;

pub use crossfit::{cross_fit_oof, cross_fit_oof_with};
pub use folds::{make_folds, FoldPlan};
pub use knn::{nearest_neighbors, KNearest, KNearestModel};
pub use residual::{residualize, residualize_with, GRAM_EPSILON};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_checked;

/// Fitted linear model `y ≈ X·coefficients + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    #[serde(serialize_with = "crate::linalg::serde_dense::vector", deserialize_with = "crate::linalg::serde_dense::vector_de")]
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn width(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.width());
        self.intercept + x.iter().zip(self.coefficients.iter()).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// A regression method that can be fit on a design and a target.
pub trait Regressor: Sync {
    type Fitted: Predictor + Send + Sync;

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self::Fitted>;
}

pub trait Predictor {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>>;
}

/// Ridge regression as a [`Regressor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ridge {
    pub lambda: f64,
}

impl Regressor for Ridge {
    type Fitted = RidgeModel;

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RidgeModel> {
        ridge_fit(x, y, self.lambda)
    }
}

impl Predictor for RidgeModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        ridge_predict(self, x)
    }
}

/// Minimizes `Σ(yᵢ − xᵢᵀβ − c)² + λ‖β‖²` through the penalized normal
/// equations on centered data. The intercept is never penalized.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<RidgeModel> {
    let targets = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    Ok(ridge_fit_multi(x, &targets, lambda)?.remove(0))
}

/// One ridge fit per column of `targets`, sharing a single factorization.
pub fn ridge_fit_multi(x: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<Vec<RidgeModel>> {
    let n = x.nrows();
    if n != targets.nrows() {
        return Err(Error::Dimension {
            context: "ridge_fit rows",
            expected: n,
            found: targets.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "ridge_fit",
            needed: 1,
            found: 0,
        });
    }
    check_lambda(lambda)?;

    let x_mean = column_means(x);
    let y_mean = column_means(targets);
    let d = x.ncols();
    if d == 0 {
        return Ok(y_mean
            .iter()
            .map(|&m| RidgeModel {
                coefficients: DVector::zeros(0),
                intercept: m,
                lambda,
            })
            .collect());
    }
    let xc = center(x, &x_mean);
    let yc = center(targets, &y_mean);
    let mut gram = xc.tr_mul(&xc);
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let chol = cholesky_checked(gram, "ridge_fit normal equations")?;
    let beta = chol.solve(&rhs);
    Ok((0..targets.ncols())
        .map(|t| {
            let coefficients = beta.column(t).into_owned();
            let intercept = y_mean[t] - x_mean.dot(&coefficients);
            RidgeModel {
                coefficients,
                intercept,
                lambda,
            }
        })
        .collect())
}

/// `ŷ = Xβ + c`.
pub fn ridge_predict(model: &RidgeModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.width() {
        return Err(Error::Dimension {
            context: "ridge_predict columns",
            expected: model.width(),
            found: x.ncols(),
        });
    }
    let mut out = x * &model.coefficients;
    out.add_scalar_mut(model.intercept);
    Ok(out)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge penalty must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn center(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (c, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[c]);
    }
    out
}
