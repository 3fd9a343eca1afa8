//! Observed feature construction: queried aspects carry their human block,
//! unqueried aspects carry a prediction of it from the AI signals, and a
//! per-aspect indicator records which is which.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AspectBlocks, Dataset, Subset};
use crate::error::{Error, Result};
use crate::regression::{ridge_fit_multi, RidgeModel};

/// Per-column ridge models approximating `E[H | A]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    models: Vec<RidgeModel>,
    lambda: f64,
}

/// Fits one ridge regression (with intercept) of each column of `h` on `a`.
pub fn fit_imputer(a: &DMatrix<f64>, h: &DMatrix<f64>, lambda: f64) -> Result<Imputer> {
    if a.nrows() != h.nrows() {
        return Err(Error::Dimension {
            context: "fit_imputer rows",
            expected: a.nrows(),
            found: h.nrows(),
        });
    }
    if a.nrows() < 2 {
        return Err(Error::InsufficientData {
            context: "fit_imputer",
            needed: 2,
            found: a.nrows(),
        });
    }
    Ok(Imputer {
        models: ridge_fit_multi(a, h, lambda)?,
        lambda,
    })
}

impl Imputer {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn models(&self) -> &[RidgeModel] {
        &self.models
    }

    pub fn h_dim(&self) -> usize {
        self.models.len()
    }

    pub fn a_dim(&self) -> usize {
        self.models.first().map_or(0, RidgeModel::width)
    }

    pub fn predict_row(&self, a_row: &[f64]) -> Result<Vec<f64>> {
        if a_row.len() != self.a_dim() {
            return Err(Error::Dimension {
                context: "imputer input width",
                expected: self.a_dim(),
                found: a_row.len(),
            });
        }
        Ok(self.models.iter().map(|m| m.predict_row(a_row)).collect())
    }

    pub fn predict(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != self.a_dim() {
            return Err(Error::Dimension {
                context: "imputer input width",
                expected: self.a_dim(),
                found: a.ncols(),
            });
        }
        let mut out = DMatrix::zeros(a.nrows(), self.h_dim());
        for (c, m) in self.models.iter().enumerate() {
            let mut col = a * &m.coefficients;
            col.add_scalar_mut(m.intercept);
            out.set_column(c, &col);
        }
        Ok(out)
    }
}

/// Observed features for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub a: Vec<f64>,
    /// Human block values: exact where queried, imputed elsewhere.
    pub h: Vec<f64>,
    pub queried: Vec<bool>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.a.len() + self.h.len() + self.queried.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[a, h, indicators]` as one numeric row.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.h);
        v.extend(self.queried.iter().map(|&q| if q { 1.0 } else { 0.0 }));
        v
    }
}

pub fn build_features(
    a_row: &[f64],
    h_row: &[f64],
    pi: &Subset,
    imputer: &Imputer,
    blocks: &AspectBlocks,
) -> Result<FeatureVector> {
    if a_row.len() != blocks.a_dim() {
        return Err(Error::Dimension {
            context: "build_features AI row",
            expected: blocks.a_dim(),
            found: a_row.len(),
        });
    }
    if h_row.len() != blocks.h_dim() || imputer.h_dim() != blocks.h_dim() {
        return Err(Error::Dimension {
            context: "build_features human row",
            expected: blocks.h_dim(),
            found: h_row.len().min(imputer.h_dim()),
        });
    }
    pi.check(blocks.aspects())?;
    let queried = pi.membership(blocks.aspects());
    let mut h = if queried.iter().all(|&q| q) {
        h_row.to_vec()
    } else {
        imputer.predict_row(a_row)?
    };
    for j in pi.indices() {
        let r = blocks.h_range(*j);
        h[r.clone()].copy_from_slice(&h_row[r]);
    }
    Ok(FeatureVector {
        a: a_row.to_vec(),
        h,
        queried,
    })
}

/// Feature matrix with one row per instance; `selections[i]` is the subset
/// queried for row `i`.
pub fn build_feature_matrix(ds: &Dataset, selections: &[Subset], imputer: &Imputer) -> Result<DMatrix<f64>> {
    if selections.len() != ds.n() {
        return Err(Error::Dimension {
            context: "build_feature_matrix selections",
            expected: ds.n(),
            found: selections.len(),
        });
    }
    let blocks = ds.blocks();
    let width = blocks.a_dim() + blocks.h_dim() + blocks.aspects();
    let mut out = DMatrix::zeros(ds.n(), width);
    for (i, pi) in selections.iter().enumerate() {
        let a_row: Vec<f64> = ds.a().row(i).iter().copied().collect();
        let h_row: Vec<f64> = ds.h().row(i).iter().copied().collect();
        let f = build_features(&a_row, &h_row, pi, imputer, blocks)?;
        out.set_row(i, &DVector::from_vec(f.to_vec()).transpose());
    }
    Ok(out)
}
