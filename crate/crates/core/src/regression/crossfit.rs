use nalgebra::{DMatrix, DVector};

use super::{FoldPlan, Predictor, Regressor, Ridge};
use crate::error::{Error, Result};

/// Out-of-fold ridge predictions: row `i` is predicted by a model trained on
/// every fold except the one containing `i`.
pub fn cross_fit_oof(x: &DMatrix<f64>, y: &DVector<f64>, folds: &FoldPlan, lambda: f64) -> Result<DVector<f64>> {
    cross_fit_oof_with(&Ridge { lambda }, x, y, folds)
}

pub fn cross_fit_oof_with<R: Regressor>(
    regressor: &R,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: &FoldPlan,
) -> Result<DVector<f64>> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::Dimension {
            context: "cross_fit_oof rows",
            expected: n,
            found: x.nrows(),
        });
    }
    if folds.n() != n {
        return Err(Error::Dimension {
            context: "cross_fit_oof fold plan",
            expected: n,
            found: folds.n(),
        });
    }
    let mut out = DVector::zeros(n);
    for fold in 0..folds.k() {
        let train = folds.train_rows(fold);
        if train.len() < 2 {
            return Err(Error::InsufficientData {
                context: "cross-fitting training complement",
                needed: 2,
                found: train.len(),
            });
        }
        let test = folds.test_rows(fold);
        let model = regressor.fit(&x.select_rows(&train), &y.select_rows(&train))?;
        let pred = model.predict(&x.select_rows(&test))?;
        for (p, &row) in pred.iter().zip(&test) {
            out[row] = *p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::make_folds;

    #[test]
    fn constant_target() {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let y = DVector::from_element(20, 2.5);
        let plan = make_folds(20, 5, 0).unwrap();
        let oof = cross_fit_oof(&x, &y, &plan, 1.0).unwrap();
        for v in oof.iter() {
            assert_close!(*v, 2.5, 1e-12);
        }
    }

    #[test]
    fn leave_one_out_on_exact_linear_data() {
        let n = 12;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i + 1) as f64).powi(j as i32 + 1) * 0.1);
        let y = DVector::from_fn(n, |i, _| 1.0 + 2.0 * x[(i, 0)] - 0.5 * x[(i, 1)]);
        let plan = make_folds(n, n, 4).unwrap();
        let oof = cross_fit_oof(&x, &y, &plan, 0.0).unwrap();
        for i in 0..n {
            assert_close!(oof[i], y[i], 1e-8);
        }
    }

    #[test]
    fn prediction_ignores_own_row() {
        let n = 10;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let y = DVector::from_fn(n, |i, _| (i as f64).sin());
        let plan = make_folds(n, 5, 2).unwrap();
        let base = cross_fit_oof(&x, &y, &plan, 0.3).unwrap();
        let mut y2 = y.clone();
        y2[3] += 100.0;
        let moved = cross_fit_oof(&x, &y2, &plan, 0.3).unwrap();
        assert_eq!(base[3], moved[3]);
    }

    #[test]
    fn tiny_training_complement_errors() {
        let x = DMatrix::from_fn(2, 1, |i, _| i as f64);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        let plan = make_folds(2, 2, 0).unwrap();
        assert!(matches!(
            cross_fit_oof(&x, &y, &plan, 1.0),
            Err(Error::InsufficientData { .. })
        ));
    }
}
