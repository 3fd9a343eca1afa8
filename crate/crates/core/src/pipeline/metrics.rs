use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression error summary on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// MAE, RMSE and `R² = 1 − SSE/SST`.
pub fn metrics(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<Metrics> {
    let n = y_true.len();
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "metrics",
            needed: 1,
            found: 0,
        });
    }
    if y_pred.len() != n {
        return Err(Error::Dimension {
            context: "metrics predictions",
            expected: n,
            found: y_pred.len(),
        });
    }
    let resid = y_true - y_pred;
    let sse = resid.norm_squared();
    let mean = y_true.sum() / n as f64;
    let sst: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedRSquared);
    }
    Ok(Metrics {
        mae: resid.iter().map(|r| r.abs()).sum::<f64>() / n as f64,
        rmse: (sse / n as f64).sqrt(),
        r2: 1.0 - sse / sst,
    })
}

/// Mean and half-width of a 95% normal interval over independent values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub half_width: f64,
}

pub(crate) const Z95: f64 = 1.959_963_984_540_054;

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                half_width: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        };
        Summary { mean, half_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mae: Summary,
    pub rmse: Summary,
    pub r2: Summary,
}

impl MetricsSummary {
    pub fn of(values: &[Metrics]) -> MetricsSummary {
        let pick = |f: fn(&Metrics) -> f64| values.iter().map(f).collect::<Vec<_>>();
        MetricsSummary {
            mae: Summary::of(&pick(|m| m.mae)),
            rmse: Summary::of(&pick(|m| m.rmse)),
            r2: Summary::of(&pick(|m| m.r2)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn perfect_prediction() {
        let y = dv(&[1.0, 2.0, 4.0]);
        assert_eq!(
            metrics(&y, &y).unwrap(),
            Metrics {
                mae: 0.0,
                rmse: 0.0,
                r2: 1.0
            }
        );
    }

    #[test]
    fn mean_prediction_has_zero_r2() {
        let y = dv(&[1.0, 2.0, 6.0]);
        assert_close!(metrics(&y, &dv(&[3.0; 3])).unwrap().r2, 0.0, 1e-15);
    }

    #[test]
    fn two_point_arithmetic() {
        let m = metrics(&dv(&[0.0, 2.0]), &dv(&[1.0, 1.0])).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2), (1.0, 1.0, 0.0));
    }

    #[test]
    fn constant_truth_is_an_error() {
        assert!(matches!(metrics(&dv(&[1.0, 1.0]), &dv(&[1.0, 2.0])), Err(Error::UndefinedRSquared)));
        assert!(metrics(&dv(&[]), &dv(&[])).is_err());
        assert!(metrics(&dv(&[1.0, 2.0]), &dv(&[1.0])).is_err());
    }

    #[test]
    fn summary_interval() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_close!(s.half_width, Z95 * (2.0f64 / 2.0).sqrt(), 1e-15);
        assert_eq!(Summary::of(&[5.0]).half_width, 0.0);
    }
}
