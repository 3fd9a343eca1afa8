use nalgebra::{DMatrix, DVector};

use super::{Predictor, Regressor};
use crate::error::{Error, Result};

/// Rows of `points` among the `k` nearest to `query` in Euclidean distance.
///
/// Rows tied with the `k`-th distance are all included, so the result has
/// at least `k` entries and does not depend on row order.
pub fn nearest_neighbors(points: &DMatrix<f64>, query: &[f64], k: usize) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || n == 0 {
        return Err(Error::InsufficientData {
            context: "nearest-neighbour search",
            needed: 1,
            found: k.min(n),
        });
    }
    if query.len() != points.ncols() {
        return Err(Error::Dimension {
            context: "nearest-neighbour query width",
            expected: points.ncols(),
            found: query.len(),
        });
    }
    let k = k.min(n);
    let dist: Vec<f64> = (0..n)
        .map(|r| {
            query
                .iter()
                .enumerate()
                .map(|(c, q)| (points[(r, c)] - q).powi(2))
                .sum()
        })
        .collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let radius = sorted[k - 1];
    Ok((0..n).filter(|&r| dist[r] <= radius).collect())
}

/// k-nearest-neighbour averaging as a [`Regressor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KNearest {
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct KNearestModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    k: usize,
}

impl Regressor for KNearest {
    type Fitted = KNearestModel;

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<KNearestModel> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                context: "k-nearest training rows",
                expected: y.len(),
                found: x.nrows(),
            });
        }
        if self.k == 0 || y.is_empty() {
            return Err(Error::InsufficientData {
                context: "k-nearest fit",
                needed: 1,
                found: 0,
            });
        }
        Ok(KNearestModel {
            x: x.clone(),
            y: y.clone(),
            k: self.k,
        })
    }
}

impl KNearestModel {
    pub fn predict_row(&self, z: &[f64]) -> Result<f64> {
        let nb = nearest_neighbors(&self.x, z, self.k)?;
        Ok(nb.iter().map(|&r| self.y[r]).sum::<f64>() / nb.len() as f64)
    }
}

impl Predictor for KNearestModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let rows: Result<Vec<f64>> = (0..x.nrows())
            .map(|r| {
                let row: Vec<f64> = x.row(r).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect();
        Ok(DVector::from_vec(rows?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_expand_the_neighbourhood() {
        let pts = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 1.0, 5.0]);
        assert_eq!(nearest_neighbors(&pts, &[0.0], 2).unwrap(), vec![0, 1, 2]);
        assert_eq!(nearest_neighbors(&pts, &[5.0], 1).unwrap(), vec![3]);
        let constant = DMatrix::from_element(5, 2, 1.0);
        assert_eq!(nearest_neighbors(&constant, &[9.0, 9.0], 1).unwrap().len(), 5);
    }

    #[test]
    fn knn_averages_neighbours() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 10.0, 11.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 10.0, 20.0]);
        let m = KNearest { k: 2 }.fit(&x, &y).unwrap();
        assert_eq!(m.predict_row(&[0.2]).unwrap(), 2.0);
        assert_eq!(m.predict_row(&[10.4]).unwrap(), 15.0);
        assert!(nearest_neighbors(&x, &[0.0], 0).is_err());
    }
}
